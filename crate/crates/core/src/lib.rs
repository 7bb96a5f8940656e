//! Double auction for zero-knowledge proof prover markets.
//!
//! * [`mechanism`]: allocation and pricing rule, utility and welfare accounting.
//! * [`oracle`]: brute-force deviation checks (budget balance, user and prover
//!   truthfulness) and the welfare-optimal matching.
//! * [`adversary`]: capacity misreporting, Sybil and collusion searches, and the
//!   instance constructors on which those deviations lose.
//! * [`market`]: multi-round market with deposits, slashing, sealed bids and a
//!   capacity-change schedule.
//! * [`baselines`]: simplified reference mechanisms for comparison.

pub mod adversary;
pub mod baselines;
pub mod canonical;
pub mod market;
pub mod mechanism;
pub mod oracle;

pub use mechanism::{
    feasible_count, rank, run_auction, run_auction_with, utilities, AgentId, AuctionInput,
    BidProfile, Clearing, ClearingRule, MechanismError, Outcome, Proofee, ProverBid,
    RankedInstance, TaskBid, UtilityReport,
};
