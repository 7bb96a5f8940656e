//! Multi-round market: collateral and slashing, sealed bids, and the
//! capacity-change schedule.

use thiserror::Error;

pub mod commit;
pub mod ledger;
pub mod schedule;
pub mod simulation;

pub use commit::{digest, Commitment, Digest, Nonce, Phase, SealedBid, SealedRound};
pub use ledger::{net, EventKind, Ledger, LedgerEvent, COORDINATOR};
pub use schedule::{trace_obeys, CapacitySchedule, ChangeFactor};
pub use simulation::{
    run_simulation, CapacityChange, CapacityRequest, ProverConfig, RoundRecord, Simulation,
    SimulationConfig, UserConfig,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MarketError {
    #[error("expected phase {expected:?}, round is in {actual:?}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("`{0}` already committed this round")]
    DuplicateCommit(String),
    #[error("`{0}` has no commitment this round")]
    NoCommitment(String),
    #[error("`{0}` already revealed")]
    AlreadyRevealed(String),
    #[error("commitment by `{committed}` revealed a bid for `{bid}`")]
    AgentMismatch { committed: String, bid: String },
    #[error("reveal by `{0}` does not match its commitment")]
    DigestMismatch(String),
    #[error("fee {fee} exceeds refund limit {limit}")]
    FeeAboveRefundLimit { fee: u64, limit: u64 },
    #[error("unit cost {cost} is not below refund limit {limit}")]
    CostNotBelowRefundLimit { cost: u64, limit: u64 },
    #[error("deposit {available} is below the required {required}")]
    InsufficientDeposit { required: u64, available: i64 },
    #[error("prover `{0}` declared zero capacity")]
    ZeroCapacity(String),
    #[error("refund {refund} is below user price {price}")]
    RefundBelowPrice { refund: u64, price: u64 },
    #[error("completion flag for unallocated prover `{0}`")]
    UnexpectedCompletion(String),
    #[error("no completion flag for allocated prover `{0}`")]
    MissingCompletion(String),
    #[error("unknown prover `{0}`")]
    UnknownProver(String),
    #[error("only {elapsed} rounds since the last capacity change, need {required}")]
    EpochNotElapsed { elapsed: u64, required: u64 },
    #[error("capacity change {from} -> {to} exceeds factor {limit}")]
    FactorExceeded { from: u64, to: u64, limit: String },
    #[error("invalid change factor `{0}`")]
    InvalidFactor(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}
