use proofee_core::adversary::{CoalitionBids, CollusionCase};
use proofee_core::baselines::MechanismSpec;
use proofee_core::market::SimulationConfig;
use proofee_core::oracle::InstanceParams;
use proofee_core::{AgentId, AuctionInput, ProverBid};
use serde::{Deserialize, Serialize};

/// A scenario file. The `kind` field selects the command it feeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    Auction {
        input: AuctionInput,
    },
    Verify {
        #[serde(default)]
        params: InstanceParams,
        #[serde(default = "default_instances")]
        instances: u64,
    },
    Attack {
        #[serde(default)]
        input: Option<AuctionInput>,
        attack: AttackSpec,
    },
    Simulate {
        config: SimulationConfig,
    },
    Compare {
        mechanisms: Vec<MechanismSpec>,
        #[serde(default)]
        instances: Vec<SeededInstance>,
        #[serde(default)]
        generate: Option<Generate>,
    },
}

fn default_instances() -> u64 {
    10_000
}

impl Scenario {
    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::Auction { .. } => "auction",
            Scenario::Verify { .. } => "verify",
            Scenario::Attack { .. } => "attack",
            Scenario::Simulate { .. } => "simulate",
            Scenario::Compare { .. } => "compare",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeededInstance {
    pub seed: u64,
    pub input: AuctionInput,
}

/// Random instances seeded `params.seed`, `params.seed + 1`, ...
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generate {
    #[serde(default)]
    pub params: InstanceParams,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpec {
    CapacityUnderreport {
        prover_id: AgentId,
    },
    UserSybil {
        prover_id: AgentId,
        max_sybils: usize,
    },
    ProverSplit {
        prover_id: AgentId,
        #[serde(default = "default_parts")]
        max_parts: usize,
    },
    CollusionProverUser {
        prover_id: AgentId,
        user_id: AgentId,
    },
    CollusionTwoProver {
        prover_a: AgentId,
        prover_b: AgentId,
    },
    /// Builds the capacity counterexample and searches it.
    CapacityCounterexample {
        provers: Vec<ProverBid>,
        rank: usize,
    },
    /// Builds a collusion counterexample and measures the targeted deviation.
    CollusionCounterexample {
        case: CollusionCase,
        bids: CoalitionBids,
    },
}

fn default_parts() -> usize {
    2
}

impl AttackSpec {
    pub fn needs_input(&self) -> bool {
        !matches!(
            self,
            AttackSpec::CapacityCounterexample { .. } | AttackSpec::CollusionCounterexample { .. }
        )
    }
}
