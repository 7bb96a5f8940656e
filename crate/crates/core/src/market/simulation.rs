use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    digest, CapacitySchedule, ChangeFactor, Ledger, LedgerEvent, MarketError, SealedBid,
    SealedRound,
};
use crate::canonical::to_canonical_json;
use crate::mechanism::{run_auction, AgentId, Outcome};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub id: AgentId,
    /// Fee bid every round.
    pub fee: u64,
    /// True value; defaults to the fee.
    #[serde(default)]
    pub value: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityRequest {
    pub round: u64,
    pub capacity: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProverConfig {
    pub id: AgentId,
    pub capacity: u64,
    pub cost: u64,
    /// Probability of finishing allocated work in a round.
    pub reliability: f64,
    pub deposit: u64,
    #[serde(default)]
    pub capacity_changes: Vec<CapacityRequest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub rounds: u64,
    pub seed: u64,
    pub refund_limit: u64,
    pub epoch_length: u64,
    pub max_change_factor: ChangeFactor,
    pub users: Vec<UserConfig>,
    pub provers: Vec<ProverConfig>,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), MarketError> {
        let bad = |m: String| Err(MarketError::InvalidConfig(m));
        if self.epoch_length == 0 {
            return bad("epoch_length must be positive".into());
        }
        let mut ids = BTreeSet::new();
        for id in self
            .users
            .iter()
            .map(|u| &u.id)
            .chain(self.provers.iter().map(|p| &p.id))
        {
            if !ids.insert(id) {
                return bad(format!("duplicate id `{id}`"));
            }
        }
        for p in &self.provers {
            if p.capacity == 0 {
                return bad(format!("prover `{}` has zero capacity", p.id));
            }
            if !(0.0..=1.0).contains(&p.reliability) {
                return bad(format!(
                    "prover `{}` reliability {} outside [0, 1]",
                    p.id, p.reliability
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacityChange {
    pub prover_id: AgentId,
    pub from: u64,
    pub to: u64,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub agent_id: AgentId,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: u64,
    pub outcome: Outcome,
    /// One flag per allocated prover.
    pub completions: BTreeMap<AgentId, bool>,
    pub ledger_delta: Vec<LedgerEvent>,
    pub capacity_changes: Vec<CapacityChange>,
    /// Bids dropped at reveal.
    pub excluded: Vec<Exclusion>,
}

impl RoundRecord {
    pub fn to_json_line(&self) -> String {
        to_canonical_json(self).expect("records always serialize")
    }
}

/// Simulation state between rounds.
pub struct Simulation {
    config: SimulationConfig,
    rng: ChaCha8Rng,
    ledger: Ledger,
    schedule: CapacitySchedule,
    round: u64,
}

impl Simulation {
    pub fn new(config: SimulationConfig) -> Result<Self, MarketError> {
        config.validate()?;
        let mut ledger = Ledger::new(config.refund_limit);
        let mut schedule = CapacitySchedule::new(config.epoch_length, config.max_change_factor)?;
        for p in &config.provers {
            ledger.deposit(0, &p.id, p.deposit);
            schedule.register(&p.id, p.capacity, 0)?;
        }
        Ok(Simulation {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            ledger,
            schedule,
            round: 0,
        })
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn schedule(&self) -> &CapacitySchedule {
        &self.schedule
    }

    /// Rounds are numbered from 1; registration happens at round 0.
    pub fn step(&mut self) -> Result<RoundRecord, MarketError> {
        self.round += 1;
        let round = self.round;
        let mut capacity_changes = Vec::new();
        for p in &self.config.provers {
            for req in p.capacity_changes.iter().filter(|r| r.round == round) {
                let from = self.schedule.capacity(&p.id).expect("registered");
                let result = self
                    .schedule
                    .validate_capacity_change(&p.id, req.capacity, round);
                capacity_changes.push(CapacityChange {
                    prover_id: p.id.clone(),
                    from,
                    to: req.capacity,
                    accepted: result.is_ok(),
                    reason: result.err().map(|e| e.to_string()),
                });
            }
        }

        let mut bids = Vec::new();
        for u in &self.config.users {
            bids.push(SealedBid::Task {
                task_id: format!("{}@{round}", u.id),
                user_id: u.id.clone(),
                fee: u.fee,
            });
        }
        for p in &self.config.provers {
            bids.push(SealedBid::Prover {
                prover_id: p.id.clone(),
                capacity: self.schedule.capacity(&p.id).expect("registered"),
                unit_cost: p.cost,
            });
        }
        let mut sealed = SealedRound::new();
        let mut nonces = Vec::with_capacity(bids.len());
        for bid in &bids {
            let nonce: [u8; 16] = self.rng.gen();
            sealed.commit(bid.agent_id(), digest(bid, &nonce))?;
            nonces.push(nonce);
        }
        sealed.open_reveals()?;
        let mut excluded = Vec::new();
        for (bid, nonce) in bids.into_iter().zip(nonces) {
            let id = bid.agent_id().to_string();
            if let Err(e) = sealed.reveal(&id, bid, nonce, &self.ledger) {
                excluded.push(Exclusion {
                    agent_id: id,
                    reason: e.to_string(),
                });
            }
        }
        let mut input = sealed.close()?;
        let values: BTreeMap<&str, u64> = self
            .config
            .users
            .iter()
            .map(|u| (u.id.as_str(), u.value.unwrap_or(u.fee)))
            .collect();
        for t in &mut input.tasks {
            t.true_value = values[t.user_id.as_str()];
        }

        let outcome = run_auction(&input);
        let mut completions = BTreeMap::new();
        for p in &self.config.provers {
            if outcome.prover_allocations.contains_key(&p.id) {
                completions.insert(p.id.clone(), self.rng.gen_bool(p.reliability));
            }
        }
        let ledger_delta = self.ledger.settle(round, &input, &outcome, &completions)?;
        Ok(RoundRecord {
            round_index: round,
            outcome,
            completions,
            ledger_delta,
            capacity_changes,
            excluded,
        })
    }
}

pub fn run_simulation(config: &SimulationConfig) -> Result<Vec<RoundRecord>, MarketError> {
    let mut sim = Simulation::new(config.clone())?;
    (0..config.rounds).map(|_| sim.step()).collect()
}
