use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MarketError;
use crate::mechanism::{AgentId, AuctionInput, Outcome};

/// Account name used for coordinator events.
pub const COORDINATOR: &str = "coordinator";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Deposit,
    Payment,
    Slash,
    Refund,
}

/// Signed transfer: positive credits `agent`, negative debits it. Slashes
/// move collateral; everything else moves balances.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub round: u64,
    pub kind: EventKind,
    pub agent: AgentId,
    pub amount: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub refund_limit: u64,
    pub deposits: BTreeMap<AgentId, i64>,
    pub balances: BTreeMap<AgentId, i64>,
    pub coordinator_balance: i64,
    pub events: Vec<LedgerEvent>,
}

impl Ledger {
    pub fn new(refund_limit: u64) -> Self {
        Ledger {
            refund_limit,
            ..Ledger::default()
        }
    }

    pub fn deposit(&mut self, round: u64, prover_id: &str, amount: u64) {
        let event = LedgerEvent {
            round,
            kind: EventKind::Deposit,
            agent: prover_id.to_string(),
            amount: amount as i64,
        };
        self.apply(&event);
        self.events.push(event);
    }

    pub fn deposit_of(&self, prover_id: &str) -> i64 {
        self.deposits.get(prover_id).copied().unwrap_or(0)
    }

    pub fn balance_of(&self, agent: &str) -> i64 {
        self.balances.get(agent).copied().unwrap_or(0)
    }

    /// Collateral a prover needs before bidding capacity `capacity`.
    pub fn required_deposit(&self, capacity: u64) -> u64 {
        self.refund_limit.saturating_mul(capacity)
    }

    /// Eligibility of a prover bid: cost below the refund limit and enough
    /// collateral for the declared capacity.
    pub fn check_prover_bid(
        &self,
        prover_id: &str,
        capacity: u64,
        unit_cost: u64,
    ) -> Result<(), MarketError> {
        if capacity == 0 {
            return Err(MarketError::ZeroCapacity(prover_id.to_string()));
        }
        if unit_cost >= self.refund_limit {
            return Err(MarketError::CostNotBelowRefundLimit {
                cost: unit_cost,
                limit: self.refund_limit,
            });
        }
        let required = self.required_deposit(capacity);
        let available = self.deposit_of(prover_id);
        if available < required as i64 {
            return Err(MarketError::InsufficientDeposit {
                required,
                available,
            });
        }
        Ok(())
    }

    pub fn check_task_bid(&self, fee: u64) -> Result<(), MarketError> {
        if fee > self.refund_limit {
            return Err(MarketError::FeeAboveRefundLimit {
                fee,
                limit: self.refund_limit,
            });
        }
        Ok(())
    }

    /// Settles one round. A completing prover is paid its units at the unit
    /// payment and its users are charged the user price. A failing prover
    /// loses `units * refund_limit` of collateral and each of its users pays
    /// nothing and receives `refund_limit`. The coordinator takes the
    /// residual, so the returned events sum to zero. Nothing is applied if
    /// any check fails.
    pub fn settle(
        &mut self,
        round: u64,
        input: &AuctionInput,
        outcome: &Outcome,
        completions: &BTreeMap<AgentId, bool>,
    ) -> Result<Vec<LedgerEvent>, MarketError> {
        for id in completions.keys() {
            if !outcome.prover_allocations.contains_key(id) {
                return Err(MarketError::UnexpectedCompletion(id.clone()));
            }
        }
        let user_of: BTreeMap<&str, &str> = input
            .tasks
            .iter()
            .map(|t| (t.task_id.as_str(), t.user_id.as_str()))
            .collect();
        let mut delta = Vec::new();
        let event = |kind, agent: &str, amount| LedgerEvent {
            round,
            kind,
            agent: agent.to_string(),
            amount,
        };
        let mut deposits = self.deposits.clone();
        for (prover, &units) in &outcome.prover_allocations {
            let done = *completions
                .get(prover)
                .ok_or_else(|| MarketError::MissingCompletion(prover.clone()))?;
            let users = outcome
                .task_assignment
                .iter()
                .filter(|(_, p)| *p == prover)
                .map(|(t, _)| user_of.get(t.as_str()).copied().unwrap_or(t.as_str()));
            if done {
                delta.push(event(
                    EventKind::Payment,
                    prover,
                    (units * outcome.prover_unit_payment) as i64,
                ));
                for user in users {
                    delta.push(event(
                        EventKind::Payment,
                        user,
                        -(outcome.user_price as i64),
                    ));
                }
            } else {
                if self.refund_limit < outcome.user_price {
                    return Err(MarketError::RefundBelowPrice {
                        refund: self.refund_limit,
                        price: outcome.user_price,
                    });
                }
                let slash = (units * self.refund_limit) as i64;
                let held = deposits.entry(prover.clone()).or_insert(0);
                if *held < slash {
                    return Err(MarketError::InsufficientDeposit {
                        required: slash as u64,
                        available: *held,
                    });
                }
                *held -= slash;
                delta.push(event(EventKind::Slash, prover, -slash));
                for user in users {
                    delta.push(event(EventKind::Refund, user, self.refund_limit as i64));
                }
            }
        }
        let residual: i64 = -delta.iter().map(|e| e.amount).sum::<i64>();
        if residual != 0 {
            delta.push(event(EventKind::Payment, COORDINATOR, residual));
        }
        for e in &delta {
            self.apply(e);
        }
        self.events.extend(delta.iter().cloned());
        Ok(delta)
    }

    fn apply(&mut self, e: &LedgerEvent) {
        match e.kind {
            EventKind::Deposit | EventKind::Slash => {
                *self.deposits.entry(e.agent.clone()).or_insert(0) += e.amount
            }
            _ if e.agent == COORDINATOR => self.coordinator_balance += e.amount,
            _ => *self.balances.entry(e.agent.clone()).or_insert(0) += e.amount,
        }
    }
}

/// Net of a settle delta; zero when value is conserved.
pub fn net(events: &[LedgerEvent]) -> i64 {
    events.iter().map(|e| e.amount).sum()
}
