use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use super::{Ledger, MarketError};
use crate::canonical::to_canonical_bytes;
use crate::mechanism::{AgentId, AuctionInput, ProverBid, TaskBid};

pub type Nonce = [u8; 16];

/// The declared part of a bid; this is what gets hashed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "side", rename_all = "lowercase")]
pub enum SealedBid {
    Task {
        task_id: AgentId,
        user_id: AgentId,
        fee: u64,
    },
    Prover {
        prover_id: AgentId,
        capacity: u64,
        unit_cost: u64,
    },
}

impl SealedBid {
    /// Task id or prover id.
    pub fn agent_id(&self) -> &str {
        match self {
            SealedBid::Task { task_id, .. } => task_id,
            SealedBid::Prover { prover_id, .. } => prover_id,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest(pub [u8; 32]);

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({self})")
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

/// SHA-256 over the canonical JSON of `bid` followed by `nonce`.
pub fn digest(bid: &SealedBid, nonce: &Nonce) -> Digest {
    let mut h = Sha256::new();
    h.update(to_canonical_bytes(bid).expect("bids always serialize"));
    h.update(nonce);
    Digest(h.finalize().into())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Commitment {
    pub agent_id: AgentId,
    pub digest: Digest,
    pub revealed: Option<(SealedBid, Nonce)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Commit,
    Reveal,
    Closed,
}

/// One sealed-bid round: commitments, then reveals, then the auction input
/// built from valid reveals in commitment order.
#[derive(Clone, Debug)]
pub struct SealedRound {
    phase: Phase,
    commitments: Vec<Commitment>,
}

impl Default for SealedRound {
    fn default() -> Self {
        SealedRound {
            phase: Phase::Commit,
            commitments: Vec::new(),
        }
    }
}

impl SealedRound {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn commitments(&self) -> &[Commitment] {
        &self.commitments
    }

    fn expect_phase(&self, expected: Phase) -> Result<(), MarketError> {
        if self.phase != expected {
            return Err(MarketError::WrongPhase {
                expected,
                actual: self.phase,
            });
        }
        Ok(())
    }

    pub fn commit(&mut self, agent_id: &str, digest: Digest) -> Result<(), MarketError> {
        self.expect_phase(Phase::Commit)?;
        if self.commitments.iter().any(|c| c.agent_id == agent_id) {
            return Err(MarketError::DuplicateCommit(agent_id.to_string()));
        }
        self.commitments.push(Commitment {
            agent_id: agent_id.to_string(),
            digest,
            revealed: None,
        });
        Ok(())
    }

    pub fn open_reveals(&mut self) -> Result<(), MarketError> {
        self.expect_phase(Phase::Commit)?;
        self.phase = Phase::Reveal;
        Ok(())
    }

    /// Accepts `bid` if it matches the agent's commitment and passes the
    /// ledger's eligibility rules.
    pub fn reveal(
        &mut self,
        agent_id: &str,
        bid: SealedBid,
        nonce: Nonce,
        ledger: &Ledger,
    ) -> Result<(), MarketError> {
        self.expect_phase(Phase::Reveal)?;
        let c = self
            .commitments
            .iter_mut()
            .find(|c| c.agent_id == agent_id)
            .ok_or_else(|| MarketError::NoCommitment(agent_id.to_string()))?;
        if c.revealed.is_some() {
            return Err(MarketError::AlreadyRevealed(agent_id.to_string()));
        }
        if bid.agent_id() != agent_id {
            return Err(MarketError::AgentMismatch {
                committed: agent_id.to_string(),
                bid: bid.agent_id().to_string(),
            });
        }
        if digest(&bid, &nonce) != c.digest {
            return Err(MarketError::DigestMismatch(agent_id.to_string()));
        }
        match &bid {
            SealedBid::Task { fee, .. } => ledger.check_task_bid(*fee)?,
            SealedBid::Prover {
                prover_id,
                capacity,
                unit_cost,
            } => ledger.check_prover_bid(prover_id, *capacity, *unit_cost)?,
        }
        c.revealed = Some((bid, nonce));
        Ok(())
    }

    /// Ends the round. Unrevealed commitments are dropped without penalty.
    pub fn close(&mut self) -> Result<AuctionInput, MarketError> {
        self.expect_phase(Phase::Reveal)?;
        self.phase = Phase::Closed;
        let mut tasks = Vec::new();
        let mut provers = Vec::new();
        for c in &self.commitments {
            match &c.revealed {
                Some((
                    SealedBid::Task {
                        task_id,
                        user_id,
                        fee,
                    },
                    _,
                )) => tasks.push(TaskBid::new(task_id.clone(), user_id.clone(), *fee)),
                Some((
                    SealedBid::Prover {
                        prover_id,
                        capacity,
                        unit_cost,
                    },
                    _,
                )) => provers.push(ProverBid::new(prover_id.clone(), *capacity, *unit_cost)),
                None => {}
            }
        }
        Ok(AuctionInput::new(tasks, provers))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(id: &str, fee: u64) -> SealedBid {
        SealedBid::Task {
            task_id: id.into(),
            user_id: format!("user-{id}"),
            fee,
        }
    }

    fn ledger() -> Ledger {
        let mut l = Ledger::new(12);
        l.deposit(0, "p1", 48);
        l
    }

    #[test]
    fn canonical_bid_bytes() {
        let bytes = to_canonical_bytes(&task("t1", 5)).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            r#"{"fee":5,"side":"task","task_id":"t1","user_id":"user-t1"}"#
        );
    }

    #[test]
    fn digest_is_sha256_of_bytes_and_nonce() {
        let nonce = [7u8; 16];
        let mut raw = to_canonical_bytes(&task("t1", 5)).unwrap();
        raw.extend_from_slice(&nonce);
        let expected: [u8; 32] = Sha256::digest(&raw).into();
        assert_eq!(digest(&task("t1", 5), &nonce), Digest(expected));
        assert_ne!(
            digest(&task("t1", 5), &nonce),
            digest(&task("t1", 6), &nonce)
        );
        assert_eq!(digest(&task("t1", 5), &nonce).to_string().len(), 64);
    }

    #[test]
    fn phase_machine() {
        let mut r = SealedRound::new();
        let nonce = [1u8; 16];
        r.commit("t1", digest(&task("t1", 5), &nonce)).unwrap();
        assert_eq!(
            r.commit("t1", digest(&task("t1", 5), &nonce)),
            Err(MarketError::DuplicateCommit("t1".into()))
        );
        assert!(matches!(
            r.reveal("t1", task("t1", 5), nonce, &ledger()),
            Err(MarketError::WrongPhase { .. })
        ));
        r.open_reveals().unwrap();
        assert!(matches!(
            r.commit("t2", digest(&task("t2", 5), &nonce)),
            Err(MarketError::WrongPhase {
                expected: Phase::Commit,
                actual: Phase::Reveal
            })
        ));
        r.reveal("t1", task("t1", 5), nonce, &ledger()).unwrap();
        let input = r.close().unwrap();
        assert_eq!(input.tasks.len(), 1);
        assert_eq!(r.phase(), Phase::Closed);
    }

    #[test]
    fn reveal_failures() {
        let mut r = SealedRound::new();
        let nonce = [3u8; 16];
        let prover = SealedBid::Prover {
            prover_id: "p1".into(),
            capacity: 5,
            unit_cost: 2,
        };
        r.commit("t1", digest(&task("t1", 5), &nonce)).unwrap();
        r.commit("t2", digest(&task("t2", 13), &nonce)).unwrap();
        r.commit("p1", digest(&prover, &nonce)).unwrap();
        r.commit("t3", digest(&task("t3", 1), &nonce)).unwrap();
        r.open_reveals().unwrap();
        let mut flipped = nonce;
        flipped[0] ^= 1;
        let l = ledger();
        assert_eq!(
            r.reveal("t1", task("t1", 5), flipped, &l),
            Err(MarketError::DigestMismatch("t1".into()))
        );
        assert!(matches!(
            r.reveal("t1", task("t9", 5), nonce, &l),
            Err(MarketError::AgentMismatch { .. })
        ));
        assert_eq!(
            r.reveal("t9", task("t9", 5), nonce, &l),
            Err(MarketError::NoCommitment("t9".into()))
        );
        assert!(matches!(
            r.reveal("t2", task("t2", 13), nonce, &l),
            Err(MarketError::FeeAboveRefundLimit { fee: 13, limit: 12 })
        ));
        assert!(matches!(
            r.reveal("p1", prover, nonce, &l),
            Err(MarketError::InsufficientDeposit { required: 60, .. })
        ));
        r.reveal("t1", task("t1", 5), nonce, &l).unwrap();
        assert_eq!(
            r.reveal("t1", task("t1", 5), nonce, &l),
            Err(MarketError::AlreadyRevealed("t1".into()))
        );
        let input = r.close().unwrap();
        assert_eq!(input.tasks.len(), 1);
        assert!(input.provers.is_empty());
    }
}
