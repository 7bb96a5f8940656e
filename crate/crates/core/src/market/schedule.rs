use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::MarketError;
use crate::mechanism::AgentId;

/// Largest allowed ratio between consecutive capacities, kept as an exact
/// reduced fraction `num / den >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ChangeFactor {
    num: u64,
    den: u64,
}

impl ChangeFactor {
    pub fn new(num: u64, den: u64) -> Result<Self, MarketError> {
        if den == 0 || num < den {
            return Err(MarketError::InvalidFactor(format!("{num}/{den}")));
        }
        let g = num.gcd(&den);
        Ok(ChangeFactor {
            num: num / g,
            den: den / g,
        })
    }

    pub fn numer(self) -> u64 {
        self.num
    }

    pub fn denom(self) -> u64 {
        self.den
    }

    /// `max(a, b) / min(a, b) <= self`.
    pub fn allows(self, a: u64, b: u64) -> bool {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        lo > 0 && (hi as u128) * (self.den as u128) <= (lo as u128) * (self.num as u128)
    }
}

impl FromStr for ChangeFactor {
    type Err = MarketError;

    /// Accepts `a/b` or a decimal with at most six fractional digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || MarketError::InvalidFactor(s.to_string());
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let a = a.trim().parse().map_err(|_| bad())?;
            let b = b.trim().parse().map_err(|_| bad())?;
            return ChangeFactor::new(a, b);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 6 || !frac.bytes().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let scale = 10u64.pow(frac.len() as u32);
        let int: u64 = int.parse().map_err(|_| bad())?;
        let frac: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        let num = int
            .checked_mul(scale)
            .and_then(|v| v.checked_add(frac))
            .ok_or_else(bad)?;
        ChangeFactor::new(num, scale)
    }
}

impl fmt::Display for ChangeFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl Serialize for ChangeFactor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ChangeFactor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Float(f64),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Int(v) => v.to_string(),
            Raw::Float(v) => v.to_string(),
            Raw::Text(s) => s,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Capacity may change only every `epoch_length` rounds and by at most a
/// factor `max_change_factor` each time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacitySchedule {
    pub epoch_length: u64,
    pub max_change_factor: ChangeFactor,
    pub last_change_round: BTreeMap<AgentId, u64>,
    pub current_capacity: BTreeMap<AgentId, u64>,
}

impl CapacitySchedule {
    pub fn new(epoch_length: u64, max_change_factor: ChangeFactor) -> Result<Self, MarketError> {
        if epoch_length == 0 {
            return Err(MarketError::InvalidConfig(
                "epoch_length must be positive".into(),
            ));
        }
        Ok(CapacitySchedule {
            epoch_length,
            max_change_factor,
            last_change_round: BTreeMap::new(),
            current_capacity: BTreeMap::new(),
        })
    }

    /// Registration counts as a change at `round`.
    pub fn register(
        &mut self,
        prover_id: &str,
        capacity: u64,
        round: u64,
    ) -> Result<(), MarketError> {
        if capacity == 0 {
            return Err(MarketError::ZeroCapacity(prover_id.to_string()));
        }
        self.last_change_round.insert(prover_id.to_string(), round);
        self.current_capacity
            .insert(prover_id.to_string(), capacity);
        Ok(())
    }

    pub fn capacity(&self, prover_id: &str) -> Option<u64> {
        self.current_capacity.get(prover_id).copied()
    }

    /// Checks the epoch rule, then the factor rule. A request for the
    /// current capacity is accepted and changes nothing.
    pub fn validate_capacity_change(
        &mut self,
        prover_id: &str,
        new_capacity: u64,
        round: u64,
    ) -> Result<(), MarketError> {
        let current = self
            .capacity(prover_id)
            .ok_or_else(|| MarketError::UnknownProver(prover_id.to_string()))?;
        if new_capacity == current {
            return Ok(());
        }
        if new_capacity == 0 {
            return Err(MarketError::ZeroCapacity(prover_id.to_string()));
        }
        let last = self.last_change_round[prover_id];
        let elapsed = round.saturating_sub(last);
        if elapsed < self.epoch_length {
            return Err(MarketError::EpochNotElapsed {
                elapsed,
                required: self.epoch_length,
            });
        }
        if !self.max_change_factor.allows(current, new_capacity) {
            return Err(MarketError::FactorExceeded {
                from: current,
                to: new_capacity,
                limit: self.max_change_factor.to_string(),
            });
        }
        self.last_change_round.insert(prover_id.to_string(), round);
        self.current_capacity
            .insert(prover_id.to_string(), new_capacity);
        Ok(())
    }
}

/// Whether a `(round, capacity)` sequence, starting with registration,
/// obeys the schedule rule at every change.
pub fn trace_obeys(epoch_length: u64, factor: ChangeFactor, trace: &[(u64, u64)]) -> bool {
    let Some(&(mut last_round, mut cap)) = trace.first() else {
        return true;
    };
    for &(round, next) in &trace[1..] {
        if next == cap {
            continue;
        }
        if round < last_round + epoch_length || !factor.allows(cap, next) {
            return false;
        }
        last_round = round;
        cap = next;
    }
    true
}
