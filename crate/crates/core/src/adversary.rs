//! Attack searches and counterexample constructions.
//!
//! Every search holds non-coalition bids at their declared values and
//! enumerates a finite deviation space built from pivotal values, so each
//! result is exact for that space. Among equally profitable strategies the
//! one closest to truthful bidding wins, then the lexicographically smallest.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanism::{
    run_auction, utilities, AgentId, AuctionInput, BidProfile, Clearing, ClearingRule, Proofee,
    ProverBid, TaskBid,
};
use crate::oracle::{other_values, pivotal_set};

/// Largest number of parts a prover split may use.
pub const MAX_SPLIT_PARTS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdversaryError {
    #[error("unknown prover `{0}`")]
    UnknownProver(AgentId),
    #[error("unknown user `{0}`")]
    UnknownUser(AgentId),
    #[error("a coalition needs two distinct provers, got `{0}` twice")]
    SameProver(AgentId),
    #[error("split into {0} parts is outside 1..={MAX_SPLIT_PARTS}")]
    SplitParts(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("{0} is odd; the construction needs an even sum")]
    Parity(&'static str),
    #[error("deviation equals honest bidding")]
    NoDeviation,
    #[error("case {kind:?} does not describe this deviation")]
    KindMismatch { kind: CollusionCase },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    CapacityUnderreport,
    UserSybil,
    ProverSplit,
    CollusionProverUser,
    CollusionTwoProver,
}

/// A declared `(capacity, unit_cost)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProverDeclaration {
    pub capacity: u64,
    pub unit_cost: u64,
}

impl ProverDeclaration {
    pub fn new(capacity: u64, unit_cost: u64) -> Self {
        ProverDeclaration {
            capacity,
            unit_cost,
        }
    }
}

/// Bids placed by the attacker(s).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Strategy {
    Capacity {
        capacity: u64,
    },
    /// Extra tasks appended after every genuine task.
    SybilTasks {
        fees: Vec<u64>,
    },
    /// Parts submitted in place of the prover, in this order.
    Split {
        parts: Vec<ProverDeclaration>,
    },
    ProverUser {
        fee: u64,
        prover: ProverDeclaration,
    },
    TwoProvers {
        a: ProverDeclaration,
        b: ProverDeclaration,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackResult {
    pub attack_kind: AttackKind,
    pub attacker_ids: Vec<AgentId>,
    pub honest_utility: i64,
    pub attack_utility: i64,
    pub strategy: Strategy,
    pub welfare_before: i64,
    pub welfare_after: i64,
}

impl AttackResult {
    pub fn gain(&self) -> i64 {
        self.attack_utility - self.honest_utility
    }
}

/// Keeps the best candidate seen: higher utility, then smaller key.
struct Best<K, S> {
    utility: i64,
    key: K,
    strategy: S,
    welfare: i64,
}

fn offer<K: Ord, S>(
    best: &mut Option<Best<K, S>>,
    utility: i64,
    key: K,
    make: impl FnOnce() -> (S, i64),
) {
    let better = match best {
        None => true,
        Some(b) => utility > b.utility || (utility == b.utility && key < b.key),
    };
    if better {
        let (strategy, welfare) = make();
        *best = Some(Best {
            utility,
            key,
            strategy,
            welfare,
        });
    }
}

/// Calls `f` with every non-decreasing `k`-tuple drawn from sorted `values`,
/// in lexicographic order.
fn for_each_multiset(values: &[u64], k: usize, f: &mut impl FnMut(&[u64])) {
    fn rec(values: &[u64], start: usize, k: usize, buf: &mut Vec<u64>, f: &mut impl FnMut(&[u64])) {
        if buf.len() == k {
            f(buf);
            return;
        }
        for i in start..values.len() {
            buf.push(values[i]);
            rec(values, i, k, buf, f);
            buf.pop();
        }
    }
    rec(values, 0, k, &mut Vec::with_capacity(k), f);
}

/// Calls `f` with every ordered split of `total` into `parts` positive
/// integers, in lexicographic order.
fn for_each_composition(total: u64, parts: usize, f: &mut impl FnMut(&[u64])) {
    fn rec(left: u64, parts: usize, buf: &mut Vec<u64>, f: &mut impl FnMut(&[u64])) {
        if parts == 1 {
            buf.push(left);
            f(buf);
            buf.pop();
            return;
        }
        for first in 1..=left.saturating_sub(parts as u64 - 1) {
            buf.push(first);
            rec(left - first, parts - 1, buf, f);
            buf.pop();
        }
    }
    if parts >= 1 && total >= parts as u64 {
        rec(total, parts, &mut Vec::with_capacity(parts), f);
    }
}

/// Pivotal values for a coalition bid against every non-coalition value.
/// Two coalition bids may need to sit strictly between each other above the
/// maximum, hence the extra top value.
fn coalition_candidates(others: impl IntoIterator<Item = u64>) -> Vec<u64> {
    let mut set = pivotal_set(others);
    let top = *set.last().expect("pivotal set is never empty");
    set.push(top.saturating_add(1));
    set
}

/// Declared profile with the listed provers and tasks reset to the truth.
fn honest_profile(instance: &AuctionInput, provers: &[usize], tasks: &[usize]) -> BidProfile {
    let mut profile = BidProfile::declared(instance);
    for &j in provers {
        profile.capacities[j] = instance.provers[j].true_capacity;
        profile.costs[j] = instance.provers[j].true_cost;
    }
    for &i in tasks {
        profile.fees[i] = instance.tasks[i].true_value;
    }
    profile
}

#[derive(Clone, Copy)]
pub struct Adversary<'r> {
    rule: &'r dyn ClearingRule,
}

impl Default for Adversary<'static> {
    fn default() -> Self {
        Adversary { rule: &Proofee }
    }
}

impl<'r> Adversary<'r> {
    pub fn new(rule: &'r dyn ClearingRule) -> Self {
        Adversary { rule }
    }

    fn prover(&self, instance: &AuctionInput, id: &str) -> Result<usize, AdversaryError> {
        instance
            .prover_index(id)
            .ok_or_else(|| AdversaryError::UnknownProver(id.to_string()))
    }

    /// Looks up a task by task id, falling back to the first task of a user id.
    fn user(&self, instance: &AuctionInput, id: &str) -> Result<usize, AdversaryError> {
        instance
            .task_index(id)
            .or_else(|| instance.tasks.iter().position(|t| t.user_id == id))
            .ok_or_else(|| AdversaryError::UnknownUser(id.to_string()))
    }

    fn welfare(&self, clearing: &Clearing, instance: &AuctionInput) -> i64 {
        clearing.welfare(&instance.true_values(), &instance.true_costs())
    }

    /// Declared capacities `1..=true_capacity` with the true cost.
    pub fn capacity_underreport_search(
        &self,
        instance: &AuctionInput,
        prover_id: &str,
    ) -> Result<AttackResult, AdversaryError> {
        let j = self.prover(instance, prover_id)?;
        let truth = &instance.provers[j];
        let mut profile = honest_profile(instance, &[j], &[]);
        let honest = self.rule.clear(&profile);
        let mut best = None;
        for capacity in (1..=truth.true_capacity).rev() {
            profile.capacities[j] = capacity;
            let c = self.rule.clear(&profile);
            let key = truth.true_capacity - capacity;
            offer(&mut best, c.prover_utility(j, truth.true_cost), key, || {
                (Strategy::Capacity { capacity }, self.welfare(&c, instance))
            });
        }
        let best = best.expect("capacity is at least one");
        Ok(AttackResult {
            attack_kind: AttackKind::CapacityUnderreport,
            attacker_ids: vec![truth.prover_id.clone()],
            honest_utility: honest.prover_utility(j, truth.true_cost),
            attack_utility: best.utility,
            strategy: best.strategy,
            welfare_before: self.welfare(&honest, instance),
            welfare_after: best.welfare,
        })
    }

    /// Up to `max_sybils` fake tasks with pivotal fees. The prover bids
    /// truthfully and pays the user price on each allocated fake task; fake
    /// tasks carry zero value in the welfare.
    pub fn user_sybil_search(
        &self,
        instance: &AuctionInput,
        prover_id: &str,
        max_sybils: usize,
    ) -> Result<AttackResult, AdversaryError> {
        let j = self.prover(instance, prover_id)?;
        let truth = &instance.provers[j];
        let profile = honest_profile(instance, &[j], &[]);
        let n = profile.fees.len();
        let candidates = coalition_candidates(other_values(&profile, None, None));
        let mut values = instance.true_values();
        let costs = instance.true_costs();
        let honest = self.rule.clear(&profile);
        let honest_utility = honest.prover_utility(j, truth.true_cost);
        let mut best = None;
        for count in 0..=max_sybils {
            values.resize(n + count, 0);
            for_each_multiset(&candidates, count, &mut |fees| {
                let mut p = profile.clone();
                p.fees.extend_from_slice(fees);
                let c = self.rule.clear(&p);
                let paid = (n..n + count).filter(|&i| c.task_served[i]).count() as i64
                    * c.user_price as i64;
                let utility = c.prover_utility(j, truth.true_cost) - paid;
                offer(&mut best, utility, (count, fees.to_vec()), || {
                    (
                        Strategy::SybilTasks {
                            fees: fees.to_vec(),
                        },
                        c.welfare(&values, &costs),
                    )
                });
            });
        }
        let best = best.expect("zero Sybils is always a candidate");
        Ok(AttackResult {
            attack_kind: AttackKind::UserSybil,
            attacker_ids: vec![truth.prover_id.clone()],
            honest_utility,
            attack_utility: best.utility,
            strategy: best.strategy,
            welfare_before: self.welfare(&honest, instance),
            welfare_after: best.welfare,
        })
    }

    /// Splits the prover's true capacity into at most `max_parts` parts with
    /// pivotal cost bids. Every part really costs the prover's true cost.
    pub fn prover_split_search(
        &self,
        instance: &AuctionInput,
        prover_id: &str,
        max_parts: usize,
    ) -> Result<AttackResult, AdversaryError> {
        if !(1..=MAX_SPLIT_PARTS).contains(&max_parts) {
            return Err(AdversaryError::SplitParts(max_parts));
        }
        let j = self.prover(instance, prover_id)?;
        let truth = &instance.provers[j];
        let profile = honest_profile(instance, &[j], &[]);
        let candidates = coalition_candidates(other_values(&profile, None, Some(j)));
        let values = instance.true_values();
        let true_costs = instance.true_costs();
        let honest = self.rule.clear(&profile);
        let mut best = None;
        let max_parts = max_parts.min(truth.true_capacity as usize);
        for k in 1..=max_parts {
            let costs_with = |parts: &[u64]| -> Vec<u64> {
                let mut v = Vec::with_capacity(true_costs.len() + parts.len());
                v.extend_from_slice(&true_costs[..j]);
                v.extend(parts.iter().map(|_| truth.true_cost));
                v.extend_from_slice(&true_costs[j + 1..]);
                v
            };
            let part_true_costs = costs_with(&vec![0; k]);
            for_each_multiset(&candidates, k, &mut |costs| {
                let distance: u64 = costs.iter().map(|c| c.abs_diff(truth.true_cost)).sum();
                for_each_composition(truth.true_capacity, k, &mut |caps| {
                    let mut p = profile.clone();
                    p.capacities.splice(j..=j, caps.iter().copied());
                    p.costs.splice(j..=j, costs.iter().copied());
                    let c = self.rule.clear(&p);
                    let utility: i64 = (j..j + k)
                        .map(|q| c.prover_utility(q, truth.true_cost))
                        .sum();
                    let parts: Vec<ProverDeclaration> = caps
                        .iter()
                        .zip(costs)
                        .map(|(&s, &p)| ProverDeclaration::new(s, p))
                        .collect();
                    offer(&mut best, utility, (k, distance, parts.clone()), || {
                        (
                            Strategy::Split { parts },
                            c.welfare(&values, &part_true_costs),
                        )
                    });
                });
            });
        }
        let best = best.expect("one part at the true cost is always a candidate");
        Ok(AttackResult {
            attack_kind: AttackKind::ProverSplit,
            attacker_ids: vec![truth.prover_id.clone()],
            honest_utility: honest.prover_utility(j, truth.true_cost),
            attack_utility: best.utility,
            strategy: best.strategy,
            welfare_before: self.welfare(&honest, instance),
            welfare_after: best.welfare,
        })
    }

    /// Joint search over the user's fee and the prover's cost and capacity.
    pub fn collusion_prover_user_search(
        &self,
        instance: &AuctionInput,
        prover_id: &str,
        user_id: &str,
    ) -> Result<AttackResult, AdversaryError> {
        let j = self.prover(instance, prover_id)?;
        let i = self.user(instance, user_id)?;
        let prover = &instance.provers[j];
        let task = &instance.tasks[i];
        let profile = honest_profile(instance, &[j], &[i]);
        let candidates = coalition_candidates(other_values(&profile, Some(i), Some(j)));
        let joint = |c: &Clearing| {
            c.user_utility(i, task.true_value) + c.prover_utility(j, prover.true_cost)
        };
        let honest = self.rule.clear(&profile);
        let mut best = None;
        let mut p = profile.clone();
        for &fee in &candidates {
            for &cost in &candidates {
                for capacity in 1..=prover.true_capacity {
                    p.fees[i] = fee;
                    p.costs[j] = cost;
                    p.capacities[j] = capacity;
                    let c = self.rule.clear(&p);
                    let distance = fee.abs_diff(task.true_value)
                        + cost.abs_diff(prover.true_cost)
                        + (prover.true_capacity - capacity);
                    offer(
                        &mut best,
                        joint(&c),
                        (distance, fee, cost, capacity),
                        || {
                            let strategy = Strategy::ProverUser {
                                fee,
                                prover: ProverDeclaration::new(capacity, cost),
                            };
                            (strategy, self.welfare(&c, instance))
                        },
                    );
                }
            }
        }
        let best = best.expect("candidate sets are never empty");
        Ok(AttackResult {
            attack_kind: AttackKind::CollusionProverUser,
            attacker_ids: vec![prover.prover_id.clone(), task.task_id.clone()],
            honest_utility: joint(&honest),
            attack_utility: best.utility,
            strategy: best.strategy,
            welfare_before: self.welfare(&honest, instance),
            welfare_after: best.welfare,
        })
    }

    /// Joint search over both provers' costs and capacities.
    pub fn collusion_two_prover_search(
        &self,
        instance: &AuctionInput,
        prover_a: &str,
        prover_b: &str,
    ) -> Result<AttackResult, AdversaryError> {
        let a = self.prover(instance, prover_a)?;
        let b = self.prover(instance, prover_b)?;
        if a == b {
            return Err(AdversaryError::SameProver(prover_a.to_string()));
        }
        let (pa, pb) = (&instance.provers[a], &instance.provers[b]);
        let profile = honest_profile(instance, &[a, b], &[]);
        let others = profile.fees.iter().copied().chain(
            profile
                .costs
                .iter()
                .enumerate()
                .filter(|(q, _)| *q != a && *q != b)
                .map(|(_, &c)| c),
        );
        let candidates = coalition_candidates(others);
        let joint =
            |c: &Clearing| c.prover_utility(a, pa.true_cost) + c.prover_utility(b, pb.true_cost);
        let honest = self.rule.clear(&profile);
        let mut best = None;
        let mut p = profile.clone();
        for &cost_a in &candidates {
            for cap_a in 1..=pa.true_capacity {
                for &cost_b in &candidates {
                    for cap_b in 1..=pb.true_capacity {
                        p.costs[a] = cost_a;
                        p.capacities[a] = cap_a;
                        p.costs[b] = cost_b;
                        p.capacities[b] = cap_b;
                        let c = self.rule.clear(&p);
                        let distance = cost_a.abs_diff(pa.true_cost)
                            + cost_b.abs_diff(pb.true_cost)
                            + (pa.true_capacity - cap_a)
                            + (pb.true_capacity - cap_b);
                        let da = ProverDeclaration::new(cap_a, cost_a);
                        let db = ProverDeclaration::new(cap_b, cost_b);
                        offer(&mut best, joint(&c), (distance, da, db), || {
                            (
                                Strategy::TwoProvers { a: da, b: db },
                                self.welfare(&c, instance),
                            )
                        });
                    }
                }
            }
        }
        let best = best.expect("candidate sets are never empty");
        Ok(AttackResult {
            attack_kind: AttackKind::CollusionTwoProver,
            attacker_ids: vec![pa.prover_id.clone(), pb.prover_id.clone()],
            honest_utility: joint(&honest),
            attack_utility: best.utility,
            strategy: best.strategy,
            welfare_before: self.welfare(&honest, instance),
            welfare_after: best.welfare,
        })
    }
}

pub fn capacity_underreport_search(
    instance: &AuctionInput,
    prover_id: &str,
) -> Result<AttackResult, AdversaryError> {
    Adversary::default().capacity_underreport_search(instance, prover_id)
}

pub fn user_sybil_search(
    instance: &AuctionInput,
    prover_id: &str,
    max_sybils: usize,
) -> Result<AttackResult, AdversaryError> {
    Adversary::default().user_sybil_search(instance, prover_id, max_sybils)
}

pub fn prover_split_search(
    instance: &AuctionInput,
    prover_id: &str,
    max_parts: usize,
) -> Result<AttackResult, AdversaryError> {
    Adversary::default().prover_split_search(instance, prover_id, max_parts)
}

pub fn collusion_prover_user_search(
    instance: &AuctionInput,
    prover_id: &str,
    user_id: &str,
) -> Result<AttackResult, AdversaryError> {
    Adversary::default().collusion_prover_user_search(instance, prover_id, user_id)
}

pub fn collusion_two_prover_search(
    instance: &AuctionInput,
    prover_a: &str,
    prover_b: &str,
) -> Result<AttackResult, AdversaryError> {
    Adversary::default().collusion_two_prover_search(instance, prover_a, prover_b)
}

/// `S_N` tasks all bidding the cost of the prover ranked `j + 1`, with
/// `provers` submitted as given. On this instance prover `j` (1-based cost
/// rank) earns `s_j * (p_{j+1} - p_j)` when honest and strictly less with
/// any smaller capacity or with any allocated fake task.
pub fn build_capacity_counterexample(
    provers: &[ProverBid],
    j: usize,
) -> Result<AuctionInput, AdversaryError> {
    let n = provers.len();
    if j == 0 || j >= n {
        return Err(AdversaryError::Precondition(format!(
            "rank {j} must be in 1..{n}"
        )));
    }
    let mut ranked: Vec<&ProverBid> = provers.iter().collect();
    ranked.sort_by_key(|p| p.unit_cost);
    let (pj, next) = (ranked[j - 1].unit_cost, ranked[j].unit_cost);
    if next <= pj {
        return Err(AdversaryError::Precondition(format!(
            "cost at rank {} ({next}) must exceed cost at rank {j} ({pj})",
            j + 1
        )));
    }
    let total: u64 = provers.iter().map(|p| p.capacity).sum();
    let tasks = (1..=total)
        .map(|k| TaskBid::new(format!("t{k}"), format!("u{k}"), next))
        .collect();
    Ok(AuctionInput::new(tasks, provers.to_vec()))
}

/// Prover id at 1-based cost rank `j`, matching [`build_capacity_counterexample`].
pub fn ranked_prover_id(provers: &[ProverBid], j: usize) -> Option<&str> {
    let mut ranked: Vec<&ProverBid> = provers.iter().collect();
    ranked.sort_by_key(|p| p.unit_cost);
    ranked.get(j.checked_sub(1)?).map(|p| p.prover_id.as_str())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollusionCase {
    /// Prover and user: same fee and cost, smaller capacity.
    CapacityOnly,
    /// Prover and user: the user raises its fee.
    FeeUp,
    /// Prover and user: the user lowers its fee.
    FeeDown,
    /// Prover and user: same fee, different cost.
    CostChange,
    /// Two provers: same costs, smaller capacities.
    TwoCapacityOnly,
    /// Two provers: the higher-cost prover raises its cost.
    HighCostUp,
    /// Two provers: the higher-cost prover lowers its cost.
    HighCostDown,
    /// Two provers: the lower-cost prover lowers its cost.
    LowCostDown,
    /// Two provers: the lower-cost prover raises its cost.
    LowCostUp,
}

impl CollusionCase {
    pub const ALL: [CollusionCase; 9] = [
        CollusionCase::CapacityOnly,
        CollusionCase::FeeUp,
        CollusionCase::FeeDown,
        CollusionCase::CostChange,
        CollusionCase::TwoCapacityOnly,
        CollusionCase::HighCostUp,
        CollusionCase::HighCostDown,
        CollusionCase::LowCostDown,
        CollusionCase::LowCostUp,
    ];

    pub fn is_two_prover(self) -> bool {
        matches!(
            self,
            CollusionCase::TwoCapacityOnly
                | CollusionCase::HighCostUp
                | CollusionCase::HighCostDown
                | CollusionCase::LowCostDown
                | CollusionCase::LowCostUp
        )
    }
}

/// Honest and deviating bids of a coalition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CoalitionBids {
    ProverUser {
        fee: u64,
        prover: ProverDeclaration,
        deviant_fee: u64,
        deviant_prover: ProverDeclaration,
    },
    /// `low` must have the strictly smaller true cost.
    TwoProvers {
        low: ProverDeclaration,
        high: ProverDeclaration,
        deviant_low: ProverDeclaration,
        deviant_high: ProverDeclaration,
    },
}

/// An environment on which a coalition's targeted deviation loses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub case: CollusionCase,
    pub honest: AuctionInput,
    pub deviated: AuctionInput,
    pub coalition: Vec<AgentId>,
    /// Guaranteed lower bound on the joint utility drop.
    pub bound: i64,
}

impl Counterexample {
    pub fn honest_utility(&self) -> i64 {
        joint_utility(&self.honest, &self.coalition)
    }

    pub fn deviant_utility(&self) -> i64 {
        joint_utility(&self.deviated, &self.coalition)
    }

    pub fn utility_drop(&self) -> i64 {
        self.honest_utility() - self.deviant_utility()
    }
}

/// Sum of utilities of the listed task and prover ids under `run_auction`.
pub fn joint_utility(instance: &AuctionInput, ids: &[AgentId]) -> i64 {
    let report =
        utilities(instance, &run_auction(instance)).expect("outcome derived from the same input");
    ids.iter()
        .map(|id| {
            report
                .prover_utilities
                .get(id)
                .or_else(|| report.user_utilities.get(id))
                .copied()
                .unwrap_or(0)
        })
        .sum()
}

fn half(sum: u64, what: &'static str) -> Result<u64, AdversaryError> {
    if sum % 2 == 1 {
        Err(AdversaryError::Parity(what))
    } else {
        Ok(sum / 2)
    }
}

fn env_tasks(prefix: &str, count: u64, fee: u64) -> Vec<TaskBid> {
    (1..=count)
        .map(|k| TaskBid::new(format!("{prefix}{k}"), format!("{prefix}{k}"), fee))
        .collect()
}

fn env_provers(bids: &[(u64, u64)]) -> Vec<ProverBid> {
    bids.iter()
        .enumerate()
        .map(|(k, &(s, p))| ProverBid::new(format!("e{}", k + 1), s, p))
        .collect()
}

/// Builds the environment for `case` in which the coalition's deviation in
/// `bids` strictly lowers its joint utility. Coalition agents are submitted
/// first.
pub fn build_collusion_counterexample(
    case: CollusionCase,
    bids: &CoalitionBids,
) -> Result<Counterexample, AdversaryError> {
    match *bids {
        CoalitionBids::ProverUser {
            fee,
            prover,
            deviant_fee,
            deviant_prover,
        } => prover_user_case(case, fee, prover, deviant_fee, deviant_prover),
        CoalitionBids::TwoProvers {
            low,
            high,
            deviant_low,
            deviant_high,
        } => two_prover_case(case, low, high, deviant_low, deviant_high),
    }
}

fn check_capacity(
    truth: ProverDeclaration,
    deviant: ProverDeclaration,
) -> Result<(), AdversaryError> {
    if truth.capacity == 0 || deviant.capacity == 0 || deviant.capacity > truth.capacity {
        return Err(AdversaryError::Precondition(format!(
            "declared capacity {} must be in 1..={}",
            deviant.capacity, truth.capacity
        )));
    }
    Ok(())
}

fn prover_user_case(
    case: CollusionCase,
    f: u64,
    truth: ProverDeclaration,
    fd: u64,
    dev: ProverDeclaration,
) -> Result<Counterexample, AdversaryError> {
    check_capacity(truth, dev)?;
    if f == fd && truth == dev {
        return Err(AdversaryError::NoDeviation);
    }
    let (s, p, sd, pd) = (truth.capacity, truth.unit_cost, dev.capacity, dev.unit_cost);
    let mismatch = || AdversaryError::KindMismatch { kind: case };
    // fee-shift bound: d plus the margin lost on the prover's allocated units
    // when its cost bid crosses the environment price
    let shifted = |d: u64, price: u64| -> i64 {
        let extra = if pd > price && price > p {
            sd * (price - p)
        } else if pd < price && price < p {
            sd * (p - price)
        } else {
            0
        };
        (d + extra) as i64
    };
    let (shield, tasks, provers, bound) = match case {
        CollusionCase::CapacityOnly => {
            if !(fd == f && pd == p && sd < s) {
                return Err(mismatch());
            }
            if p == 0 {
                return Err(AdversaryError::Precondition("cost must be positive".into()));
            }
            (
                0,
                env_tasks("e", 2 * s, 2 * p),
                vec![(s, 2 * p)],
                ((s - sd) * p) as i64,
            )
        }
        CollusionCase::FeeUp => {
            if fd <= f {
                return Err(mismatch());
            }
            (
                0,
                env_tasks("e", 3 * s, fd),
                vec![(s, 0), (s, fd)],
                shifted(fd - f, fd),
            )
        }
        CollusionCase::FeeDown => {
            if fd >= f {
                return Err(mismatch());
            }
            let m = half(f + fd, "fee + deviant fee")?;
            (
                0,
                env_tasks("e", 3 * s, m),
                vec![(s, 0), (s, m)],
                shifted((f - fd) / 2, m),
            )
        }
        CollusionCase::CostChange => {
            if fd != f || pd == p {
                return Err(mismatch());
            }
            let m = half(p + pd, "cost + deviant cost")?;
            let shield = if f > m { s } else { 0 };
            (
                shield,
                env_tasks("e", 2 * s, m),
                vec![(s, m)],
                (sd * p.abs_diff(pd) / 2) as i64,
            )
        }
        _ => return Err(mismatch()),
    };
    let build = |fee: u64, declared: ProverDeclaration| {
        let mut all = env_tasks("x", shield, f);
        all.push(TaskBid::new("c_task", "c_user", fee).with_true_value(f));
        all.extend(tasks.iter().cloned());
        let mut ps = vec![
            ProverBid::new("c_prover", declared.capacity, declared.unit_cost).with_truth(s, p),
        ];
        ps.extend(env_provers(&provers));
        AuctionInput::new(all, ps)
    };
    Ok(Counterexample {
        case,
        honest: build(f, truth),
        deviated: build(fd, dev),
        coalition: vec!["c_prover".into(), "c_task".into()],
        bound,
    })
}

fn two_prover_case(
    case: CollusionCase,
    low: ProverDeclaration,
    high: ProverDeclaration,
    dev_low: ProverDeclaration,
    dev_high: ProverDeclaration,
) -> Result<Counterexample, AdversaryError> {
    check_capacity(low, dev_low)?;
    check_capacity(high, dev_high)?;
    if low == dev_low && high == dev_high {
        return Err(AdversaryError::NoDeviation);
    }
    let (s1, p1, s2, p2) = (low.capacity, low.unit_cost, high.capacity, high.unit_cost);
    if p1 >= p2 {
        return Err(AdversaryError::Precondition(format!(
            "low cost {p1} must be below high cost {p2}"
        )));
    }
    let (s1d, q1, s2d, q2) = (
        dev_low.capacity,
        dev_low.unit_cost,
        dev_high.capacity,
        dev_high.unit_cost,
    );
    let mismatch = || AdversaryError::KindMismatch { kind: case };
    let (tasks, provers, bound) = match case {
        CollusionCase::TwoCapacityOnly => {
            if q1 != p1 || q2 != p2 {
                return Err(mismatch());
            }
            let fee = 2 * p2;
            let bound = p2 * (s2 - s2d) + (2 * p2 - p1) * (s1 - s1d);
            (
                env_tasks("e", s1 + s2 + 1, fee),
                vec![(1, fee)],
                bound as i64,
            )
        }
        CollusionCase::HighCostUp | CollusionCase::HighCostDown => {
            let up = case == CollusionCase::HighCostUp;
            if (up && q2 <= p2) || (!up && q2 >= p2) {
                return Err(mismatch());
            }
            let m = half(p2 + q2, "high cost + deviant high cost")?;
            let bound = if up {
                s2 * (q2 - p2) / 2
            } else {
                s2d * (p2 - q2) / 2
            };
            (env_tasks("e", s1 + 2 * s2, m), vec![(s2, m)], bound as i64)
        }
        CollusionCase::LowCostDown | CollusionCase::LowCostUp => {
            let up = case == CollusionCase::LowCostUp;
            if (up && q1 <= p1) || (!up && q1 >= p1) {
                return Err(mismatch());
            }
            let m = half(p1 + q1, "low cost + deviant low cost")?;
            let bound = if up {
                s1 * (q1 - p1) / 2
            } else {
                s1d * (p1 - q1) / 2
            };
            (env_tasks("e", 2 * s1 + s2, m), vec![(s1, m)], bound as i64)
        }
        _ => return Err(mismatch()),
    };
    let build = |a: ProverDeclaration, b: ProverDeclaration| {
        let mut ps = vec![
            ProverBid::new("c_low", a.capacity, a.unit_cost).with_truth(s1, p1),
            ProverBid::new("c_high", b.capacity, b.unit_cost).with_truth(s2, p2),
        ];
        ps.extend(env_provers(&provers));
        AuctionInput::new(tasks.clone(), ps)
    };
    Ok(Counterexample {
        case,
        honest: build(low, high),
        deviated: build(dev_low, dev_high),
        coalition: vec!["c_low".into(), "c_high".into()],
        bound,
    })
}
