//! Allocation and pricing rule of the prover market double auction.
//!
//! Users submit tasks carrying a fee `f`; provers submit a capacity `s` and a
//! unit cost `p`. Tasks are ranked by fee (highest first) and provers by cost
//! (cheapest first), ties going to the earlier submission. Writing `S_j` for
//! the total capacity of the `j` cheapest provers and `f_k` for the `k`-th
//! highest fee (with `f_k = 0` past the last task), the mechanism picks the
//! largest `ell` in `[1, N-1]` with `p_{ell+1} <= f_{S_ell + 1}`.
//!
//! The first `ell` provers are allocated in full with the first `S_ell`
//! tasks. Every allocated task pays `f_{S_ell + 1}` and every allocated prover
//! is paid `p_{ell+1}` per unit. `ell = 0` means no trade.
//!
//! Two layers are exposed:
//!
//! * an identity-carrying layer ([`AuctionInput`], [`Outcome`],
//!   [`UtilityReport`]) used by the CLI, the market simulator and for
//!   canonical serialization;
//! * an index layer ([`BidProfile`], [`Clearing`]) that the deviation oracle
//!   and the adversary searches drive in tight loops without cloning ids.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type AgentId = String;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MechanismError {
    #[error("duplicate task id `{0}`")]
    DuplicateTask(AgentId),
    #[error("duplicate prover id `{0}`")]
    DuplicateProver(AgentId),
    #[error("prover `{0}` declares zero capacity")]
    ZeroCapacity(AgentId),
    #[error("outcome does not belong to this input: {0}")]
    InconsistentArguments(String),
}

/// A user's task with its declared fee and the value the user actually places
/// on it. The true value only matters for utility accounting.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "RawTaskBid")]
pub struct TaskBid {
    pub task_id: AgentId,
    pub user_id: AgentId,
    pub fee: u64,
    pub true_value: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTaskBid {
    task_id: AgentId,
    user_id: Option<AgentId>,
    fee: u64,
    true_value: Option<u64>,
}

impl From<RawTaskBid> for TaskBid {
    fn from(raw: RawTaskBid) -> Self {
        TaskBid {
            user_id: raw.user_id.unwrap_or_else(|| raw.task_id.clone()),
            true_value: raw.true_value.unwrap_or(raw.fee),
            task_id: raw.task_id,
            fee: raw.fee,
        }
    }
}

impl TaskBid {
    /// Truthful task: the fee equals the value.
    pub fn new(task_id: impl Into<AgentId>, user_id: impl Into<AgentId>, fee: u64) -> Self {
        TaskBid {
            task_id: task_id.into(),
            user_id: user_id.into(),
            fee,
            true_value: fee,
        }
    }

    pub fn with_true_value(mut self, value: u64) -> Self {
        self.true_value = value;
        self
    }
}

/// A prover's declared capacity and unit cost, plus its real ones.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "RawProverBid")]
pub struct ProverBid {
    pub prover_id: AgentId,
    pub capacity: u64,
    pub unit_cost: u64,
    pub true_capacity: u64,
    pub true_cost: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProverBid {
    prover_id: AgentId,
    capacity: u64,
    unit_cost: u64,
    true_capacity: Option<u64>,
    true_cost: Option<u64>,
}

impl From<RawProverBid> for ProverBid {
    fn from(raw: RawProverBid) -> Self {
        ProverBid {
            true_capacity: raw.true_capacity.unwrap_or(raw.capacity),
            true_cost: raw.true_cost.unwrap_or(raw.unit_cost),
            prover_id: raw.prover_id,
            capacity: raw.capacity,
            unit_cost: raw.unit_cost,
        }
    }
}

impl ProverBid {
    pub fn new(prover_id: impl Into<AgentId>, capacity: u64, unit_cost: u64) -> Self {
        ProverBid {
            prover_id: prover_id.into(),
            capacity,
            unit_cost,
            true_capacity: capacity,
            true_cost: unit_cost,
        }
    }

    pub fn with_truth(mut self, true_capacity: u64, true_cost: u64) -> Self {
        self.true_capacity = true_capacity;
        self.true_cost = true_cost;
        self
    }
}

/// One auction round's bids, in submission order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionInput {
    #[serde(default)]
    pub tasks: Vec<TaskBid>,
    #[serde(default)]
    pub provers: Vec<ProverBid>,
}

impl AuctionInput {
    pub fn new(tasks: Vec<TaskBid>, provers: Vec<ProverBid>) -> Self {
        AuctionInput { tasks, provers }
    }

    /// Truthful instance from bare numbers. Tasks are named `t1..`, owned by
    /// users `u1..`; provers are `p1..` and given as `(capacity, cost)`.
    pub fn from_values(fees: &[u64], provers: &[(u64, u64)]) -> Self {
        let tasks = fees
            .iter()
            .enumerate()
            .map(|(i, &fee)| TaskBid::new(format!("t{}", i + 1), format!("u{}", i + 1), fee))
            .collect();
        let provers = provers
            .iter()
            .enumerate()
            .map(|(j, &(cap, cost))| ProverBid::new(format!("p{}", j + 1), cap, cost))
            .collect();
        AuctionInput { tasks, provers }
    }

    pub fn validate(&self) -> Result<(), MechanismError> {
        let mut seen = BTreeSet::new();
        for t in &self.tasks {
            if !seen.insert(t.task_id.as_str()) {
                return Err(MechanismError::DuplicateTask(t.task_id.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for p in &self.provers {
            if !seen.insert(p.prover_id.as_str()) {
                return Err(MechanismError::DuplicateProver(p.prover_id.clone()));
            }
            if p.capacity == 0 || p.true_capacity == 0 {
                return Err(MechanismError::ZeroCapacity(p.prover_id.clone()));
            }
        }
        Ok(())
    }

    pub fn task_index(&self, task_id: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.task_id == task_id)
    }

    pub fn prover_index(&self, prover_id: &str) -> Option<usize> {
        self.provers.iter().position(|p| p.prover_id == prover_id)
    }

    pub fn true_values(&self) -> Vec<u64> {
        self.tasks.iter().map(|t| t.true_value).collect()
    }

    pub fn true_costs(&self) -> Vec<u64> {
        self.provers.iter().map(|p| p.true_cost).collect()
    }
}

/// Sorted views over an [`AuctionInput`].
#[derive(Clone, Debug)]
pub struct RankedInstance<'a> {
    pub tasks_desc: Vec<&'a TaskBid>,
    pub provers_asc: Vec<&'a ProverBid>,
    /// `prefix_capacity[j]` is the capacity of the `j + 1` cheapest provers.
    pub prefix_capacity: Vec<u64>,
    /// Ranked position to submission index, tasks.
    pub task_permutation: Vec<usize>,
    /// Ranked position to submission index, provers.
    pub prover_permutation: Vec<usize>,
}

impl RankedInstance<'_> {
    /// `f_k` with the 1-based rank `k`; zero past the last task.
    pub fn fee_at(&self, k: u64) -> u64 {
        fee_at_rank(k, |i| self.tasks_desc[i].fee, self.tasks_desc.len())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub ell: usize,
    /// Allocated task ids in rank order.
    pub allocated_tasks: Vec<AgentId>,
    pub prover_allocations: BTreeMap<AgentId, u64>,
    pub user_price: u64,
    pub prover_unit_payment: u64,
    pub coordinator_surplus: i64,
    /// Which prover serves each allocated task (rank order assignment).
    pub task_assignment: BTreeMap<AgentId, AgentId>,
}

impl Outcome {
    pub fn no_trade() -> Self {
        Outcome {
            ell: 0,
            allocated_tasks: Vec::new(),
            prover_allocations: BTreeMap::new(),
            user_price: 0,
            prover_unit_payment: 0,
            coordinator_surplus: 0,
            task_assignment: BTreeMap::new(),
        }
    }

    pub fn total_user_payments(&self) -> u64 {
        self.allocated_tasks.len() as u64 * self.user_price
    }

    pub fn total_prover_payments(&self) -> u64 {
        self.prover_allocations.values().sum::<u64>() * self.prover_unit_payment
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub user_utilities: BTreeMap<AgentId, i64>,
    pub prover_utilities: BTreeMap<AgentId, i64>,
    pub welfare: i64,
}

pub fn rank(input: &AuctionInput) -> RankedInstance<'_> {
    let task_permutation = task_order(input.tasks.iter().map(|t| t.fee));
    let prover_permutation = prover_order(input.provers.iter().map(|p| p.unit_cost));
    let provers_asc: Vec<&ProverBid> = prover_permutation
        .iter()
        .map(|&j| &input.provers[j])
        .collect();
    let prefix_capacity = prefix_sums(provers_asc.iter().map(|p| p.capacity));
    RankedInstance {
        tasks_desc: task_permutation.iter().map(|&i| &input.tasks[i]).collect(),
        provers_asc,
        prefix_capacity,
        task_permutation,
        prover_permutation,
    }
}

/// Largest `j` in `[1, N-1]` with `p_{j+1} <= f_{S_j + 1}`, or 0.
pub fn feasible_count(ranked: &RankedInstance<'_>) -> usize {
    largest_feasible(
        &ranked.prefix_capacity,
        |k| ranked.fee_at(k),
        |j| ranked.provers_asc[j].unit_cost,
    )
}

pub fn run_auction(input: &AuctionInput) -> Outcome {
    run_auction_with(&Proofee, input)
}

/// Runs an arbitrary clearing rule over `input` and names the result.
pub fn run_auction_with(rule: &dyn ClearingRule, input: &AuctionInput) -> Outcome {
    let clearing = rule.clear(&BidProfile::declared(input));
    clearing.to_outcome(input)
}

pub fn utilities(input: &AuctionInput, outcome: &Outcome) -> Result<UtilityReport, MechanismError> {
    let mut user_utilities: BTreeMap<AgentId, i64> =
        input.tasks.iter().map(|t| (t.task_id.clone(), 0)).collect();
    let mut prover_utilities: BTreeMap<AgentId, i64> = input
        .provers
        .iter()
        .map(|p| (p.prover_id.clone(), 0))
        .collect();
    let mut welfare = 0i64;

    for task_id in &outcome.allocated_tasks {
        let task = input
            .task_index(task_id)
            .map(|i| &input.tasks[i])
            .ok_or_else(|| {
                MechanismError::InconsistentArguments(format!("unknown task `{task_id}`"))
            })?;
        let u = task.true_value as i64 - outcome.user_price as i64;
        user_utilities.insert(task_id.clone(), u);
        welfare += task.true_value as i64;
    }
    for (prover_id, &units) in &outcome.prover_allocations {
        let prover = input
            .prover_index(prover_id)
            .map(|j| &input.provers[j])
            .ok_or_else(|| {
                MechanismError::InconsistentArguments(format!("unknown prover `{prover_id}`"))
            })?;
        let u = units as i64 * (outcome.prover_unit_payment as i64 - prover.true_cost as i64);
        prover_utilities.insert(prover_id.clone(), u);
        welfare -= units as i64 * prover.true_cost as i64;
    }
    Ok(UtilityReport {
        user_utilities,
        prover_utilities,
        welfare,
    })
}

/// Declared bids stripped of identities, in submission order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BidProfile {
    pub fees: Vec<u64>,
    pub capacities: Vec<u64>,
    pub costs: Vec<u64>,
}

impl BidProfile {
    pub fn declared(input: &AuctionInput) -> Self {
        BidProfile {
            fees: input.tasks.iter().map(|t| t.fee).collect(),
            capacities: input.provers.iter().map(|p| p.capacity).collect(),
            costs: input.provers.iter().map(|p| p.unit_cost).collect(),
        }
    }

    /// Every agent bids its true value, cost and capacity.
    pub fn truthful(input: &AuctionInput) -> Self {
        BidProfile {
            fees: input.tasks.iter().map(|t| t.true_value).collect(),
            capacities: input.provers.iter().map(|p| p.true_capacity).collect(),
            costs: input.provers.iter().map(|p| p.true_cost).collect(),
        }
    }
}

/// Index-level result of clearing a [`BidProfile`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clearing {
    pub task_order: Vec<usize>,
    pub prover_order: Vec<usize>,
    pub prefix_capacity: Vec<u64>,
    pub ell: usize,
    /// Number of tasks actually allocated: `min(S_ell, n)`.
    pub served: usize,
    pub user_price: u64,
    pub unit_payment: u64,
    /// Allocated units per prover, by submission index.
    pub prover_units: Vec<u64>,
    /// Allocation flag per task, by submission index.
    pub task_served: Vec<bool>,
}

impl Clearing {
    /// Ranks `profile` and computes prefix capacities; nothing allocated yet.
    pub fn ranked(profile: &BidProfile) -> Self {
        let task_order = task_order(profile.fees.iter().copied());
        let prover_order = prover_order(profile.costs.iter().copied());
        let prefix_capacity = prefix_sums(prover_order.iter().map(|&j| profile.capacities[j]));
        Clearing {
            task_served: vec![false; profile.fees.len()],
            prover_units: vec![0; profile.costs.len()],
            task_order,
            prover_order,
            prefix_capacity,
            ell: 0,
            served: 0,
            user_price: 0,
            unit_payment: 0,
        }
    }

    pub fn fee_at(&self, profile: &BidProfile, k: u64) -> u64 {
        fee_at_rank(
            k,
            |i| profile.fees[self.task_order[i]],
            self.task_order.len(),
        )
    }

    /// Allocates the first `ell` ranked provers in full with the first
    /// `S_ell` ranked tasks and sets both prices.
    pub fn allocate(&mut self, profile: &BidProfile, ell: usize) {
        self.ell = ell;
        self.prover_units.iter_mut().for_each(|u| *u = 0);
        self.task_served.iter_mut().for_each(|s| *s = false);
        if ell == 0 {
            self.served = 0;
            self.user_price = 0;
            self.unit_payment = 0;
            return;
        }
        let s_ell = self.prefix_capacity[ell - 1];
        self.user_price = self.fee_at(profile, s_ell + 1);
        self.unit_payment = profile.costs[self.prover_order[ell]];
        let mut remaining = self.task_order.len() as u64;
        for &j in &self.prover_order[..ell] {
            let units = profile.capacities[j].min(remaining);
            self.prover_units[j] = units;
            remaining -= units;
        }
        self.served = s_ell.min(self.task_order.len() as u64) as usize;
        for &i in &self.task_order[..self.served] {
            self.task_served[i] = true;
        }
    }

    pub fn allocated_tasks(&self) -> &[usize] {
        &self.task_order[..self.served]
    }

    pub fn user_utility(&self, task: usize, true_value: u64) -> i64 {
        if self.task_served[task] {
            true_value as i64 - self.user_price as i64
        } else {
            0
        }
    }

    pub fn prover_utility(&self, prover: usize, true_cost: u64) -> i64 {
        self.prover_units[prover] as i64 * (self.unit_payment as i64 - true_cost as i64)
    }

    /// Served value minus the real cost of the allocated units.
    pub fn welfare(&self, true_values: &[u64], true_costs: &[u64]) -> i64 {
        let value: i64 = self
            .allocated_tasks()
            .iter()
            .map(|&i| true_values[i] as i64)
            .sum();
        let cost: i64 = self
            .prover_units
            .iter()
            .zip(true_costs)
            .map(|(&u, &c)| u as i64 * c as i64)
            .sum();
        value - cost
    }

    pub fn coordinator_surplus(&self) -> i64 {
        let paid_in = self.served as i64 * self.user_price as i64;
        let paid_out: i64 =
            self.prover_units.iter().map(|&u| u as i64).sum::<i64>() * self.unit_payment as i64;
        paid_in - paid_out
    }

    /// Prover (submission index) serving each allocated task, rank order.
    pub fn assignment(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.served);
        let mut tasks = self.allocated_tasks().iter();
        for &j in &self.prover_order[..self.ell] {
            for _ in 0..self.prover_units[j] {
                if let Some(&i) = tasks.next() {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn to_outcome(&self, input: &AuctionInput) -> Outcome {
        if self.ell == 0 {
            return Outcome::no_trade();
        }
        let prover_allocations = self.prover_order[..self.ell]
            .iter()
            .map(|&j| (input.provers[j].prover_id.clone(), self.prover_units[j]))
            .collect();
        let task_assignment = self
            .assignment()
            .into_iter()
            .map(|(i, j)| {
                (
                    input.tasks[i].task_id.clone(),
                    input.provers[j].prover_id.clone(),
                )
            })
            .collect();
        Outcome {
            ell: self.ell,
            allocated_tasks: self
                .allocated_tasks()
                .iter()
                .map(|&i| input.tasks[i].task_id.clone())
                .collect(),
            prover_allocations,
            user_price: self.user_price,
            prover_unit_payment: self.unit_payment,
            coordinator_surplus: self.coordinator_surplus(),
            task_assignment,
        }
    }
}

/// A market clearing rule. [`Proofee`] is the real one; the trait exists so
/// the deviation oracle can be pointed at altered rules.
pub trait ClearingRule: Sync {
    fn clear(&self, profile: &BidProfile) -> Clearing;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Proofee;

impl ClearingRule for Proofee {
    fn clear(&self, profile: &BidProfile) -> Clearing {
        let mut clearing = Clearing::ranked(profile);
        let ell = largest_feasible(
            &clearing.prefix_capacity,
            |k| clearing.fee_at(profile, k),
            |j| profile.costs[clearing.prover_order[j]],
        );
        clearing.allocate(profile, ell);
        clearing
    }
}

fn task_order(fees: impl Iterator<Item = u64>) -> Vec<usize> {
    let mut order: Vec<(usize, u64)> = fees.enumerate().collect();
    // stable: equal fees keep submission order
    order.sort_by_key(|&(_, fee)| std::cmp::Reverse(fee));
    order.into_iter().map(|(i, _)| i).collect()
}

fn prover_order(costs: impl Iterator<Item = u64>) -> Vec<usize> {
    let mut order: Vec<(usize, u64)> = costs.enumerate().collect();
    order.sort_by_key(|&(_, c)| c);
    order.into_iter().map(|(j, _)| j).collect()
}

fn prefix_sums(caps: impl Iterator<Item = u64>) -> Vec<u64> {
    caps.scan(0u64, |acc, s| {
        *acc = acc.saturating_add(s);
        Some(*acc)
    })
    .collect()
}

fn fee_at_rank(k: u64, fee: impl Fn(usize) -> u64, n: usize) -> u64 {
    if k >= 1 && k <= n as u64 {
        fee(k as usize - 1)
    } else {
        0
    }
}

/// `cost_at` takes a 0-based ranked prover index, so `cost_at(j)` is
/// `p_{j+1}` in 1-based terms.
fn largest_feasible(
    prefix: &[u64],
    fee_at: impl Fn(u64) -> u64,
    cost_at: impl Fn(usize) -> u64,
) -> usize {
    (1..prefix.len())
        .rev()
        .find(|&j| cost_at(j) <= fee_at(prefix[j - 1].saturating_add(1)))
        .unwrap_or(0)
}
