//! Brute-force deviation oracle.
//!
//! The outcome depends on a single agent's bid only through how that bid
//! orders against every other bid value (and against the implicit zero fee
//! past the last task). Over integers, testing `0`, every other value `v`,
//! its neighbours `v - 1` and `v + 1`, and one value above the maximum hits
//! every order class, so a unilateral deviation search over that finite set
//! is exhaustive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanism::{
    run_auction, utilities, AgentId, AuctionInput, BidProfile, ClearingRule, Proofee, ProverBid,
    TaskBid,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("unknown {kind:?} `{id}`")]
    UnknownAgent { kind: AgentKind, id: AgentId },
    #[error("range `{0}` is empty or out of bounds")]
    InvalidRange(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    User,
    Prover,
}

/// Best unilateral deviation found for one agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub agent_id: AgentId,
    pub agent_kind: AgentKind,
    /// Fee (users) or unit cost (provers) achieving `best_deviant_utility`.
    pub best_deviation: u64,
    pub honest_utility: i64,
    pub best_deviant_utility: i64,
    pub gain: i64,
}

/// Order-class representatives for a bid compared against `others`.
pub fn pivotal_set(others: impl IntoIterator<Item = u64>) -> Vec<u64> {
    let mut set = vec![0u64];
    let mut max = 0u64;
    for v in others {
        set.push(v);
        set.push(v.saturating_add(1));
        if v > 0 {
            set.push(v - 1);
        }
        max = max.max(v);
    }
    set.push(max.saturating_add(1));
    set.sort_unstable();
    set.dedup();
    set
}

/// Every bid value in `profile` except the fee of task `skip_task` and the
/// cost of prover `skip_prover`.
pub(crate) fn other_values(
    profile: &BidProfile,
    skip_task: Option<usize>,
    skip_prover: Option<usize>,
) -> impl Iterator<Item = u64> + '_ {
    let fees = profile
        .fees
        .iter()
        .enumerate()
        .filter(move |(i, _)| Some(*i) != skip_task)
        .map(|(_, &f)| f);
    let costs = profile
        .costs
        .iter()
        .enumerate()
        .filter(move |(j, _)| Some(*j) != skip_prover)
        .map(|(_, &c)| c);
    fees.chain(costs)
}

pub fn pivotal_values(
    instance: &AuctionInput,
    kind: AgentKind,
    id: &str,
) -> Result<Vec<u64>, OracleError> {
    let profile = BidProfile::declared(instance);
    let unknown = || OracleError::UnknownAgent {
        kind,
        id: id.to_string(),
    };
    Ok(match kind {
        AgentKind::User => {
            let i = instance.task_index(id).ok_or_else(unknown)?;
            pivotal_set(other_values(&profile, Some(i), None))
        }
        AgentKind::Prover => {
            let j = instance.prover_index(id).ok_or_else(unknown)?;
            pivotal_set(other_values(&profile, None, Some(j)))
        }
    })
}

/// Runs the deviation checks against any clearing rule.
#[derive(Clone, Copy)]
pub struct Oracle<'r> {
    rule: &'r dyn ClearingRule,
}

impl Default for Oracle<'static> {
    fn default() -> Self {
        Oracle { rule: &Proofee }
    }
}

impl<'r> Oracle<'r> {
    pub fn new(rule: &'r dyn ClearingRule) -> Self {
        Oracle { rule }
    }

    pub fn rule(&self) -> &'r dyn ClearingRule {
        self.rule
    }

    /// Each user bids its true value, then every pivotal fee.
    pub fn check_udsic(&self, instance: &AuctionInput) -> Vec<DeviationReport> {
        let declared = BidProfile::declared(instance);
        instance
            .tasks
            .iter()
            .enumerate()
            .map(|(i, task)| {
                let mut profile = declared.clone();
                profile.fees[i] = task.true_value;
                let utility = |p: &BidProfile| self.rule.clear(p).user_utility(i, task.true_value);
                let honest = utility(&profile);
                let candidates = pivotal_set(other_values(&declared, Some(i), None));
                let (best_value, best) = best_of(task.true_value, candidates, |v| {
                    profile.fees[i] = v;
                    utility(&profile)
                });
                report(&task.task_id, AgentKind::User, best_value, honest, best)
            })
            .collect()
    }

    /// Each prover bids its true capacity and cost, then every pivotal cost.
    /// Capacity stays at the true capacity.
    pub fn check_pdsic(&self, instance: &AuctionInput) -> Vec<DeviationReport> {
        let declared = BidProfile::declared(instance);
        instance
            .provers
            .iter()
            .enumerate()
            .map(|(j, prover)| {
                let mut profile = declared.clone();
                profile.capacities[j] = prover.true_capacity;
                profile.costs[j] = prover.true_cost;
                let utility =
                    |p: &BidProfile| self.rule.clear(p).prover_utility(j, prover.true_cost);
                let honest = utility(&profile);
                let candidates = pivotal_set(other_values(&declared, None, Some(j)));
                let (best_value, best) = best_of(prover.true_cost, candidates, |c| {
                    profile.costs[j] = c;
                    utility(&profile)
                });
                report(
                    &prover.prover_id,
                    AgentKind::Prover,
                    best_value,
                    honest,
                    best,
                )
            })
            .collect()
    }

    /// `(users pay at least what provers receive, surplus)`.
    pub fn check_budget_balance(&self, instance: &AuctionInput) -> (bool, i64) {
        let surplus = self
            .rule
            .clear(&BidProfile::declared(instance))
            .coordinator_surplus();
        (surplus >= 0, surplus)
    }

    pub fn efficiency_loss(&self, instance: &AuctionInput) -> i64 {
        let clearing = self.rule.clear(&BidProfile::declared(instance));
        optimal_welfare(instance)
            - clearing.welfare(&instance.true_values(), &instance.true_costs())
    }

    /// Checks `count` random instances seeded `params.seed, params.seed + 1, ...`.
    pub fn sweep(&self, params: &InstanceParams, count: u64) -> Result<SweepReport, OracleError> {
        params.validate()?;
        let per_instance: Vec<InstanceSummary> = (0..count)
            .into_par_iter()
            .map(|k| {
                let seed = params.seed.wrapping_add(k);
                let instance = random_instance(&params.with_seed(seed)).expect("validated params");
                self.summarize(seed, &instance)
            })
            .collect();
        Ok(SweepReport::aggregate(params.seed, per_instance))
    }

    fn summarize(&self, seed: u64, instance: &AuctionInput) -> InstanceSummary {
        let (balanced, surplus) = self.check_budget_balance(instance);
        let mut deviations = self.check_udsic(instance);
        deviations.extend(self.check_pdsic(instance));
        InstanceSummary {
            seed,
            balanced,
            surplus,
            efficiency_loss: self.efficiency_loss(instance),
            deviations,
        }
    }
}

pub fn check_udsic(instance: &AuctionInput) -> Vec<DeviationReport> {
    Oracle::default().check_udsic(instance)
}

pub fn check_pdsic(instance: &AuctionInput) -> Vec<DeviationReport> {
    Oracle::default().check_pdsic(instance)
}

pub fn check_budget_balance(instance: &AuctionInput) -> (bool, i64) {
    Oracle::default().check_budget_balance(instance)
}

pub fn efficiency_loss(instance: &AuctionInput) -> i64 {
    Oracle::default().efficiency_loss(instance)
}

/// Maximum of `sum(value - cost)` over matchings of tasks to prover unit
/// slots, using true values, true costs and true capacities. Zero-margin pairs
/// are admitted.
pub fn optimal_welfare(instance: &AuctionInput) -> i64 {
    let mut values: Vec<u64> = instance.tasks.iter().map(|t| t.true_value).collect();
    values.sort_unstable_by(|a, b| b.cmp(a));
    let mut slots: Vec<u64> = instance
        .provers
        .iter()
        .flat_map(|p| std::iter::repeat_n(p.true_cost, p.true_capacity as usize))
        .collect();
    slots.sort_unstable();
    values
        .iter()
        .zip(&slots)
        .take_while(|(v, c)| v >= c)
        .map(|(&v, &c)| v as i64 - c as i64)
        .sum()
}

/// Realized welfare of the mechanism outcome under true values.
pub fn mechanism_welfare(instance: &AuctionInput) -> i64 {
    utilities(instance, &run_auction(instance))
        .map(|r| r.welfare)
        .expect("outcome derived from the same input")
}

/// Picks the candidate with the highest utility; ties go to the candidate
/// closest to `truthful`, then to the smaller value.
fn best_of(truthful: u64, candidates: Vec<u64>, mut utility: impl FnMut(u64) -> i64) -> (u64, i64) {
    let mut best: Option<(u64, i64)> = None;
    for v in candidates {
        let u = utility(v);
        let better = match best {
            None => true,
            Some((bv, bu)) => u > bu || (u == bu && v.abs_diff(truthful) < bv.abs_diff(truthful)),
        };
        if better {
            best = Some((v, u));
        }
    }
    best.expect("pivotal set is never empty")
}

fn report(id: &str, kind: AgentKind, value: u64, honest: i64, best: i64) -> DeviationReport {
    DeviationReport {
        agent_id: id.to_string(),
        agent_kind: kind,
        best_deviation: value,
        honest_utility: honest,
        best_deviant_utility: best,
        gain: best - honest,
    }
}

/// Inclusive integer interval, serialized as `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval(pub u64, pub u64);

impl Interval {
    fn sample(self, rng: &mut ChaCha8Rng) -> u64 {
        rng.gen_range(self.0..=self.1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceParams {
    pub seed: u64,
    #[serde(rename = "n_range")]
    pub task_count: Interval,
    #[serde(rename = "N_range")]
    pub prover_count: Interval,
    pub fee_range: Interval,
    pub cost_range: Interval,
    pub capacity_range: Interval,
}

impl Default for InstanceParams {
    fn default() -> Self {
        InstanceParams {
            seed: 0,
            task_count: Interval(0, 8),
            prover_count: Interval(0, 4),
            fee_range: Interval(0, 20),
            cost_range: Interval(0, 20),
            capacity_range: Interval(1, 5),
        }
    }
}

impl InstanceParams {
    pub fn with_seed(&self, seed: u64) -> Self {
        InstanceParams {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let ranges = [
            ("n_range", self.task_count),
            ("N_range", self.prover_count),
            ("fee_range", self.fee_range),
            ("cost_range", self.cost_range),
            ("capacity_range", self.capacity_range),
        ];
        for (name, r) in ranges {
            if r.0 > r.1 {
                return Err(OracleError::InvalidRange(name));
            }
        }
        if self.capacity_range.0 == 0 {
            return Err(OracleError::InvalidRange("capacity_range"));
        }
        Ok(())
    }
}

/// Truthful instance drawn uniformly from `params`; the same params always
/// give the same instance.
pub fn random_instance(params: &InstanceParams) -> Result<AuctionInput, OracleError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.task_count.sample(&mut rng);
    let provers = params.prover_count.sample(&mut rng);
    let tasks = (1..=n)
        .map(|i| {
            TaskBid::new(
                format!("t{i}"),
                format!("u{i}"),
                params.fee_range.sample(&mut rng),
            )
        })
        .collect();
    let provers = (1..=provers)
        .map(|j| {
            let cap = params.capacity_range.sample(&mut rng);
            let cost = params.cost_range.sample(&mut rng);
            ProverBid::new(format!("p{j}"), cap, cost)
        })
        .collect();
    Ok(AuctionInput::new(tasks, provers))
}

#[derive(Clone, Debug)]
struct InstanceSummary {
    seed: u64,
    balanced: bool,
    surplus: i64,
    efficiency_loss: i64,
    deviations: Vec<DeviationReport>,
}

/// One CSV row of a sweep.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub instance_seed: u64,
    pub agent_kind: AgentKind,
    pub agent_id: AgentId,
    pub honest_utility: i64,
    pub best_deviant_utility: i64,
    pub gain: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub instance_seed: u64,
    pub property: String,
    pub agent_id: Option<AgentId>,
    pub amount: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepReport {
    pub base_seed: u64,
    pub instances: u64,
    pub agents_checked: u64,
    pub max_user_gain: i64,
    pub max_prover_gain: i64,
    pub budget_violations: u64,
    pub min_surplus: i64,
    pub max_efficiency_loss: i64,
    pub total_efficiency_loss: i64,
    pub violations: Vec<Violation>,
    #[serde(skip)]
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    fn aggregate(base_seed: u64, summaries: Vec<InstanceSummary>) -> Self {
        let mut rep = SweepReport {
            base_seed,
            instances: summaries.len() as u64,
            agents_checked: 0,
            max_user_gain: 0,
            max_prover_gain: 0,
            budget_violations: 0,
            min_surplus: 0,
            max_efficiency_loss: 0,
            total_efficiency_loss: 0,
            violations: Vec::new(),
            rows: Vec::new(),
        };
        for s in summaries {
            if !s.balanced {
                rep.budget_violations += 1;
                rep.violations.push(Violation {
                    instance_seed: s.seed,
                    property: "budget_balance".into(),
                    agent_id: None,
                    amount: s.surplus,
                });
            }
            rep.min_surplus = rep.min_surplus.min(s.surplus);
            rep.max_efficiency_loss = rep.max_efficiency_loss.max(s.efficiency_loss);
            rep.total_efficiency_loss += s.efficiency_loss;
            for d in s.deviations {
                rep.agents_checked += 1;
                let slot = match d.agent_kind {
                    AgentKind::User => &mut rep.max_user_gain,
                    AgentKind::Prover => &mut rep.max_prover_gain,
                };
                *slot = (*slot).max(d.gain);
                if d.gain > 0 {
                    rep.violations.push(Violation {
                        instance_seed: s.seed,
                        property: match d.agent_kind {
                            AgentKind::User => "udsic".into(),
                            AgentKind::Prover => "pdsic".into(),
                        },
                        agent_id: Some(d.agent_id.clone()),
                        amount: d.gain,
                    });
                }
                rep.rows.push(SweepRow {
                    instance_seed: s.seed,
                    agent_kind: d.agent_kind,
                    agent_id: d.agent_id,
                    honest_utility: d.honest_utility,
                    best_deviant_utility: d.best_deviant_utility,
                    gain: d.gain,
                });
            }
        }
        rep
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        if self.rows.is_empty() {
            w.write_record([
                "instance_seed",
                "agent_kind",
                "agent_id",
                "honest_utility",
                "best_deviant_utility",
                "gain",
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
