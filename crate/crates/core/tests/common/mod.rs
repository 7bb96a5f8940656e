//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use proofee_core::{AuctionInput, ProverBid, TaskBid};
use proptest::prelude::*;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Naive {
    pub ell: usize,
    pub allocated: BTreeSet<String>,
    pub price: u64,
    pub pay: u64,
    pub units: BTreeMap<String, u64>,
}

/// The clearing rule read straight off its definition, 1-based indices.
pub fn naive_clear(input: &AuctionInput) -> Naive {
    let mut tasks: Vec<(usize, &TaskBid)> = input.tasks.iter().enumerate().collect();
    tasks.sort_by_key(|(i, t)| (Reverse(t.fee), *i));
    let mut provers: Vec<(usize, &ProverBid)> = input.provers.iter().enumerate().collect();
    provers.sort_by_key(|(j, p)| (p.unit_cost, *j));
    let n = tasks.len() as u64;
    let big_n = provers.len();
    let f = |k: u64| {
        if k >= 1 && k <= n {
            tasks[k as usize - 1].1.fee
        } else {
            0
        }
    };
    let p = |j: usize| provers[j - 1].1.unit_cost;
    let s_bar = |j: usize| provers[..j].iter().map(|(_, q)| q.capacity).sum::<u64>();
    let mut ell = 0;
    for j in 1..big_n {
        if p(j + 1) <= f(s_bar(j) + 1) {
            ell = j;
        }
    }
    if ell == 0 {
        return Naive {
            ell: 0,
            allocated: BTreeSet::new(),
            price: 0,
            pay: 0,
            units: BTreeMap::new(),
        };
    }
    let total = s_bar(ell).min(n);
    let allocated = tasks[..total as usize]
        .iter()
        .map(|(_, t)| t.task_id.clone())
        .collect();
    let mut left = total;
    let mut units = BTreeMap::new();
    for (_, q) in &provers[..ell] {
        let u = q.capacity.min(left);
        left -= u;
        units.insert(q.prover_id.clone(), u);
    }
    Naive {
        ell,
        allocated,
        price: f(s_bar(ell) + 1),
        pay: p(ell + 1),
        units,
    }
}

/// Utility of one task or prover id under the naive rule.
pub fn naive_utility(input: &AuctionInput, out: &Naive, id: &str) -> i64 {
    if let Some(t) = input.tasks.iter().find(|t| t.task_id == id) {
        return if out.allocated.contains(id) {
            t.true_value as i64 - out.price as i64
        } else {
            0
        };
    }
    let p = input
        .provers
        .iter()
        .find(|p| p.prover_id == id)
        .expect("known id");
    out.units.get(id).copied().unwrap_or(0) as i64 * (out.pay as i64 - p.true_cost as i64)
}

pub fn naive_joint(input: &AuctionInput, ids: &[&str]) -> i64 {
    let out = naive_clear(input);
    ids.iter().map(|id| naive_utility(input, &out, id)).sum()
}

pub fn naive_welfare(input: &AuctionInput) -> i64 {
    let out = naive_clear(input);
    let value: i64 = input
        .tasks
        .iter()
        .filter(|t| out.allocated.contains(&t.task_id))
        .map(|t| t.true_value as i64)
        .sum();
    let cost: i64 = input
        .provers
        .iter()
        .map(|p| out.units.get(&p.prover_id).copied().unwrap_or(0) as i64 * p.true_cost as i64)
        .sum();
    value - cost
}

/// Best total margin over every partial matching of tasks to unit slots.
pub fn brute_optimal(input: &AuctionInput) -> i64 {
    let slots: Vec<i64> = input
        .provers
        .iter()
        .flat_map(|p| std::iter::repeat_n(p.true_cost as i64, p.true_capacity as usize))
        .collect();
    let values: Vec<i64> = input.tasks.iter().map(|t| t.true_value as i64).collect();
    fn rec(values: &[i64], slots: &[i64], used: &mut Vec<bool>) -> i64 {
        let Some((&v, rest)) = values.split_first() else {
            return 0;
        };
        let mut best = rec(rest, slots, used);
        for k in 0..slots.len() {
            if !used[k] {
                used[k] = true;
                best = best.max(v - slots[k] + rec(rest, slots, used));
                used[k] = false;
            }
        }
        best
    }
    rec(&values, &slots, &mut vec![false; slots.len()])
}

/// `{0} ∪ {v-1, v, v+1} ∪ {max+1, max+2}` for the given values.
pub fn grid(values: impl IntoIterator<Item = u64>) -> Vec<u64> {
    let mut set = BTreeSet::from([0u64]);
    let mut max = 0;
    for v in values {
        set.insert(v);
        set.insert(v + 1);
        if v > 0 {
            set.insert(v - 1);
        }
        max = max.max(v);
    }
    set.insert(max + 1);
    set.insert(max + 2);
    set.into_iter().collect()
}

pub fn with_prover(input: &AuctionInput, j: usize, capacity: u64, cost: u64) -> AuctionInput {
    let mut out = input.clone();
    out.provers[j].capacity = capacity;
    out.provers[j].unit_cost = cost;
    out
}

pub fn arb_instance(max_tasks: usize, max_provers: usize) -> impl Strategy<Value = AuctionInput> {
    (
        prop::collection::vec(0u64..=20, 0..=max_tasks),
        prop::collection::vec((1u64..=5, 0u64..=20), 0..=max_provers),
    )
        .prop_map(|(fees, provers)| AuctionInput::from_values(&fees, &provers))
}
