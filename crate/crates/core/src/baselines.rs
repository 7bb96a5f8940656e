//! Simplified reference mechanisms for welfare and revenue comparisons.
//!
//! Only `proofee` is the real rule; the others are minimal interpretations
//! of one-line descriptions and are marked `simplified`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mechanism::{AgentId, AuctionInput, BidProfile, ClearingRule, Proofee};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    Proofee,
    PostedPrice,
    FirstPriceRandom,
    OrderBook,
}

impl MechanismKind {
    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Proofee => "proofee",
            MechanismKind::PostedPrice => "posted_price",
            MechanismKind::FirstPriceRandom => "first_price_random",
            MechanismKind::OrderBook => "order_book",
        }
    }
}

/// One task served by one unit of prover capacity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub task_id: AgentId,
    pub prover_id: AgentId,
    pub user_payment: u64,
    pub prover_payment: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MechanismResult {
    pub mechanism: MechanismKind,
    pub simplified: bool,
    pub trades: Vec<Trade>,
    pub welfare: i64,
    pub user_surplus: i64,
    pub prover_profit: i64,
    pub coordinator_revenue: i64,
}

impl MechanismResult {
    /// Totals under true values and true costs.
    fn from_trades(mechanism: MechanismKind, input: &AuctionInput, trades: Vec<Trade>) -> Self {
        let mut r = MechanismResult {
            mechanism,
            simplified: mechanism != MechanismKind::Proofee,
            trades: Vec::new(),
            welfare: 0,
            user_surplus: 0,
            prover_profit: 0,
            coordinator_revenue: 0,
        };
        for t in &trades {
            let value =
                input.tasks[input.task_index(&t.task_id).expect("trade task")].true_value as i64;
            let cost = input.provers[input.prover_index(&t.prover_id).expect("trade prover")]
                .true_cost as i64;
            r.welfare += value - cost;
            r.user_surplus += value - t.user_payment as i64;
            r.prover_profit += t.prover_payment as i64 - cost;
            r.coordinator_revenue += t.user_payment as i64 - t.prover_payment as i64;
        }
        r.trades = trades;
        r
    }

    pub fn user_payments(&self) -> u64 {
        self.trades.iter().map(|t| t.user_payment).sum()
    }

    pub fn prover_payments(&self) -> u64 {
        self.trades.iter().map(|t| t.prover_payment).sum()
    }
}

fn trade(
    input: &AuctionInput,
    task: usize,
    prover: usize,
    user_payment: u64,
    prover_payment: u64,
) -> Trade {
    Trade {
        task_id: input.tasks[task].task_id.clone(),
        prover_id: input.provers[prover].prover_id.clone(),
        user_payment,
        prover_payment,
    }
}

pub fn proofee(input: &AuctionInput) -> MechanismResult {
    let c = Proofee.clear(&BidProfile::declared(input));
    let trades = c
        .assignment()
        .into_iter()
        .map(|(i, j)| trade(input, i, j, c.user_price, c.unit_payment))
        .collect();
    MechanismResult::from_trades(MechanismKind::Proofee, input, trades)
}

/// Provers with cost at most `price` pool their capacity in a random order;
/// tasks bidding at least `price` are served first come first served, all at
/// `price`.
pub fn posted_price(input: &AuctionInput, price: u64, rng_seed: u64) -> MechanismResult {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut pool: Vec<usize> = (0..input.provers.len())
        .filter(|&j| input.provers[j].unit_cost <= price)
        .collect();
    pool.shuffle(&mut rng);
    let slots = pool
        .iter()
        .flat_map(|&j| std::iter::repeat_n(j, input.provers[j].capacity as usize));
    let buyers = (0..input.tasks.len()).filter(|&i| input.tasks[i].fee >= price);
    let trades = buyers
        .zip(slots)
        .map(|(i, j)| trade(input, i, j, price, price))
        .collect();
    MechanismResult::from_trades(MechanismKind::PostedPrice, input, trades)
}

/// Buy orders at each fee against one sell order per capacity unit at its
/// cost. Best prices match first, earlier submissions first among equal
/// prices, at the midpoint rounded down.
pub fn order_book(input: &AuctionInput) -> MechanismResult {
    let mut buys: Vec<usize> = (0..input.tasks.len()).collect();
    buys.sort_by(|&a, &b| input.tasks[b].fee.cmp(&input.tasks[a].fee));
    let mut sells: Vec<usize> = (0..input.provers.len()).collect();
    sells.sort_by_key(|&j| input.provers[j].unit_cost);
    let sells = sells
        .into_iter()
        .flat_map(|j| std::iter::repeat_n(j, input.provers[j].capacity as usize));
    let trades = buys
        .into_iter()
        .zip(sells)
        .take_while(|&(i, j)| input.tasks[i].fee >= input.provers[j].unit_cost)
        .map(|(i, j)| {
            let price = (input.tasks[i].fee + input.provers[j].unit_cost) / 2;
            trade(input, i, j, price, price)
        })
        .collect();
    MechanismResult::from_trades(MechanismKind::OrderBook, input, trades)
}

/// Basis points of each fee kept by the coordinator in `first_price_random`.
pub const BPS: u64 = 10_000;

/// Repeatedly draws a not-yet-drawn prover uniformly at random; it serves the
/// highest remaining fees that cover its cost, up to its capacity. Users pay
/// their own fee; the prover receives the fee less `retained_bps` basis
/// points, rounded down.
pub fn first_price_random(
    input: &AuctionInput,
    rng_seed: u64,
    retained_bps: u64,
) -> MechanismResult {
    let retained_bps = retained_bps.min(BPS);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut remaining: Vec<usize> = (0..input.tasks.len()).collect();
    remaining.sort_by(|&a, &b| input.tasks[b].fee.cmp(&input.tasks[a].fee));
    let mut provers: Vec<usize> = (0..input.provers.len()).collect();
    let mut trades = Vec::new();
    while !provers.is_empty() && !remaining.is_empty() {
        let j = provers.remove(rng.gen_range(0..provers.len()));
        let p = &input.provers[j];
        let take = remaining
            .iter()
            .take_while(|&&i| input.tasks[i].fee >= p.unit_cost)
            .count()
            .min(p.capacity as usize);
        for i in remaining.drain(..take) {
            let fee = input.tasks[i].fee;
            trades.push(trade(input, i, j, fee, fee * (BPS - retained_bps) / BPS));
        }
    }
    MechanismResult::from_trades(MechanismKind::FirstPriceRandom, input, trades)
}

/// A mechanism and its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mechanism", rename_all = "snake_case", deny_unknown_fields)]
pub enum MechanismSpec {
    Proofee,
    PostedPrice {
        price: u64,
    },
    FirstPriceRandom {
        #[serde(default)]
        retained_bps: u64,
    },
    OrderBook,
}

impl MechanismSpec {
    /// Randomized mechanisms draw from `rng_seed`.
    pub fn run(self, input: &AuctionInput, rng_seed: u64) -> MechanismResult {
        match self {
            MechanismSpec::Proofee => proofee(input),
            MechanismSpec::PostedPrice { price } => posted_price(input, price, rng_seed),
            MechanismSpec::FirstPriceRandom { retained_bps } => {
                first_price_random(input, rng_seed, retained_bps)
            }
            MechanismSpec::OrderBook => order_book(input),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub instance_seed: u64,
    pub mechanism: String,
    pub welfare: i64,
    pub user_surplus: i64,
    pub prover_profit: i64,
    pub coordinator_revenue: i64,
    pub trades: usize,
}

/// Runs every mechanism on every `(seed, instance)` pair, seeding randomized
/// mechanisms with the instance seed.
pub fn compare(
    instances: &[(u64, AuctionInput)],
    mechanisms: &[MechanismSpec],
) -> Vec<ComparisonRow> {
    instances
        .iter()
        .flat_map(|(seed, input)| {
            mechanisms.iter().map(move |m| {
                let r = m.run(input, *seed);
                ComparisonRow {
                    instance_seed: *seed,
                    mechanism: r.mechanism.name().to_string(),
                    welfare: r.welfare,
                    user_surplus: r.user_surplus,
                    prover_profit: r.prover_profit,
                    coordinator_revenue: r.coordinator_revenue,
                    trades: r.trades.len(),
                }
            })
        })
        .collect()
}

pub const COMPARISON_HEADER: [&str; 7] = [
    "instance_seed",
    "mechanism",
    "welfare",
    "user_surplus",
    "prover_profit",
    "coordinator_revenue",
    "trades",
];

pub fn write_comparison_csv<W: std::io::Write>(rows: &[ComparisonRow], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(COMPARISON_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> AuctionInput {
        AuctionInput::from_values(&[10, 10, 10, 10, 9, 9, 1, 1], &[(4, 0), (2, 1), (2, 10)])
    }

    fn identity_holds(r: &MechanismResult) -> bool {
        r.welfare == r.user_surplus + r.prover_profit + r.coordinator_revenue
    }

    #[test]
    fn proofee_matches_example() {
        let r = proofee(&example1());
        assert_eq!(r.welfare, 40);
        assert_eq!(r.trades.len(), 4);
        assert_eq!(r.coordinator_revenue, 32);
        assert!(!r.simplified);
        assert!(identity_holds(&r));
    }

    #[test]
    fn posted_price_cases() {
        let r = posted_price(&example1(), 5, 1);
        assert_eq!(r.trades.len(), 6);
        assert!(r
            .trades
            .iter()
            .all(|t| t.prover_id != "p3" && t.user_payment == 5));
        assert_eq!(r.coordinator_revenue, 0);
        assert!(identity_holds(&r));
        assert!(posted_price(&example1(), 11, 1).trades.is_empty());
        let zero = posted_price(&example1(), 0, 1);
        assert!(zero.trades.iter().all(|t| t.prover_id == "p1"));
        assert_eq!(zero.trades.len(), 4);
    }

    #[test]
    fn order_book_cases() {
        let r = order_book(&example1());
        assert_eq!(r.trades.len(), 6);
        assert_eq!(r.welfare, 56);
        assert_eq!(r.trades.iter().filter(|t| t.prover_id == "p1").count(), 4);
        assert_eq!(r.trades.iter().filter(|t| t.prover_id == "p2").count(), 2);
        assert_eq!(r.trades[0].user_payment, 5);
        assert!(identity_holds(&r));
        let disjoint = AuctionInput::from_values(&[1, 2], &[(3, 5)]);
        assert!(order_book(&disjoint).trades.is_empty());
        let single = order_book(&AuctionInput::from_values(&[10], &[(1, 4)]));
        assert_eq!(single.trades[0].user_payment, 7);
    }

    #[test]
    fn first_price_random_cases() {
        let input = example1();
        let first_p1 = (0..64)
            .find(|&s| first_price_random(&input, s, 0).trades[0].prover_id == "p1")
            .expect("some seed draws p1 first");
        let r = first_price_random(&input, first_p1, 0);
        let fees: Vec<u64> = r
            .trades
            .iter()
            .filter(|t| t.prover_id == "p1")
            .map(|t| t.user_payment)
            .collect();
        assert_eq!(fees, vec![10, 10, 10, 10]);
        assert_eq!(r, first_price_random(&input, first_p1, 0));
        assert!(identity_holds(&r));
        let kept = first_price_random(&input, first_p1, 1_000);
        assert_eq!(kept.trades[0].prover_payment, 9);
        assert!(kept.coordinator_revenue > 0);
        let none = first_price_random(&AuctionInput::from_values(&[3], &[]), 1, 0);
        assert!(none.trades.is_empty());
    }

    #[test]
    fn comparison_table() {
        let rows = compare(
            &[(0, example1())],
            &[MechanismSpec::Proofee, MechanismSpec::OrderBook],
        );
        assert_eq!(rows[0].welfare, 40);
        assert_eq!(rows[1].welfare, 56);
        assert!(compare(&[], &[MechanismSpec::Proofee]).is_empty());
        let mut buf = Vec::new();
        write_comparison_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "instance_seed,mechanism,welfare,user_surplus,prover_profit,coordinator_revenue,trades"
        );
        assert_eq!(lines.next().unwrap(), "0,proofee,40,4,4,32,4");
    }

    #[test]
    fn spec_json() {
        let s: MechanismSpec =
            serde_json::from_str(r#"{"mechanism":"posted_price","price":5}"#).unwrap();
        assert_eq!(s, MechanismSpec::PostedPrice { price: 5 });
        let s: MechanismSpec =
            serde_json::from_str(r#"{"mechanism":"first_price_random"}"#).unwrap();
        assert_eq!(s, MechanismSpec::FirstPriceRandom { retained_bps: 0 });
    }
}
