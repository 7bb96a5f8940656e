//! Command implementations behind the `proofee` binary.
//!
//! Every command writes canonical JSON (sorted keys, one document or one
//! record per line) or CSV, so identical scenario and seed give identical
//! bytes.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use proofee_core::adversary::{self, AttackResult, Counterexample};
use proofee_core::baselines::{compare, write_comparison_csv};
use proofee_core::canonical::to_canonical_json;
use proofee_core::market::{run_simulation, EventKind};
use proofee_core::oracle::{random_instance, InstanceParams, Oracle, SweepReport};
use proofee_core::{run_auction_with, utilities, AuctionInput, ClearingRule, Proofee};
use serde::Serialize;
use thiserror::Error;

pub mod scenario;

pub use scenario::{AttackSpec, Generate, Scenario, SeededInstance};

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or invalid scenario.
    #[error("scenario error: {0}")]
    Schema(String),
    #[error("{0}")]
    Runtime(String),
    /// A checked property failed.
    #[error("property violation: {0}")]
    Violation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Runtime(_) | CliError::Violation(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "proofee",
    version,
    about = "Double auction toolkit for proof-generation markets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario's seed where one is used.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write output here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clear one auction and print the outcome with utilities.
    Run(CommonArgs),
    /// Sweep random instances for budget balance and truthfulness violations.
    /// Without a scenario, checks 10000 default instances.
    Verify(CommonArgs),
    /// Run an attack search or build a counterexample.
    Attack(CommonArgs),
    /// Simulate sealed-bid rounds with deposits and slashing.
    Simulate(CommonArgs),
    /// Compare the mechanism against the baselines.
    Compare(CommonArgs),
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Run(a)
            | Command::Verify(a)
            | Command::Attack(a)
            | Command::Simulate(a)
            | Command::Compare(a) => a,
        }
    }

    fn expected_kind(&self) -> &'static str {
        match self {
            Command::Run(_) => "auction",
            Command::Verify(_) => "verify",
            Command::Attack(_) => "attack",
            Command::Simulate(_) => "simulate",
            Command::Compare(_) => "compare",
        }
    }
}

/// Parses a scenario; errors carry serde's line and column.
pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| match e {
        CliError::Schema(m) => CliError::Schema(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn checked(input: AuctionInput) -> Result<AuctionInput, CliError> {
    input
        .validate()
        .map_err(|e| CliError::Schema(e.to_string()))?;
    Ok(input)
}

fn json_line<T: Serialize + ?Sized>(value: &T) -> Result<String, CliError> {
    let mut s = to_canonical_json(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Runs `command` against `rule`, writing the result to `stdout` unless
/// `--out` is given.
pub fn execute(
    command: &Command,
    rule: &dyn ClearingRule,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let args = command.args();
    let scenario = match &args.scenario {
        Some(path) => Some(load_scenario(path)?),
        None => None,
    };
    let scenario = match (scenario, command) {
        (Some(s), _) => s,
        (None, Command::Verify(_)) => Scenario::Verify {
            params: InstanceParams::default(),
            instances: 10_000,
        },
        (None, _) => return Err(CliError::Schema("--scenario is required".into())),
    };
    if scenario.kind() != command.expected_kind() {
        return Err(CliError::Schema(format!(
            "scenario kind `{}` does not match command (expected `{}`)",
            scenario.kind(),
            command.expected_kind()
        )));
    }
    let mut buf = Vec::new();
    let result = match scenario {
        Scenario::Auction { input } => cmd_run(&checked(input)?, rule, args.format, &mut buf),
        Scenario::Verify { params, instances } => {
            let params = match args.seed {
                Some(seed) => params.with_seed(seed),
                None => params,
            };
            cmd_verify(&params, instances, rule, args.format, &mut buf)
        }
        Scenario::Attack { input, attack } => {
            let input = input.map(checked).transpose()?;
            cmd_attack(input.as_ref(), &attack, rule, args.format, &mut buf)
        }
        Scenario::Simulate { mut config } => {
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            cmd_simulate(&config, args.format, &mut buf)
        }
        Scenario::Compare {
            mechanisms,
            instances,
            generate,
        } => {
            let mut all = Vec::new();
            for s in instances {
                all.push((s.seed, checked(s.input)?));
            }
            if let Some(g) = generate {
                let base = args.seed.unwrap_or(g.params.seed);
                for k in 0..g.count {
                    let seed = base.wrapping_add(k);
                    let input = random_instance(&g.params.with_seed(seed))
                        .map_err(|e| CliError::Schema(e.to_string()))?;
                    all.push((seed, input));
                }
            }
            cmd_compare(&all, &mechanisms, args.format, &mut buf)
        }
    };
    // a violation report is still written before the error surfaces
    match &args.out {
        Some(path) => std::fs::write(path, &buf)?,
        None => stdout.write_all(&buf)?,
    }
    result
}

#[derive(Serialize)]
struct RunReport {
    outcome: proofee_core::Outcome,
    utilities: proofee_core::UtilityReport,
}

pub fn cmd_run(
    input: &AuctionInput,
    rule: &dyn ClearingRule,
    format: Format,
    out: &mut Vec<u8>,
) -> Result<(), CliError> {
    let outcome = run_auction_with(rule, input);
    let report = utilities(input, &outcome).map_err(|e| CliError::Runtime(e.to_string()))?;
    match format {
        Format::Json => out.extend(
            json_line(&RunReport {
                outcome,
                utilities: report,
            })?
            .bytes(),
        ),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record([
                "agent_kind",
                "agent_id",
                "allocated_units",
                "payment",
                "utility",
            ])?;
            for t in &input.tasks {
                let served = outcome.allocated_tasks.contains(&t.task_id);
                w.write_record([
                    "user".to_string(),
                    t.task_id.clone(),
                    (served as u64).to_string(),
                    if served { outcome.user_price } else { 0 }.to_string(),
                    report.user_utilities[&t.task_id].to_string(),
                ])?;
            }
            for p in &input.provers {
                let units = outcome
                    .prover_allocations
                    .get(&p.prover_id)
                    .copied()
                    .unwrap_or(0);
                w.write_record([
                    "prover".to_string(),
                    p.prover_id.clone(),
                    units.to_string(),
                    (units * outcome.prover_unit_payment).to_string(),
                    report.prover_utilities[&p.prover_id].to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn cmd_verify(
    params: &InstanceParams,
    instances: u64,
    rule: &dyn ClearingRule,
    format: Format,
    out: &mut Vec<u8>,
) -> Result<(), CliError> {
    let report: SweepReport = Oracle::new(rule)
        .sweep(params, instances)
        .map_err(|e| CliError::Schema(e.to_string()))?;
    match format {
        Format::Json => out.extend(json_line(&report)?.bytes()),
        Format::Csv => report.write_csv(&mut *out)?,
    }
    match report.violations.first() {
        None => Ok(()),
        Some(v) => Err(CliError::Violation(format!(
            "{} violated by {} (amount {}) on instance seed {}; {} violations in total",
            v.property,
            v.agent_id.as_deref().unwrap_or("the mechanism"),
            v.amount,
            v.instance_seed,
            report.violations.len()
        ))),
    }
}

#[derive(Serialize)]
struct CounterexampleReport<'a> {
    counterexample: &'a Counterexample,
    honest_utility: i64,
    deviant_utility: i64,
    utility_drop: i64,
    bound: i64,
    bound_met: bool,
}

pub fn cmd_attack(
    input: Option<&AuctionInput>,
    attack: &AttackSpec,
    rule: &dyn ClearingRule,
    format: Format,
    out: &mut Vec<u8>,
) -> Result<(), CliError> {
    let adv = adversary::Adversary::new(rule);
    let need = || input.ok_or_else(|| CliError::Schema("this attack needs an `input`".into()));
    let runtime = |e: adversary::AdversaryError| CliError::Runtime(e.to_string());
    let result: AttackResult = match attack {
        AttackSpec::CapacityUnderreport { prover_id } => {
            adv.capacity_underreport_search(need()?, prover_id)
        }
        AttackSpec::UserSybil {
            prover_id,
            max_sybils,
        } => adv.user_sybil_search(need()?, prover_id, *max_sybils),
        AttackSpec::ProverSplit {
            prover_id,
            max_parts,
        } => adv.prover_split_search(need()?, prover_id, *max_parts),
        AttackSpec::CollusionProverUser { prover_id, user_id } => {
            adv.collusion_prover_user_search(need()?, prover_id, user_id)
        }
        AttackSpec::CollusionTwoProver { prover_a, prover_b } => {
            adv.collusion_two_prover_search(need()?, prover_a, prover_b)
        }
        AttackSpec::CapacityCounterexample { provers, rank } => {
            let built =
                adversary::build_capacity_counterexample(provers, *rank).map_err(runtime)?;
            let id = adversary::ranked_prover_id(provers, *rank)
                .expect("rank checked by the constructor");
            adv.capacity_underreport_search(&built, id)
        }
        AttackSpec::CollusionCounterexample { case, bids } => {
            let ce = adversary::build_collusion_counterexample(*case, bids).map_err(runtime)?;
            let report = CounterexampleReport {
                counterexample: &ce,
                honest_utility: ce.honest_utility(),
                deviant_utility: ce.deviant_utility(),
                utility_drop: ce.utility_drop(),
                bound: ce.bound,
                bound_met: ce.utility_drop() >= ce.bound,
            };
            match format {
                Format::Json => out.extend(json_line(&report)?.bytes()),
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(&mut *out);
                    w.write_record([
                        "case",
                        "honest_utility",
                        "deviant_utility",
                        "utility_drop",
                        "bound",
                    ])?;
                    w.write_record([
                        serde_json::to_value(case)
                            .map_err(|e| CliError::Runtime(e.to_string()))?
                            .as_str()
                            .unwrap_or("")
                            .to_string(),
                        report.honest_utility.to_string(),
                        report.deviant_utility.to_string(),
                        report.utility_drop.to_string(),
                        report.bound.to_string(),
                    ])?;
                    w.flush()?;
                }
            }
            return Ok(());
        }
    }
    .map_err(runtime)?;
    match format {
        Format::Json => out.extend(json_line(&result)?.bytes()),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record([
                "attack_kind",
                "attacker_ids",
                "honest_utility",
                "attack_utility",
                "gain",
                "welfare_before",
                "welfare_after",
            ])?;
            let kind = serde_json::to_value(result.attack_kind)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            w.write_record([
                kind.as_str().unwrap_or("").to_string(),
                result.attacker_ids.join(";"),
                result.honest_utility.to_string(),
                result.attack_utility.to_string(),
                result.gain().to_string(),
                result.welfare_before.to_string(),
                result.welfare_after.to_string(),
            ])?;
            w.flush()?;
        }
    }
    Ok(())
}

pub fn cmd_simulate(
    config: &proofee_core::market::SimulationConfig,
    format: Format,
    out: &mut Vec<u8>,
) -> Result<(), CliError> {
    let records = run_simulation(config).map_err(|e| match e {
        proofee_core::market::MarketError::InvalidConfig(m)
        | proofee_core::market::MarketError::InvalidFactor(m) => CliError::Schema(m),
        other => CliError::Runtime(other.to_string()),
    })?;
    match format {
        Format::Json => {
            for r in &records {
                out.extend(json_line(r)?.bytes());
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record([
                "round",
                "ell",
                "user_price",
                "prover_unit_payment",
                "completed",
                "failed",
                "slashed",
                "refunded",
                "coordinator_delta",
            ])?;
            for r in &records {
                let sum = |kind: EventKind| -> i64 {
                    r.ledger_delta
                        .iter()
                        .filter(|e| e.kind == kind)
                        .map(|e| e.amount)
                        .sum()
                };
                let coordinator: i64 = r
                    .ledger_delta
                    .iter()
                    .filter(|e| e.agent == proofee_core::market::COORDINATOR)
                    .map(|e| e.amount)
                    .sum();
                w.write_record([
                    r.round_index.to_string(),
                    r.outcome.ell.to_string(),
                    r.outcome.user_price.to_string(),
                    r.outcome.prover_unit_payment.to_string(),
                    r.completions.values().filter(|&&c| c).count().to_string(),
                    r.completions.values().filter(|&&c| !c).count().to_string(),
                    (-sum(EventKind::Slash)).to_string(),
                    sum(EventKind::Refund).to_string(),
                    coordinator.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn cmd_compare(
    instances: &[(u64, AuctionInput)],
    mechanisms: &[proofee_core::baselines::MechanismSpec],
    format: Format,
    out: &mut Vec<u8>,
) -> Result<(), CliError> {
    let rows = compare(instances, mechanisms);
    match format {
        Format::Json => out.extend(json_line(&rows)?.bytes()),
        Format::Csv => write_comparison_csv(&rows, &mut *out)?,
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_cli<I, T>(
    args: I,
    rule: &dyn ClearingRule,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return e.exit_code();
        }
    };
    match execute(&cli.command, rule, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "proofee: {e}");
            e.exit_code()
        }
    }
}

/// The real clearing rule.
pub fn default_rule() -> &'static dyn ClearingRule {
    &Proofee
}
