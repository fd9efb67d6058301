//! `rebalance`: command-line front end for the rebalancing simulator.
//!
//! Exit codes: 0 success, 1 invalid input or plan, 2 usage error,
//! 3 experiment failure (an error, or any repetition marked failed).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rebalance_core::adaptation::PromptFixture;
use rebalance_core::domain::{validate_plan_with, FleetState, PlanConstraint, PlanRecord};
use rebalance_core::experiment::{
    run_experiment, run_sweep, write_results, write_sweep, AdapterSpec, ExperimentResults, ExperimentSpec,
};
use rebalance_core::ingest::{build_demand_series, compute_stats, load_trips, IngestConfig, RegionMapping};
use rebalance_core::scenario::ScenarioKind;

const EXIT_INVALID: u8 = 1;
const EXIT_EXPERIMENT: u8 = 3;

#[derive(Parser)]
#[command(name = "rebalance", version, about = "Micromobility rebalancing simulator and experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate a trip CSV into a per-slot demand series and a statistics report.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        /// JSON ingest config (column names, region mapping, timestamp formats).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use community areas 1..=N as regions instead of the configured mapping.
        #[arg(long)]
        regions: Option<usize>,
        #[arg(long, default_value_t = 24)]
        slots_per_day: u32,
        /// Directory receiving series.json and stats.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment spec (TOML) and write results to a new run directory.
    Run {
        spec: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a spec once per scenario level.
    Sweep {
        spec: PathBuf,
        /// Scenario kind to sweep; defaults to the spec's [sweep] table.
        #[arg(long, value_enum)]
        kind: Option<Kind>,
        /// Comma-separated levels, e.g. 0.05,0.1,0.15,0.2.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check a plan file against a fleet state file; exits 1 on violations.
    ValidatePlan {
        /// JSON `{"moves":[{"from":..,"to":..,"count":..}]}`.
        #[arg(long)]
        plan: PathBuf,
        /// JSON array of per-region vehicle counts.
        #[arg(long)]
        state: PathBuf,
        /// Optional JSON array of extra constraints.
        #[arg(long)]
        constraints: Option<PathBuf>,
    },
    /// Print the prompt a fixture would produce, without contacting any model.
    RenderPrompt { fixture: PathBuf },
}

#[derive(Args)]
struct Overrides {
    /// Base seed; repetition r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; results go to a fresh run-NNN directory beneath it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `none`, `llm`, or a mock: echo, shortage_repair, always_invalid, faulty:P[:SEED].
    #[arg(long)]
    adapter: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    RisingDemand,
    ShrinkingSupply,
    DynamicGoal,
}

impl From<Kind> for ScenarioKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::RisingDemand => ScenarioKind::RisingDemand,
            Kind::ShrinkingSupply => ScenarioKind::ShrinkingSupply,
            Kind::DynamicGoal => ScenarioKind::DynamicGoal,
        }
    }
}

/// A failure plus the exit code it maps to.
struct Failure(u8, String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(EXIT_INVALID, e.to_string())
    }
}

fn experiment_err(e: impl std::fmt::Display) -> Failure {
    Failure(EXIT_EXPERIMENT, e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Ingest {
            csv,
            config,
            regions,
            slots_per_day,
            out,
        } => ingest(&csv, config.as_deref(), regions, slots_per_day, &out),
        Command::Run { spec, overrides } => {
            let spec = load_spec(&spec, overrides)?;
            let results = run_experiment(&spec).map_err(experiment_err)?;
            let dir = write_results(&results, &output_root(&spec)).map_err(experiment_err)?;
            report(&results);
            println!("results written to {}", dir.display());
            check_failures(std::slice::from_ref(&results))
        }
        Command::Sweep {
            spec,
            kind,
            levels,
            overrides,
        } => {
            let spec = load_spec(&spec, overrides)?;
            let (kind, levels) = match (kind, levels, &spec.sweep) {
                (Some(k), Some(l), _) => (k.into(), l),
                (k, l, Some(s)) => (k.map_or(s.kind, Into::into), l.unwrap_or_else(|| s.levels.clone())),
                _ => return Err(Failure(EXIT_INVALID, "sweep needs --kind and --levels or a [sweep] table".into())),
            };
            let sweep = run_sweep(&spec, kind, &levels).map_err(experiment_err)?;
            let dir = write_sweep(&sweep, &output_root(&spec)).map_err(experiment_err)?;
            for level in &sweep.levels {
                report(level);
            }
            println!("results written to {}", dir.display());
            check_failures(&sweep.levels)
        }
        Command::ValidatePlan {
            plan,
            state,
            constraints,
        } => validate(&plan, &state, constraints.as_deref()),
        Command::RenderPrompt { fixture } => {
            let fixture: PromptFixture = serde_json::from_str(&read(&fixture)?)?;
            println!("{}", fixture.bundle()?.render());
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(EXIT_INVALID, format!("cannot read {}: {e}", path.display())))
}

fn load_spec(path: &Path, o: Overrides) -> Result<ExperimentSpec, Failure> {
    let adapter = o.adapter.as_deref().map(AdapterSpec::parse).transpose()?;
    let spec = ExperimentSpec::load(path)?.with_overrides(o.seed, o.out, adapter);
    spec.validate()?;
    Ok(spec)
}

fn output_root(spec: &ExperimentSpec) -> PathBuf {
    spec.output_dir.clone().unwrap_or_else(|| PathBuf::from("results"))
}

fn report(results: &ExperimentResults) {
    let level = results.level.map(|l| format!(" @ {l}")).unwrap_or_default();
    println!("{}{level}: {} run(s), {} failed", results.scenario, results.runs.len(), results.failures);
    for (arm, metrics) in &results.aggregate {
        if let Some(a) = metrics.get("avg_satisfaction") {
            println!("  {arm:<9} satisfaction {:.4} ± {:.4}", a.mean, a.std);
        }
    }
}

fn check_failures(results: &[ExperimentResults]) -> Result<(), Failure> {
    let failed: usize = results.iter().map(|r| r.failures).sum();
    if failed > 0 {
        return Err(Failure(EXIT_EXPERIMENT, format!("{failed} run(s) failed; see results.json")));
    }
    Ok(())
}

fn ingest(csv: &Path, config: Option<&Path>, regions: Option<usize>, spd: u32, out: &Path) -> Result<(), Failure> {
    let mut cfg = match config {
        Some(p) => IngestConfig::from_json_file(p)?,
        None => IngestConfig::default(),
    };
    if let Some(n) = regions {
        cfg.mapping = RegionMapping::community_areas(n);
    }
    let (trips, report) = load_trips(csv, &cfg)?;
    let series = build_demand_series(&trips, cfg.mapping.n_regions(), spd);
    fs::create_dir_all(out)?;
    fs::write(out.join("series.json"), serde_json::to_string(&series)?)?;
    if !series.is_empty() {
        fs::write(out.join("stats.json"), serde_json::to_string_pretty(&compute_stats(&series)?)?)?;
    }
    println!(
        "{} rows read, {} kept, {} skipped; {} days of {} slots written to {}",
        report.rows_read,
        report.rows_kept,
        report.rows_skipped,
        series.days(),
        spd,
        out.display()
    );
    for (reason, count) in &report.skipped_by_reason {
        println!("  skipped ({reason}): {count}");
    }
    Ok(())
}

fn validate(plan: &Path, state: &Path, constraints: Option<&Path>) -> Result<(), Failure> {
    let state: FleetState = serde_json::from_str(&read(state)?)?;
    let record: PlanRecord = serde_json::from_str(&read(plan)?)?;
    let plan = record.into_plan(state.len())?;
    let constraints: Vec<PlanConstraint> = match constraints {
        Some(p) => serde_json::from_str(&read(p)?)?,
        None => Vec::new(),
    };
    let violations = validate_plan_with(&state, &plan, state.total(), &constraints);
    if violations.is_empty() {
        println!("plan is valid ({} vehicles moved)", plan.vehicles_moved());
        return Ok(());
    }
    for v in &violations {
        println!("{v}");
    }
    Err(Failure(EXIT_INVALID, format!("{} violation(s)", violations.len())))
}
