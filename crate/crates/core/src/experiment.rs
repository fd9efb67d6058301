//! Batch experiments: paired baseline/adapted arms over seeded repetitions,
//! level sweeps, and result emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptation::{
    llm_adapter, AdaptationLoop, AdaptationTranscript, LanguageModel, LlmAdapter, LlmAdapterConfig, MockSpec,
    DEFAULT_MAX_ITERATIONS,
};
use crate::apportion::largest_remainder;
use crate::domain::{ExperimentConfig, FleetState, PlanConstraint};
use crate::error::{Error, Result};
use crate::ingest::{build_demand_series, generate_synthetic, load_trips, DemandSeries, IngestConfig, PredictorMode};
use crate::metrics::MetricsReport;
use crate::rebalancer::{Rebalancer, RebalancerKind};
use crate::scenario::{scenario_script, ScenarioKind, ScenarioSchedule, ScriptEntry};
use crate::simulator::{run_episode, EpisodeSetup, EpisodeTrace};

pub const BASELINE_ARM: &str = "baseline";
pub const ADAPTED_ARM: &str = "adapted";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source", deny_unknown_fields)]
pub enum DataSource {
    /// Poisson demand; each repetition draws its own history and episode.
    Synthetic {
        #[serde(default = "default_intensity")]
        intensity: f64,
        #[serde(default = "default_history_days")]
        train_days: u32,
        fleet_size: u64,
    },
    /// Trip records; each repetition picks an episode day after the history window.
    Csv {
        path: PathBuf,
        #[serde(default)]
        ingest: Option<PathBuf>,
        #[serde(default = "default_history_days")]
        min_history_days: u32,
        fleet_size: u64,
    },
}

fn default_intensity() -> f64 {
    1.0
}

fn default_history_days() -> u32 {
    7
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum AdapterSpec {
    /// Baseline arm only.
    #[default]
    None,
    /// `echo`, `shortage_repair`, `always_invalid` or `faulty:P[:SEED]`.
    Mock { name: String },
    Llm {
        #[serde(default)]
        config: LlmAdapterConfig,
    },
}

impl AdapterSpec {
    /// Parses a command-line override: `none`, `llm`, or a mock name.
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "none" => Ok(AdapterSpec::None),
            "llm" => Ok(AdapterSpec::Llm {
                config: LlmAdapterConfig::default(),
            }),
            other => {
                MockSpec::parse(other)?;
                Ok(AdapterSpec::Mock { name: other.into() })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSource {
    /// JSON script file, read before `entries`.
    pub script: Option<PathBuf>,
    pub entries: Vec<ScriptEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub kind: ScenarioKind,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub config: ExperimentConfig,
    pub data: DataSource,
    #[serde(default = "default_predictor")]
    pub predictor: PredictorMode,
    #[serde(default = "default_rebalancer")]
    pub rebalancer: Rebalancer,
    #[serde(default)]
    pub adapter: AdapterSpec,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub constraints: Vec<PlanConstraint>,
    #[serde(default)]
    pub scenario: ScenarioSource,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Worker threads for repetitions; all cores when unset.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "one_day")]
    pub episode_days: u32,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

fn default_predictor() -> PredictorMode {
    PredictorMode::HistoricalAverage
}

fn default_rebalancer() -> Rebalancer {
    Rebalancer::new(RebalancerKind::Greedy)
}

fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

fn one() -> usize {
    1
}

fn one_day() -> u32 {
    1
}

impl ExperimentSpec {
    /// Reads a TOML spec. Relative data and script paths resolve against the
    /// spec file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut spec: ExperimentSpec = toml::from_str(text)?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DataSource::Csv { path, ingest, .. } = &mut spec.data {
            resolve(path);
            if let Some(p) = ingest {
                resolve(p);
            }
        }
        if let Some(p) = &mut spec.scenario.script {
            resolve(p);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.rebalancer.ga.validate()?;
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if self.episode_days == 0 {
            return Err(Error::Config("episode_days must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        let mut paths = Vec::new();
        match &self.data {
            DataSource::Synthetic { intensity, .. } => {
                if !(*intensity >= 0.0) {
                    return Err(Error::Config(format!("intensity must be non-negative, got {intensity}")));
                }
            }
            DataSource::Csv { path, ingest, .. } => {
                paths.push(path);
                paths.extend(ingest);
            }
        }
        paths.extend(&self.scenario.script);
        if let Some(missing) = paths.into_iter().find(|p| !p.exists()) {
            return Err(Error::Config(format!("referenced file {} does not exist", missing.display())));
        }
        if let AdapterSpec::Mock { name } = &self.adapter {
            MockSpec::parse(name)?;
        }
        if let AdapterSpec::Llm { config } = &self.adapter {
            config.validate()?;
        }
        self.schedule()?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<ScenarioSchedule> {
        let mut entries = match &self.scenario.script {
            Some(p) => ScenarioSchedule::load(p)?.entries().to_vec(),
            None => Vec::new(),
        };
        entries.extend(self.scenario.entries.iter().cloned());
        entries.sort_by_key(|e| e.slot);
        scenario_script(entries)
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, out: Option<PathBuf>, adapter: Option<AdapterSpec>) -> Self {
        if let Some(s) = seed {
            self.config.rng_seed = s;
        }
        if out.is_some() {
            self.output_dir = out;
        }
        if let Some(a) = adapter {
            self.adapter = a;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Population standard deviation over successful runs.
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptationSummary {
    pub calls: usize,
    pub adapted: usize,
    pub fell_back: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub start_day: u32,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub arms: BTreeMap<String, MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<EpisodeTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adaptation: Option<AdaptationSummary>,
    #[serde(skip)]
    pub transcripts: Vec<AdaptationTranscript>,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResults {
    pub spec: ExperimentSpec,
    pub scenario: String,
    pub level: Option<f64>,
    pub runs: Vec<RunRecord>,
    pub aggregate: BTreeMap<String, BTreeMap<String, Aggregate>>,
    pub failures: usize,
}

impl ExperimentResults {
    pub fn mean(&self, arm: &str, metric: &str) -> Option<f64> {
        self.aggregate.get(arm)?.get(metric).map(|a| a.mean)
    }

    /// Flat `(scenario, level, arm, seed, metric, value)` rows.
    pub fn csv_rows(&self) -> Vec<[String; 6]> {
        let level = self.level.map(|l| l.to_string()).unwrap_or_default();
        let mut rows = Vec::new();
        for run in self.runs.iter().filter(|r| r.ok()) {
            for (arm, report) in &run.arms {
                for (metric, value) in report.scalars() {
                    rows.push([
                        self.scenario.clone(),
                        level.clone(),
                        arm.clone(),
                        run.seed.to_string(),
                        metric.to_string(),
                        value.to_string(),
                    ]);
                }
            }
        }
        rows
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResults {
    pub kind: ScenarioKind,
    pub levels: Vec<ExperimentResults>,
}

enum Model {
    None,
    Mock(MockSpec),
    Live(LlmAdapter),
}

struct World {
    series: DemandSeries,
    start_day: u32,
    initial: FleetState,
}

fn uniform_fleet(n: usize, size: u64) -> FleetState {
    FleetState::new(largest_remainder(size, &vec![1; n]))
}

fn schedule_label(schedule: &ScenarioSchedule) -> String {
    let mut kinds: Vec<&str> = schedule.entries().iter().map(|e| e.kind.label()).collect();
    kinds.dedup();
    if kinds.is_empty() {
        "none".into()
    } else {
        kinds.join("+")
    }
}

struct Runner<'a> {
    spec: &'a ExperimentSpec,
    csv_series: Option<DemandSeries>,
    model: Model,
}

impl<'a> Runner<'a> {
    fn new(spec: &'a ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let cfg = &spec.config;
        let csv_series = match &spec.data {
            DataSource::Csv { path, ingest, .. } => {
                let icfg = match ingest {
                    Some(p) => IngestConfig::from_json_file(p)?,
                    None => IngestConfig::default(),
                };
                let (trips, _) = load_trips(path, &icfg)?;
                Some(build_demand_series(&trips, cfg.n_regions, cfg.slots_per_day))
            }
            DataSource::Synthetic { .. } => None,
        };
        let model = match &spec.adapter {
            AdapterSpec::None => Model::None,
            AdapterSpec::Mock { name } => Model::Mock(MockSpec::parse(name)?),
            AdapterSpec::Llm { config } => Model::Live(llm_adapter(config.clone())?),
        };
        Ok(Self {
            spec,
            csv_series,
            model,
        })
    }

    fn world(&self, seed: u64) -> Result<World> {
        let cfg = &self.spec.config;
        let days = self.spec.episode_days;
        match &self.spec.data {
            DataSource::Synthetic {
                intensity,
                train_days,
                fleet_size,
            } => {
                let slots = (train_days + days) as usize * cfg.slots_per_day as usize;
                // Zero intensity is allowed here as a degenerate empty world.
                let series = if *intensity == 0.0 {
                    DemandSeries::zeros(cfg.n_regions, cfg.slots_per_day, slots)
                } else {
                    generate_synthetic(cfg.n_regions, slots, cfg.slots_per_day, *intensity, seed)?
                };
                Ok(World {
                    series,
                    start_day: *train_days,
                    initial: uniform_fleet(cfg.n_regions, *fleet_size),
                })
            }
            DataSource::Csv {
                min_history_days,
                fleet_size,
                ..
            } => {
                let series = self.csv_series.clone().expect("csv series loaded");
                let available = series.days() as i64 - *min_history_days as i64 - days as i64;
                if available < 0 {
                    return Err(Error::Config(format!(
                        "trip data covers {} days; need {} of history plus {days}",
                        series.days(),
                        min_history_days
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let start_day = min_history_days + rng.random_range(0..=available as u32);
                Ok(World {
                    series,
                    start_day,
                    initial: uniform_fleet(cfg.n_regions, *fleet_size),
                })
            }
        }
    }

    fn run_one(&self, seed: u64, schedule: &ScenarioSchedule) -> RunRecord {
        let mut record = RunRecord {
            seed,
            start_day: 0,
            status: "ok".into(),
            error: None,
            arms: BTreeMap::new(),
            trace: None,
            adaptation: None,
            transcripts: Vec::new(),
        };
        if let Err(e) = self.run_arms(seed, schedule, &mut record) {
            record.status = "failed".into();
            record.error = Some(e.to_string());
            record.arms.clear();
            record.transcripts.clear();
        }
        record
    }

    fn run_arms(&self, seed: u64, schedule: &ScenarioSchedule, record: &mut RunRecord) -> Result<()> {
        let spec = self.spec;
        let cfg = ExperimentConfig {
            rng_seed: seed,
            ..spec.config.clone()
        };
        let world = self.world(seed)?;
        record.start_day = world.start_day;
        let setup = EpisodeSetup {
            cfg: &cfg,
            series: &world.series,
            start_day: world.start_day,
            slots: (spec.episode_days * cfg.slots_per_day) as usize,
            predictor: spec.predictor,
            initial: world.initial.clone(),
            schedule: schedule.clone(),
        };
        let baseline = run_episode(&setup, &spec.rebalancer, None)?;
        record.arms.insert(BASELINE_ARM.into(), MetricsReport::from_episode(&baseline));
        record.trace = Some(baseline.trace.clone());

        let boxed: Box<dyn LanguageModel>;
        let adapter: &dyn LanguageModel = match &self.model {
            Model::None => return Ok(()),
            Model::Mock(m) => {
                boxed = m.build(seed)?;
                boxed.as_ref()
            }
            Model::Live(a) => a,
        };
        let lp = AdaptationLoop {
            adapter,
            max_iterations: spec.max_iterations,
            constraints: spec.constraints.clone(),
        };
        let adapted = run_episode(&setup, &spec.rebalancer, Some(&lp))?;
        if adapted.trace != baseline.trace {
            return Err(Error::Structure("paired arms observed different demand or scenario draws".into()));
        }
        record.arms.insert(ADAPTED_ARM.into(), MetricsReport::from_episode(&adapted));
        let adapted_calls = adapted.transcripts.iter().filter(|t| t.adapted()).count();
        record.adaptation = Some(AdaptationSummary {
            calls: adapted.transcripts.len(),
            adapted: adapted_calls,
            fell_back: adapted.transcripts.len() - adapted_calls,
            iterations: adapted.transcripts.iter().map(|t| t.iterations_used).sum(),
        });
        record.transcripts = adapted.transcripts;
        Ok(())
    }

    fn run(&self, schedule: &ScenarioSchedule, level: Option<f64>) -> Result<ExperimentResults> {
        let spec = self.spec;
        let base = spec.config.rng_seed;
        let seeds: Vec<u64> = (0..spec.repetitions as u64).map(|r| base.wrapping_add(r)).collect();
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(w) = spec.workers {
            pool = pool.num_threads(w);
        }
        let pool = pool
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        let mut runs: Vec<RunRecord> =
            pool.install(|| seeds.par_iter().map(|&s| self.run_one(s, schedule)).collect());
        runs.sort_by_key(|r| r.seed);
        let failures = runs.iter().filter(|r| !r.ok()).count();
        Ok(ExperimentResults {
            spec: spec.clone(),
            scenario: schedule_label(schedule),
            level,
            aggregate: aggregate(&runs),
            failures,
            runs,
        })
    }
}

fn aggregate(runs: &[RunRecord]) -> BTreeMap<String, BTreeMap<String, Aggregate>> {
    let mut values: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for run in runs.iter().filter(|r| r.ok()) {
        for (arm, report) in &run.arms {
            for (metric, v) in report.scalars() {
                values
                    .entry(arm.clone())
                    .or_default()
                    .entry(metric.to_string())
                    .or_default()
                    .push(v);
            }
        }
    }
    values
        .into_iter()
        .map(|(arm, metrics)| {
            let stats = metrics
                .into_iter()
                .map(|(m, xs)| {
                    let n = xs.len();
                    let mean = xs.iter().sum::<f64>() / n as f64;
                    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
                    (m, Aggregate { mean, std: var.sqrt(), n })
                })
                .collect();
            (arm, stats)
        })
        .collect()
}

/// Runs every repetition of a spec with its own scenario script.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResults> {
    let runner = Runner::new(spec)?;
    runner.run(&spec.schedule()?, None)
}

/// Runs the spec once per level, overriding the magnitude of every scenario of `kind`.
pub fn run_sweep(spec: &ExperimentSpec, kind: ScenarioKind, levels: &[f64]) -> Result<SweepResults> {
    let runner = Runner::new(spec)?;
    let schedule = spec.schedule()?;
    if !schedule.entries().iter().any(|e| e.kind == kind) {
        return Err(Error::Config(format!(
            "sweep over {} but the scenario script has no such entry",
            kind.label()
        )));
    }
    let levels = levels
        .iter()
        .map(|&level| runner.run(&schedule.with_level(kind, level)?, Some(level)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResults { kind, levels })
}

/// Creates the next free `run-NNN` directory, so earlier results are never overwritten.
pub fn next_run_dir(root: &Path) -> Result<PathBuf> {
    fs::create_dir_all(root)?;
    for k in 1.. {
        let dir = root.join(format!("run-{k:03}"));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!()
}

fn write_csv(path: &Path, rows: impl IntoIterator<Item = [String; 6]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scenario", "level", "arm", "seed", "metric", "value"])?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_transcripts(dir: &Path, results: &ExperimentResults) -> Result<()> {
    let tdir = dir.join("transcripts");
    for run in &results.runs {
        for (k, t) in run.transcripts.iter().enumerate() {
            fs::create_dir_all(&tdir)?;
            let level = results.level.map(|l| format!("level{l}_")).unwrap_or_default();
            let path = tdir.join(format!("{level}seed{}_call{:02}.json", run.seed, k + 1));
            fs::write(path, serde_json::to_string_pretty(t)?)?;
        }
    }
    Ok(())
}

/// Writes `results.json`, `results.csv` and transcripts into a fresh run directory under `root`.
pub fn write_results(results: &ExperimentResults, root: &Path) -> Result<PathBuf> {
    let dir = next_run_dir(root)?;
    fs::write(dir.join("results.json"), serde_json::to_string_pretty(results)?)?;
    write_csv(&dir.join("results.csv"), results.csv_rows())?;
    write_transcripts(&dir, results)?;
    Ok(dir)
}

pub fn write_sweep(sweep: &SweepResults, root: &Path) -> Result<PathBuf> {
    let dir = next_run_dir(root)?;
    fs::write(dir.join("results.json"), serde_json::to_string_pretty(sweep)?)?;
    write_csv(&dir.join("results.csv"), sweep.levels.iter().flat_map(|r| r.csv_rows()))?;
    for level in &sweep.levels {
        write_transcripts(&dir, level)?;
    }
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ZERO_DEMAND: &str = r#"
repetitions = 1
[config]
n_regions = 3
slots_per_day = 4
rebalance_period = 4
horizon = 4
[data]
source = "synthetic"
intensity = 0.0
train_days = 1
fleet_size = 6
[rebalancer]
kind = "null"
"#;

    #[test]
    fn zero_demand_run() {
        let spec = ExperimentSpec::from_toml(ZERO_DEMAND, Path::new(".")).unwrap();
        let res = run_experiment(&spec).unwrap();
        assert_eq!(res.failures, 0, "{:?}", res.runs[0].error);
        let report = &res.runs[0].arms[BASELINE_ARM];
        assert_eq!(report.avg_satisfaction, 1.0);
        assert!(report.flags.contains(&"no_demand".to_string()));
        assert_eq!(report.revenue, 0.0);
    }

    #[test]
    fn spec_validation() {
        let bad = ZERO_DEMAND.replace("repetitions = 1", "repetitions = 0");
        assert!(ExperimentSpec::from_toml(&bad, Path::new(".")).is_err());
        let missing = ZERO_DEMAND.replace(
            "[rebalancer]",
            "[scenario]\nscript = \"does/not/exist.json\"\n[rebalancer]",
        );
        assert!(ExperimentSpec::from_toml(&missing, Path::new(".")).is_err());
        let unknown = format!("{ZERO_DEMAND}\n[adapter]\nkind = \"mock\"\nname = \"oracle\"\n");
        assert!(ExperimentSpec::from_toml(&unknown, Path::new(".")).is_err());
    }

    #[test]
    fn aggregate_mean_std() {
        let spec = ExperimentSpec::from_toml(&ZERO_DEMAND.replace("repetitions = 1", "repetitions = 3"), Path::new("."))
            .unwrap();
        let res = run_experiment(&spec).unwrap();
        let agg = res.aggregate[BASELINE_ARM]["avg_satisfaction"];
        assert_eq!((agg.mean, agg.std, agg.n), (1.0, 0.0, 3));
        assert_eq!(res.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![42, 43, 44]);
    }

    #[test]
    fn adapter_override_parsing() {
        assert_eq!(AdapterSpec::parse("none").unwrap(), AdapterSpec::None);
        assert!(matches!(AdapterSpec::parse("faulty:0.5").unwrap(), AdapterSpec::Mock { .. }));
        assert!(AdapterSpec::parse("bogus").is_err());
    }
}
