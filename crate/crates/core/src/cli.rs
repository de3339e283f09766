//! Experiment runner: configuration, seeded repeats, result files and summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionKind;
use crate::engine::{run_bopp, RegretTrace, RunConfig};
use crate::error::{Error, Result};
use crate::objectives::{external_objective, make_synthetic, Objective, BENCHMARK_NAMES};
use crate::optimizer::BoxDomain;
use crate::pseudo::PseudoSchedule;
use crate::rng::derive_seed;
use crate::theory::{run_suite, Hooks};

pub const OUT_DIR_ENV: &str = "BOPP_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "results";

#[derive(Debug, Parser)]
#[command(name = "bopp", version, about = "Bayesian optimization with pseudo-points")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write per-iteration rows and summaries.
    Run(RunArgs),
    /// Recompute the summary files from a result directory.
    Summarize {
        /// Result directory containing iterations.csv.
        dir: PathBuf,
    },
    /// Run the numerical identity checks and write verify.json.
    Verify(VerifyArgs),
    /// List the built-in benchmark objectives.
    ListObjectives,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in objective, used when no config file is given.
    #[arg(long)]
    pub objective: Option<String>,
    /// Algorithm preset (ucb, pi-pp001, ...); repeatable.
    #[arg(long = "algorithm")]
    pub algorithms: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub instances: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace the variance-reduction closed form with a perturbed one.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

/// Objective given by name or by an external command over a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObjectiveSpec {
    External {
        command: String,
        lower: Vec<f64>,
        upper: Vec<f64>,
        #[serde(default)]
        name: Option<String>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
    Builtin {
        name: String,
    },
}

fn default_timeout() -> u64 {
    300
}

impl ObjectiveSpec {
    pub fn build(&self) -> Result<Box<dyn Objective>> {
        match self {
            ObjectiveSpec::Builtin { name } => Ok(Box::new(make_synthetic(name)?)),
            ObjectiveSpec::External {
                command,
                lower,
                upper,
                name,
                timeout_secs,
            } => {
                let domain = BoxDomain::new(lower.clone(), upper.clone())?;
                let mut objective = external_objective(command, domain).with_timeout(Duration::from_secs(*timeout_secs));
                if let Some(name) = name {
                    objective = objective.with_name(name.clone());
                }
                Ok(Box::new(objective))
            }
        }
    }

    fn is_external(&self) -> bool {
        matches!(self, ObjectiveSpec::External { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub name: String,
    pub acquisition: AcquisitionKind,
    pub tau0: f64,
}

impl AlgorithmSpec {
    /// `ucb`, `pi`, `ei`, optionally suffixed `-pp01`, `-pp001` or `-pp0001`.
    pub fn preset(name: &str) -> Result<Self> {
        let lower = name.to_ascii_lowercase();
        let (kind, suffix) = lower.split_once('-').unwrap_or((lower.as_str(), ""));
        let acquisition: AcquisitionKind = kind.parse().map_err(|_| Error::UnknownAlgorithm(name.to_string()))?;
        let tau0 = match suffix {
            "" => 0.0,
            "pp01" => 0.01,
            "pp001" => 0.001,
            "pp0001" => 0.0001,
            _ => return Err(Error::UnknownAlgorithm(name.to_string())),
        };
        Ok(AlgorithmSpec {
            name: lower,
            acquisition,
            tau0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum AlgorithmEntry {
    Preset(String),
    Custom(AlgorithmSpec),
}

fn default_repeats() -> usize {
    20
}
fn default_budget() -> usize {
    100
}
fn default_initial() -> usize {
    5
}
fn default_noise() -> f64 {
    1e-4
}
fn default_one() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_starts() -> usize {
    8
}
fn default_fit_iterations() -> usize {
    60
}
fn default_delta() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    objective: ObjectiveSpec,
    algorithms: Vec<AlgorithmEntry>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_repeats")]
    repeats: usize,
    #[serde(default = "default_budget")]
    budget: usize,
    #[serde(default = "default_initial")]
    initial_points: usize,
    #[serde(default)]
    noise_variance: Option<f64>,
    #[serde(default)]
    observation_noise: Option<f64>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    jobs: Option<usize>,
    #[serde(default)]
    model: Option<ModelSettings>,
}

/// Surrogate and inner-optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSettings {
    #[serde(default = "default_one")]
    pub fit_every: usize,
    #[serde(default = "default_starts")]
    pub fit_starts: usize,
    #[serde(default = "default_fit_iterations")]
    pub fit_iterations: usize,
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default = "default_true")]
    pub local_polish: bool,
    /// Estimate the model noise by likelihood, bounded below by `noise_variance`.
    #[serde(default)]
    pub fit_noise: bool,
    /// Acquisition evaluations per iteration; 200·d when absent.
    #[serde(default)]
    pub direct_evaluations: Option<usize>,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            fit_every: 1,
            fit_starts: default_starts(),
            fit_iterations: default_fit_iterations(),
            standardize: true,
            local_polish: true,
            fit_noise: false,
            direct_evaluations: None,
            delta: default_delta(),
        }
    }
}

/// Fully resolved experiment description; written back as `config.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    pub seed: u64,
    pub repeats: usize,
    pub budget: usize,
    pub initial_points: usize,
    pub noise_variance: f64,
    pub observation_noise: f64,
    pub output_dir: PathBuf,
    pub jobs: usize,
    pub model: ModelSettings,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::resolve(raw)
    }

    pub fn for_objective(objective: &str, algorithms: &[String]) -> Result<Self> {
        let algorithms = if algorithms.is_empty() {
            vec![AlgorithmEntry::Preset("ucb".into())]
        } else {
            algorithms.iter().cloned().map(AlgorithmEntry::Preset).collect()
        };
        Self::resolve(RawConfig {
            objective: ObjectiveSpec::Builtin {
                name: objective.to_string(),
            },
            algorithms,
            seed: 0,
            repeats: default_repeats(),
            budget: default_budget(),
            initial_points: default_initial(),
            noise_variance: None,
            observation_noise: None,
            output_dir: None,
            jobs: None,
            model: None,
        })
    }

    fn resolve(raw: RawConfig) -> Result<Self> {
        let algorithms = raw
            .algorithms
            .into_iter()
            .map(|entry| match entry {
                AlgorithmEntry::Preset(name) => AlgorithmSpec::preset(&name),
                AlgorithmEntry::Custom(spec) => Ok(spec),
            })
            .collect::<Result<Vec<_>>>()?;
        let external = raw.objective.is_external();
        let noise_variance = raw.noise_variance.unwrap_or(default_noise());
        let config = ExperimentConfig {
            observation_noise: raw
                .observation_noise
                .unwrap_or(if external { 0.0 } else { noise_variance }),
            noise_variance,
            objective: raw.objective,
            algorithms,
            seed: raw.seed,
            repeats: raw.repeats,
            budget: raw.budget,
            initial_points: raw.initial_points,
            output_dir: raw.output_dir.unwrap_or_else(default_out_dir),
            jobs: raw.jobs.unwrap_or(1),
            model: raw.model.unwrap_or_default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("at least one algorithm is required".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        let mut names = BTreeSet::new();
        for a in &self.algorithms {
            if !names.insert(a.name.as_str()) {
                return Err(Error::Config(format!("duplicate algorithm name {}", a.name)));
            }
        }
        if let ObjectiveSpec::Builtin { name } = &self.objective {
            crate::objectives::Benchmark::from_name(name)?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Engine configuration for one algorithm in one repeat.
    pub fn run_config(&self, algorithm: &AlgorithmSpec, domain: &BoxDomain, repeat: usize) -> Result<RunConfig> {
        let dim = domain.dim();
        let mut config = RunConfig::experiment(algorithm.acquisition, 0.0, dim, derive_seed(self.seed, repeat as u64))?;
        let width = (0..dim).map(|j| domain.width(j)).fold(0.0, f64::max);
        config.pseudo = PseudoSchedule::new(algorithm.tau0, width)?;
        config.budget = self.budget;
        config.initial_points = self.initial_points;
        config.noise_variance = self.noise_variance;
        config.observation_noise = self.observation_noise;
        config.delta = self.model.delta;
        config.fit_every = self.model.fit_every;
        config.fit_starts = self.model.fit_starts;
        config.fit_iterations = self.model.fit_iterations;
        config.standardize = self.model.standardize;
        config.direct.local_polish = self.model.local_polish;
        config.fit_noise = self.model.fit_noise;
        if let Some(evals) = self.model.direct_evaluations {
            config.direct.max_evaluations = evals;
        }
        config.initial_lengthscale = 0.25 * width;
        config.validate()?;
        Ok(config)
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// One finished or failed run.
#[derive(Debug)]
pub struct RunRecord {
    pub algorithm: String,
    pub repeat: usize,
    pub outcome: Result<RegretTrace>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub summary: Option<Summary>,
    pub failures: usize,
}

/// Runs every (repeat, algorithm) pair on a pool of `config.jobs` workers and
/// writes the result files in a fixed order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let objective = config.objective.build()?;
    let domain = objective.domain().clone();
    let tasks: Vec<(usize, &AlgorithmSpec)> = (0..config.repeats)
        .flat_map(|r| config.algorithms.iter().map(move |a| (r, a)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let objective_ref: &dyn Objective = objective.as_ref();
    let records: Vec<RunRecord> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(repeat, algorithm)| {
                let outcome = config
                    .run_config(algorithm, &domain, repeat)
                    .and_then(|rc| run_bopp(objective_ref, &rc));
                match &outcome {
                    Ok(trace) => info!(
                        "{} repeat {repeat}: final {:?}",
                        algorithm.name,
                        trace.final_simple_regret().or(trace.best_true_value())
                    ),
                    Err(e) => error!("{} repeat {repeat} failed: {e}", algorithm.name),
                }
                RunRecord {
                    algorithm: algorithm.name.clone(),
                    repeat,
                    outcome,
                }
            })
            .collect()
    });

    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join("config.toml"), &config.to_toml()?)?;
    write_iterations(&out.join("iterations.csv"), domain.dim(), &records)?;
    write_initial(&out.join("initial.csv"), domain.dim(), &records)?;

    let failed: Vec<&RunRecord> = records.iter().filter(|r| r.outcome.is_err()).collect();
    let failure_path = out.join("failures.csv");
    if failed.is_empty() {
        if failure_path.exists() {
            fs::remove_file(&failure_path).map_err(|e| Error::io(&failure_path, e))?;
        }
    } else {
        let mut w = csv::Writer::from_path(&failure_path)?;
        w.write_record(["algorithm", "repeat", "error"])?;
        for r in &failed {
            let message = r.outcome.as_ref().err().map(|e| e.to_string()).unwrap_or_default();
            w.write_record([r.algorithm.clone(), r.repeat.to_string(), message])?;
        }
        w.flush().map_err(|e| Error::io(&failure_path, e))?;
    }

    let summary = match summarize(out) {
        Ok(s) => Some(s),
        Err(e) => {
            error!("summary not written: {e}");
            None
        }
    };
    Ok(ExperimentOutcome {
        failures: failed.len(),
        records,
        summary,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_iterations(path: &Path, dim: usize, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = vec!["algorithm".into(), "repeat".into(), "iter".into()];
    header.extend((0..dim).map(|j| format!("x{j}")));
    header.extend(
        ["y", "simple_regret", "cumulative_regret", "delta_v", "beta", "info_gain", "ms"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for record in records {
        let Ok(trace) = &record.outcome else { continue };
        for s in &trace.steps {
            let mut row = vec![record.algorithm.clone(), record.repeat.to_string(), s.iteration.to_string()];
            row.extend(s.point.iter().map(|v| v.to_string()));
            row.push(s.observation.to_string());
            row.push(opt(s.simple_regret));
            row.push(opt(s.cumulative_regret));
            row.push(s.delta_v.to_string());
            row.push(opt(s.beta));
            row.push(s.info_gain.to_string());
            row.push(format!("{:.3}", s.ms));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_initial(path: &Path, dim: usize, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = vec!["algorithm".into(), "repeat".into(), "index".into()];
    header.extend((0..dim).map(|j| format!("x{j}")));
    header.extend(["y".to_string(), "f".to_string()]);
    w.write_record(&header)?;
    for record in records {
        let Ok(trace) = &record.outcome else { continue };
        for (i, ((x, y), f)) in trace.initial.iter().zip(&trace.initial_true).enumerate() {
            let mut row = vec![record.algorithm.clone(), record.repeat.to_string(), i.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            row.push(y.to_string());
            row.push(f.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Terminal statistics of one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub objective: String,
    /// `simple_regret` or `best_y`.
    pub metric: String,
    pub repeats: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single repeat.
    pub std: f64,
    pub single_repeat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub algorithm: String,
    pub iter: usize,
    pub mean: f64,
    pub std: f64,
    pub band: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub curves: Vec<CurvePoint>,
}

/// Sample mean and standard deviation; the deviation is 0 for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Deserialize)]
struct PersistedHeader {
    objective: ObjectiveSpec,
}

/// Reads `iterations.csv` under `dir` and writes `summary.csv`, `summary.txt`
/// and `curves.csv`. Simple regret is summarized when present, otherwise the
/// best observation so far.
pub fn summarize(dir: &Path) -> Result<Summary> {
    let objective = fs::read_to_string(dir.join("config.toml"))
        .ok()
        .and_then(|text| toml::from_str::<PersistedHeader>(&text).ok())
        .map(|h| match h.objective {
            ObjectiveSpec::Builtin { name } => name,
            ObjectiveSpec::External { name, command, .. } => name.unwrap_or(command),
        })
        .unwrap_or_else(|| "unknown".to_string());

    let path = dir.join("iterations.csv");
    let mut reader = csv::Reader::from_path(&path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{} lacks column {name}", path.display())))
    };
    let (c_alg, c_rep, c_iter, c_y, c_regret) = (
        column("algorithm")?,
        column("repeat")?,
        column("iter")?,
        column("y")?,
        column("simple_regret")?,
    );

    // algorithm -> repeat -> iter -> metric value
    let mut cells: BTreeMap<String, BTreeMap<usize, BTreeMap<usize, f64>>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut uses_regret = None;
    for row in reader.records() {
        let row = row?;
        let parse_usize = |i: usize| {
            row[i]
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("bad integer {:?}: {e}", &row[i])))
        };
        let parse_f64 = |i: usize| {
            row[i]
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number {:?}: {e}", &row[i])))
        };
        let algorithm = row[c_alg].to_string();
        let regret = !row[c_regret].is_empty();
        if *uses_regret.get_or_insert(regret) != regret {
            return Err(Error::Config("simple_regret column is only partly filled".into()));
        }
        let value = if regret { parse_f64(c_regret)? } else { parse_f64(c_y)? };
        if !order.contains(&algorithm) {
            order.push(algorithm.clone());
        }
        cells
            .entry(algorithm)
            .or_default()
            .entry(parse_usize(c_rep)?)
            .or_default()
            .insert(parse_usize(c_iter)?, value);
    }
    if cells.is_empty() {
        return Err(Error::RaggedResults(format!("{} has no rows", path.display())));
    }
    let uses_regret = uses_regret.unwrap_or(true);

    let repeats: BTreeSet<usize> = cells.values().flat_map(|r| r.keys().copied()).collect();
    let iterations: BTreeSet<usize> = cells
        .values()
        .flat_map(|r| r.values().flat_map(|i| i.keys().copied()))
        .collect();
    let mut missing = Vec::new();
    for alg in &order {
        for rep in &repeats {
            for it in &iterations {
                if cells[alg].get(rep).and_then(|r| r.get(it)).is_none() {
                    missing.push(format!("({alg}, {rep}, {it})"));
                }
            }
        }
    }
    if !missing.is_empty() {
        let shown: Vec<&String> = missing.iter().take(20).collect();
        let more = if missing.len() > shown.len() {
            format!(" and {} more", missing.len() - shown.len())
        } else {
            String::new()
        };
        return Err(Error::RaggedResults(format!(
            "missing (algorithm, repeat, iter) cells: {}{more}",
            shown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        )));
    }

    let last = *iterations.iter().next_back().expect("non-empty");
    let metric = if uses_regret { "simple_regret" } else { "best_y" };
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for alg in &order {
        // best-so-far curve per repeat
        let series: Vec<Vec<f64>> = repeats
            .iter()
            .map(|rep| {
                let mut best = f64::NEG_INFINITY;
                cells[alg][rep]
                    .values()
                    .map(|&v| {
                        if uses_regret {
                            v
                        } else {
                            best = best.max(v);
                            best
                        }
                    })
                    .collect()
            })
            .collect();
        let terminal: Vec<f64> = series.iter().map(|s| *s.last().expect("complete")).collect();
        let (mean, std) = mean_std(&terminal);
        rows.push(SummaryRow {
            algorithm: alg.clone(),
            objective: objective.clone(),
            metric: metric.to_string(),
            repeats: terminal.len(),
            mean,
            std,
            single_repeat: terminal.len() == 1,
        });
        for (k, it) in iterations.iter().enumerate() {
            let column: Vec<f64> = series.iter().map(|s| s[k]).collect();
            let (mean, std) = mean_std(&column);
            curves.push(CurvePoint {
                algorithm: alg.clone(),
                iter: *it,
                mean,
                std,
                band: std / 4.0,
            });
        }
    }
    debug_assert!(curves.iter().any(|c| c.iter == last));

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(["algorithm", "objective", "metric", "repeats", "mean", "std", "single_repeat"])?;
    for r in &rows {
        w.write_record([
            r.algorithm.clone(),
            r.objective.clone(),
            r.metric.clone(),
            r.repeats.to_string(),
            r.mean.to_string(),
            r.std.to_string(),
            r.single_repeat.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(dir.join("summary.csv"), e))?;

    let mut w = csv::Writer::from_path(dir.join("curves.csv"))?;
    w.write_record(["algorithm", "iter", "mean", "std", "lower", "upper", "band"])?;
    for c in &curves {
        w.write_record([
            c.algorithm.clone(),
            c.iter.to_string(),
            c.mean.to_string(),
            c.std.to_string(),
            (c.mean - c.band).to_string(),
            (c.mean + c.band).to_string(),
            c.band.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(dir.join("curves.csv"), e))?;

    let text = render_table(&rows);
    write_text(&dir.join("summary.txt"), &text)?;
    Ok(Summary { rows, curves })
}

pub fn render_table(rows: &[SummaryRow]) -> String {
    let width = rows.iter().map(|r| r.algorithm.len()).max().unwrap_or(9).max(9);
    let mut out = String::new();
    if let Some(first) = rows.first() {
        out.push_str(&format!(
            "objective: {}   metric: {} (mean ± sample std)\n",
            first.objective, first.metric
        ));
    }
    out.push_str(&format!("{:<width$}  {:>7}  {:>24}\n", "algorithm", "repeats", "terminal value"));
    for r in rows {
        let flag = if r.single_repeat { "  (single repeat, std not estimated)" } else { "" };
        out.push_str(&format!(
            "{:<width$}  {:>7}  {:>24}{flag}\n",
            r.algorithm,
            r.repeats,
            format!("{:.4} ± {:.4}", r.mean, r.std)
        ));
    }
    out
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = match (&args.config, &args.objective) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            ExperimentConfig::from_toml(&text)?
        }
        (None, Some(name)) => ExperimentConfig::for_objective(name, &args.algorithms)?,
        (None, None) => return Err(Error::Config("either --config or --objective is required".into())),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(repeats) = args.repeats {
        config.repeats = repeats;
    }
    if let Some(budget) = args.budget {
        config.budget = budget;
    }
    if let Some(jobs) = args.jobs {
        config.jobs = jobs;
    }
    config.validate()?;
    Ok(config)
}

fn run_command(args: &RunArgs) -> Result<ExitCode> {
    let config = load_config(args)?;
    let outcome = run_experiment(&config)?;
    if let Some(summary) = &outcome.summary {
        print!("{}", render_table(&summary.rows));
    }
    println!("results written to {}", config.output_dir.display());
    if outcome.failures > 0 {
        eprintln!("{} run(s) failed; see failures.csv", outcome.failures);
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn verify_command(args: &VerifyArgs) -> Result<ExitCode> {
    let hooks = if args.inject_fault {
        Hooks {
            variance_reduction: |c, x| Ok(c.variance_reduction(x)? * 1.001 + 1e-7),
        }
    } else {
        Hooks::default()
    };
    let report = run_suite(args.seed, args.instances, &hooks);
    let out = args.out.clone().unwrap_or_else(default_out_dir);
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let path = out.join("verify.json");
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    write_text(&path, &json)?;

    for c in &report.checks {
        println!(
            "{:<28} runs {:>4}  failed {:>3}  skipped {:>3}  max error {:.3e} (tol {:.0e})",
            c.check, c.runs, c.failed, c.skipped, c.max_error, c.tolerance
        );
    }
    let d = &report.delta_m;
    println!(
        "{:<28} trials {:>4}  exceeded {:>3}  fraction {:.3} (threshold {:.2})",
        "delta_m_bound", d.trials, d.exceedances, d.fraction, d.threshold
    );
    for f in &report.failures {
        println!("FAILED {} seed {} max error {:.3e}", f.check, f.seed, f.max_error);
    }
    println!("report written to {}", path.display());
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn list_objectives() -> Result<ExitCode> {
    let mut stdout = std::io::stdout().lock();
    for name in BENCHMARK_NAMES {
        let f = make_synthetic(name)?;
        writeln!(
            stdout,
            "{name:<10} d={}  domain [-1, 1]^{}  max {:.6}",
            f.dim(),
            f.dim(),
            f.optimum_value().unwrap_or(f64::NAN)
        )
        .map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => run_command(&args),
        Command::Summarize { dir } => {
            let summary = summarize(&dir)?;
            print!("{}", render_table(&summary.rows));
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(args) => verify_command(&args),
        Command::ListObjectives => list_objectives(),
    }
}
