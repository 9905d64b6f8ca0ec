//! `augsens design | run | analyze | report`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

pub mod analyze;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::augment::AugmentationParams;
use crate::dataset::{self, SplitSizes, NUM_CLASSES};
use crate::design::{generate_vectors, ExperimentGrid, Plan};
use crate::metrics::ReliabilityMode;
use crate::runner::{execute, load_results, ExecuteSummary, RunRecord, RunStatus, TrainingExecutor};
use crate::surrogate::Metric;

pub use analyze::{Analysis, AnalysisSummary};
pub use config::Config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "augsens", version, about = "Augmentation sensitivity to training hyper-parameters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Enumerate the run plan and write it to the plan file.
    Design,
    /// Train every planned run not yet in the results store.
    Run,
    /// Fit surrogates and compute the metrics table.
    Analyze,
    /// Write the markdown report and plot-data series.
    Report,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON configuration file; defaults apply to anything it omits.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config field, e.g. `--set grid.vector_count=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub plan: Option<PathBuf>,
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    /// Analysis / report directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_name = "accuracy|loss")]
    pub metric: Option<Metric>,
    #[arg(long, global = true, value_name = "table|equation")]
    pub reliability_mode: Option<ReliabilityMode>,
    #[arg(long, global = true)]
    pub sensitivity_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub top_n: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

impl CommonArgs {
    /// Config file, then `--set` overrides, then the dedicated flags.
    pub fn resolve(&self) -> Result<Config, CliError> {
        let base = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let mut c = base.with_overrides(&self.overrides)?;
        if let Some(v) = &self.plan {
            c.plan = v.clone();
        }
        if let Some(v) = &self.store {
            c.store = v.clone();
        }
        if let Some(v) = &self.out {
            c.out = v.clone();
        }
        if let Some(v) = self.workers {
            c.workers = v;
        }
        if let Some(v) = self.metric {
            c.metric = v;
        }
        if let Some(v) = self.reliability_mode {
            c.reliability_mode = v;
        }
        if let Some(v) = self.sensitivity_threshold {
            c.sensitivity_threshold = v;
        }
        if let Some(v) = self.top_n {
            c.top_n = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c.validate()?;
        Ok(c)
    }
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", p.display()))),
        _ => Ok(()),
    }
}

pub fn build_grid(config: &Config) -> Result<ExperimentGrid, CliError> {
    let vectors = generate_vectors(config.grid.vector_count, config.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let grid = ExperimentGrid {
        classifiers: config.grid.classifiers.clone(),
        hyperparams: config.grid.hyperparams.clone(),
        vectors,
        seed_base: config.seed,
        include_baseline: config.grid.include_baseline,
    };
    grid.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(grid)
}

pub fn cmd_design(config: &Config) -> Result<Plan, CliError> {
    let plan = Plan::from_grid(build_grid(config)?).map_err(|e| CliError::Usage(e.to_string()))?;
    ensure_parent(&config.plan)?;
    plan.save(&config.plan)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{}", plan.grid.summary());
    println!("plan written to {}", config.plan.display());
    Ok(plan)
}

fn load_plan(config: &Config) -> Result<Plan, CliError> {
    if !config.plan.exists() {
        return Err(CliError::Usage(format!(
            "plan {} not found; run `augsens design` first",
            config.plan.display()
        )));
    }
    Plan::load(&config.plan).map_err(|e| CliError::Usage(e.to_string()))
}

/// Loads Fashion-MNIST, splits train/validation and applies the subsample.
pub fn load_split(config: &Config) -> Result<dataset::DataSplit, CliError> {
    for p in config.dataset.all() {
        if !p.exists() {
            return Err(CliError::Usage(format!("dataset file {} not found", p.display())));
        }
    }
    let d = &config.dataset;
    let load = |images: &Path, labels: &Path| {
        dataset::load_idx(images, labels).map_err(|e| CliError::Usage(e.to_string()))
    };
    let pool = load(&d.train_images, &d.train_labels)?;
    let test = load(&d.test_images, &d.test_labels)?;
    let split = dataset::split(pool, test, config.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    match config.subsample {
        Some(n) => dataset::subsample(&split, n, config.seed.wrapping_add(1))
            .map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(split),
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    seed: u64,
    plan: &'a Path,
    dataset: &'a config::DatasetPaths,
    subsample: Option<usize>,
    split: SplitSizes,
    train_classes: [usize; NUM_CLASSES],
    augmentation: &'a AugmentationParams,
    grid_summary: String,
}

pub fn manifest_path(store: &Path) -> PathBuf {
    let mut p = store.as_os_str().to_owned();
    p.push(".manifest.json");
    PathBuf::from(p)
}

pub fn cmd_run(config: &Config) -> Result<ExecuteSummary, CliError> {
    let plan = load_plan(config)?;
    let split = load_split(config)?;
    let sizes = split.sizes();
    println!(
        "data: {} train, {} valid, {} test; {}",
        sizes.train,
        sizes.valid,
        sizes.test,
        plan.grid.summary()
    );
    ensure_parent(&config.store)?;
    let manifest = RunManifest {
        seed: config.seed,
        plan: &config.plan,
        dataset: &config.dataset,
        subsample: config.subsample,
        split: sizes,
        train_classes: dataset::class_histogram(&split.train),
        augmentation: &config.augmentation,
        grid_summary: plan.grid.summary(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let mpath = manifest_path(&config.store);
    fs::write(&mpath, json + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", mpath.display())))?;

    let mut executor = TrainingExecutor::new(split, config.augmentation.clone());
    if let Some(dir) = &config.save_models {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        executor.models_dir = Some(dir.clone());
    }
    let progress = |r: &RunRecord, done: usize, total: usize| {
        let detail = match (r.status, r.test_accuracy) {
            (RunStatus::Done, Some(a)) => format!("test acc {a:.2}%"),
            _ => format!("FAILED: {}", r.error.as_deref().unwrap_or("")),
        };
        eprintln!(
            "[{done}/{total}] ({}, {}, {}) {detail} in {:.1}s",
            r.classifier, r.hyper_params, r.vector, r.wall_seconds
        );
    };
    let summary = execute(&plan.runs, &config.store, config.workers(), &executor, Some(&progress))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{} executed, {} skipped", summary.executed, summary.skipped);
    let failed = summary
        .table
        .records
        .iter()
        .filter(|r| r.status == RunStatus::Failed)
        .count();
    if failed > 0 {
        return Err(CliError::Runtime(format!(
            "{failed} run(s) in the store failed; analyze will exclude them"
        )));
    }
    Ok(summary)
}

pub fn cmd_analyze(config: &Config) -> Result<Analysis, CliError> {
    let plan = load_plan(config)?;
    if !config.store.exists() {
        return Err(CliError::Runtime(format!("results store {} not found", config.store.display())));
    }
    let table = load_results(&config.store).map_err(|e| CliError::Runtime(e.to_string()))?;
    let analysis = analyze::analyze(&plan, &table, &config.thresholds(), config.metric)?;
    analyze::write_analysis(&analysis, &config.out)?;
    for w in &analysis.summary.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} fits, metrics for {} written to {}",
        analysis.fits.len(),
        config.metric,
        config.out.display()
    );
    Ok(analysis)
}

pub fn cmd_report(config: &Config) -> Result<PathBuf, CliError> {
    let path = report::write_report(&config.out, &config.thresholds())?;
    println!("report written to {}", path.display());
    Ok(path)
}

pub fn dispatch(command: Command, config: &Config) -> Result<(), CliError> {
    match command {
        Command::Design => cmd_design(config).map(drop),
        Command::Run => cmd_run(config).map(drop),
        Command::Analyze => cmd_analyze(config).map(drop),
        Command::Report => cmd_report(config).map(drop),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match cli.common.resolve().and_then(|c| dispatch(cli.command, &c)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
