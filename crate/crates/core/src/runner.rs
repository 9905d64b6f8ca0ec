//! Executes a plan against an append-only JSON-lines results store.
//!
//! Each finished run becomes one line, written and flushed as a unit by a
//! single appender. On startup the store is scanned and every recorded
//! (classifier, hyper-params, vector) triple is skipped, so an interrupted
//! batch resumes where it stopped. A torn final line (no trailing newline)
//! left by a kill is discarded.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{AugVector, AugmentationParams};
use crate::dataset::DataSplit;
use crate::design::{PlannedRun, RunKey};
use crate::model::artifact::{save_model, ModelManifest};
use crate::model::{evaluate, train_with, Backend, BuiltinBackend, EvalResult};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("results store {path}: {source}")]
    Store {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate record for {key}")]
    Duplicate {
        path: String,
        line: usize,
        key: RunKey,
    },
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("plan is empty")]
    EmptyPlan,
    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Done,
    Failed,
}

/// Outcome of one trained model. Metric fields are empty for failed runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub classifier: String,
    pub hyper_params: String,
    pub vector: AugVector,
    pub seed: u64,
    pub baseline: bool,
    pub status: RunStatus,
    pub test_accuracy: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_loss_x100: Option<f64>,
    pub valid_accuracy: Option<f64>,
    pub wall_seconds: f64,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn key(&self) -> RunKey {
        RunKey {
            classifier: self.classifier.clone(),
            hyper_params: self.hyper_params.clone(),
            vector: self.vector,
        }
    }

    pub fn done(run: &PlannedRun, outcome: &RunOutcome, wall_seconds: f64) -> Self {
        Self {
            classifier: run.classifier.id.clone(),
            hyper_params: run.hyper_params.descriptor(),
            vector: run.vector,
            seed: run.seed,
            baseline: run.baseline,
            status: RunStatus::Done,
            test_accuracy: Some(outcome.test.accuracy),
            test_loss: Some(outcome.test.loss),
            test_loss_x100: Some(outcome.test.loss_x100()),
            valid_accuracy: outcome.valid.map(|v| v.accuracy),
            wall_seconds,
            error: None,
        }
    }

    pub fn failed(run: &PlannedRun, error: String, wall_seconds: f64) -> Self {
        Self {
            classifier: run.classifier.id.clone(),
            hyper_params: run.hyper_params.descriptor(),
            vector: run.vector,
            seed: run.seed,
            baseline: run.baseline,
            status: RunStatus::Failed,
            test_accuracy: None,
            test_loss: None,
            test_loss_x100: None,
            valid_accuracy: None,
            wall_seconds,
            error: Some(error),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let pct = |name: &str, v: Option<f64>| match v {
            Some(a) if !(0.0..=100.0).contains(&a) => Err(format!("{name} {a} outside [0, 100]")),
            _ => Ok(()),
        };
        pct("test_accuracy", self.test_accuracy)?;
        pct("valid_accuracy", self.valid_accuracy)?;
        for (name, v) in [("test_loss", self.test_loss), ("test_loss_x100", self.test_loss_x100)] {
            if let Some(l) = v {
                if !(l >= 0.0 && l.is_finite()) {
                    return Err(format!("{name} {l} must be finite and >= 0"));
                }
            }
        }
        if self.status == RunStatus::Done && (self.test_accuracy.is_none() || self.test_loss.is_none()) {
            return Err("completed record lacks test metrics".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub records: Vec<RunRecord>,
}

impl ResultTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn by_key(&self) -> HashMap<RunKey, &RunRecord> {
        self.records.iter().map(|r| (r.key(), r)).collect()
    }

    /// CSV with the same columns as the JSON-lines store.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), RunnerError> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), RunnerError> {
        let file = File::create(path).map_err(|source| RunnerError::Store {
            path: path.display().to_string(),
            source,
        })?;
        self.write_csv(BufWriter::new(file))
    }
}

fn parse_lines(path: &Path, text: &str) -> Result<Vec<RunRecord>, RunnerError> {
    let mut seen: HashMap<RunKey, usize> = HashMap::new();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunRecord = serde_json::from_str(line).map_err(|e| RunnerError::Parse {
            path: path.display().to_string(),
            line: lineno,
            message: e.to_string(),
        })?;
        rec.validate().map_err(|message| RunnerError::Parse {
            path: path.display().to_string(),
            line: lineno,
            message,
        })?;
        if seen.insert(rec.key(), lineno).is_some() {
            return Err(RunnerError::Duplicate {
                path: path.display().to_string(),
                line: lineno,
                key: rec.key(),
            });
        }
        records.push(rec);
    }
    Ok(records)
}

/// Reads and validates a results store, in on-disk order.
pub fn load_results(path: &Path) -> Result<ResultTable, RunnerError> {
    let text = fs::read_to_string(path).map_err(|source| RunnerError::Store {
        path: path.display().to_string(),
        source,
    })?;
    Ok(ResultTable {
        records: parse_lines(path, &text)?,
    })
}

/// Loads an existing store for appending, dropping a torn final line.
fn recover_store(path: &Path) -> Result<Vec<RunRecord>, RunnerError> {
    let io = |source| RunnerError::Store {
        path: path.display().to_string(),
        source,
    };
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(e)),
    };
    if text.is_empty() || text.ends_with('\n') {
        return parse_lines(path, &text);
    }
    let cut = text.rfind('\n').map_or(0, |i| i + 1);
    let tail = &text[cut..];
    if serde_json::from_str::<RunRecord>(tail).is_ok() {
        // complete record that merely lacks its newline
        let f = OpenOptions::new().append(true).open(path).map_err(io)?;
        let mut w = BufWriter::new(f);
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(io)?;
        return parse_lines(path, &text);
    }
    let f = OpenOptions::new().write(true).open(path).map_err(io)?;
    f.set_len(cut as u64).map_err(io)?;
    parse_lines(path, &text[..cut])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    pub test: EvalResult,
    pub valid: Option<EvalResult>,
}

/// Something that can turn a planned run into metrics.
pub trait RunExecutor: Sync {
    fn run(&self, run: &PlannedRun) -> Result<RunOutcome, String>;
}

/// Trains on a fixed split and evaluates on its test (and validation) set.
pub struct TrainingExecutor {
    pub split: DataSplit,
    pub aug_params: AugmentationParams,
    pub backend: Box<dyn Backend>,
    /// When set, every trained model is written here as `<seed>.bin`.
    pub models_dir: Option<PathBuf>,
}

impl TrainingExecutor {
    pub fn new(split: DataSplit, aug_params: AugmentationParams) -> Self {
        Self {
            split,
            aug_params,
            backend: Box::new(BuiltinBackend),
            models_dir: None,
        }
    }
}

impl RunExecutor for TrainingExecutor {
    fn run(&self, run: &PlannedRun) -> Result<RunOutcome, String> {
        let trained = train_with(
            self.backend.as_ref(),
            &run.classifier,
            &self.split,
            &run.vector,
            &self.aug_params,
            &run.hyper_params,
            run.seed,
        )
        .map_err(|e| e.to_string())?;
        let model = trained.classifier.as_ref();
        let test = evaluate(model, &self.split.test).map_err(|e| e.to_string())?;
        let valid = if self.split.valid.is_empty() {
            None
        } else {
            Some(evaluate(model, &self.split.valid).map_err(|e| e.to_string())?)
        };
        if let Some(dir) = &self.models_dir {
            let manifest = ModelManifest {
                classifier: run.classifier.clone(),
                hyper_params: run.hyper_params,
                seed: run.seed,
                vector: run.vector,
                shapes: model.shapes(),
            };
            save_model(&dir.join(format!("{:016x}.bin", run.seed)), model, &manifest)
                .map_err(|e| e.to_string())?;
        }
        Ok(RunOutcome { test, valid })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecuteSummary {
    /// One record per plan entry, in plan order.
    pub table: ResultTable,
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
}

/// Progress callback: the new record, how many of the pending runs have
/// finished, and how many were pending.
pub type Progress<'a> = &'a dyn Fn(&RunRecord, usize, usize);

/// Runs every plan entry not already in the store, `workers` at a time.
pub fn execute(
    plan: &[PlannedRun],
    store: &Path,
    workers: usize,
    executor: &dyn RunExecutor,
    progress: Option<Progress<'_>>,
) -> Result<ExecuteSummary, RunnerError> {
    if plan.is_empty() {
        return Err(RunnerError::EmptyPlan);
    }
    let io = |source| RunnerError::Store {
        path: store.display().to_string(),
        source,
    };
    let existing = recover_store(store)?;
    let mut by_key: HashMap<RunKey, RunRecord> =
        existing.into_iter().map(|r| (r.key(), r)).collect();
    let pending: Vec<&PlannedRun> = plan.iter().filter(|r| !by_key.contains_key(&r.key())).collect();
    let skipped = plan.len() - pending.len();

    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(store)
        .map_err(io)?;
    let mut writer = BufWriter::new(file);

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<RunRecord>();
    let n_workers = workers.max(1).min(pending.len());
    let mut failed = 0;
    let mut write_result = Ok(());

    std::thread::scope(|scope| {
        for _ in 0..n_workers {
            let tx = tx.clone();
            let next = &next;
            let pending = &pending;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(run) = pending.get(i) else { break };
                let start = Instant::now();
                let outcome = catch_unwind(AssertUnwindSafe(|| executor.run(run)))
                    .unwrap_or_else(|_| Err("executor panicked".into()));
                let secs = start.elapsed().as_secs_f64();
                let record = match outcome {
                    Ok(o) => RunRecord::done(run, &o, secs),
                    Err(e) => RunRecord::failed(run, e, secs),
                };
                if tx.send(record).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        for (finished, record) in rx.iter().enumerate() {
            if record.status == RunStatus::Failed {
                failed += 1;
            }
            let mut line = serde_json::to_string(&record).expect("records serialize");
            line.push('\n');
            if let Err(e) = writer.write_all(line.as_bytes()).and_then(|_| writer.flush()) {
                // stop handing out work; in-flight runs drain into the void
                next.store(usize::MAX / 2, Ordering::Relaxed);
                write_result = Err(io(e));
                break;
            }
            if let Some(cb) = progress {
                cb(&record, finished + 1, pending.len());
            }
            by_key.insert(record.key(), record);
        }
    });
    write_result?;

    let records = plan
        .iter()
        .map(|r| {
            by_key
                .remove(&r.key())
                .ok_or_else(|| RunnerError::Invalid(format!("no record for {}", r.key())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExecuteSummary {
        table: ResultTable { records },
        executed: pending.len(),
        skipped,
        failed,
    })
}
