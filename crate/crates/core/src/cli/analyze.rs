//! Results store → surrogate fits → coefficient tensors → metrics table.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::augment::AugVector;
use crate::design::Plan;
use crate::metrics::{self, MetricsRow, Thresholds};
use crate::runner::{ResultTable, RunRecord, RunStatus};
use crate::surrogate::{build_tensor_with_axes, fit_ols, write_fits_csv, CoefficientTensor, Metric, SurrogateFit};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "analysis.json";
pub const INTERCEPTS_FILE: &str = "intercepts.csv";

pub fn fits_file(metric: Metric) -> String {
    format!("fits_{metric}.csv")
}

pub fn coefficients_file(metric: Metric) -> String {
    format!("coefficients_{metric}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParamAxis {
    pub descriptor: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intercept {
    pub classifier: String,
    pub hyper_params: String,
    pub metric: Metric,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub classifier: String,
    pub hyper_params: String,
    pub test_accuracy: Option<f64>,
    pub test_loss_x100: Option<f64>,
}

/// Everything the report stage needs besides the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub metric: Metric,
    pub thresholds: Thresholds,
    pub classifiers: Vec<String>,
    pub hyperparams: Vec<HyperParamAxis>,
    pub accuracy: CoefficientTensor,
    pub loss: CoefficientTensor,
    pub intercepts: Vec<Intercept>,
    pub baselines: Vec<Baseline>,
    /// Failed runs left out of the fits.
    pub excluded: Vec<String>,
    pub warnings: Vec<String>,
}

impl AnalysisSummary {
    pub fn tensor(&self, metric: Metric) -> &CoefficientTensor {
        match metric {
            Metric::Accuracy => &self.accuracy,
            Metric::Loss => &self.loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub fits: Vec<SurrogateFit>,
    pub rows: Vec<MetricsRow>,
    pub summary: AnalysisSummary,
}

fn target(record: &RunRecord, metric: Metric) -> Option<f64> {
    match metric {
        Metric::Accuracy => record.test_accuracy,
        Metric::Loss => record.test_loss_x100,
    }
}

/// Fits every (classifier, hyper-params, metric) cell of the plan's grid
/// from the store, in plan order, and derives the metrics table.
pub fn analyze(plan: &Plan, table: &ResultTable, thresholds: &Thresholds, metric: Metric) -> Result<Analysis, CliError> {
    let runtime = |m: String| CliError::Runtime(m);
    let by_key = table.by_key();

    let mut missing: BTreeMap<(String, String), usize> = BTreeMap::new();
    for run in &plan.runs {
        if !by_key.contains_key(&run.key()) {
            *missing
                .entry((run.classifier.id.clone(), run.hyper_params.descriptor()))
                .or_default() += 1;
        }
    }
    if !missing.is_empty() {
        let cells: Vec<String> = missing
            .iter()
            .map(|((c, h), n)| format!("({c}, {h}): {n} missing"))
            .collect();
        return Err(runtime(format!(
            "results store is incomplete for the plan; cells {}",
            cells.join(", ")
        )));
    }

    let grid = &plan.grid;
    let classifiers: Vec<String> = grid.classifiers.iter().map(|c| c.id.clone()).collect();
    let hyperparams: Vec<HyperParamAxis> = grid
        .hyperparams
        .iter()
        .map(|h| HyperParamAxis {
            descriptor: h.descriptor(),
            label: h.label(),
        })
        .collect();

    let mut cells: HashMap<(&str, String), Vec<&RunRecord>> = HashMap::new();
    let mut baselines = Vec::new();
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    for run in &plan.runs {
        let rec = by_key[&run.key()];
        if rec.status == RunStatus::Failed {
            excluded.push(run.key().to_string());
            warnings.push(format!(
                "run {} failed ({}); excluded",
                run.key(),
                rec.error.as_deref().unwrap_or("no message")
            ));
            continue;
        }
        if run.baseline {
            baselines.push(Baseline {
                classifier: rec.classifier.clone(),
                hyper_params: rec.hyper_params.clone(),
                test_accuracy: rec.test_accuracy,
                test_loss_x100: rec.test_loss_x100,
            });
            continue;
        }
        cells
            .entry((run.classifier.id.as_str(), run.hyper_params.descriptor()))
            .or_default()
            .push(rec);
    }

    let mut fits = Vec::new();
    let mut intercepts = Vec::new();
    for m in [Metric::Accuracy, Metric::Loss] {
        for c in &classifiers {
            for h in &hyperparams {
                let records = cells
                    .get(&(c.as_str(), h.descriptor.clone()))
                    .map(Vec::as_slice)
                    .unwrap_or(&[]);
                let x: Vec<AugVector> = records.iter().map(|r| r.vector).collect();
                let y: Vec<f64> = records
                    .iter()
                    .map(|r| target(r, m).expect("completed runs carry metrics"))
                    .collect();
                let ols = fit_ols(&x, &y).map_err(|e| runtime(format!("fit ({c}, {}, {m}): {e}", h.descriptor)))?;
                for w in &ols.warnings {
                    warnings.push(format!("fit ({c}, {}, {m}): {w}", h.descriptor));
                }
                intercepts.push(Intercept {
                    classifier: c.clone(),
                    hyper_params: h.descriptor.clone(),
                    metric: m,
                    intercept: ols.intercept,
                });
                fits.push(SurrogateFit {
                    classifier: c.clone(),
                    hyper_params: h.descriptor.clone(),
                    metric: m,
                    ols,
                });
            }
        }
    }

    let descriptors: Vec<String> = hyperparams.iter().map(|h| h.descriptor.clone()).collect();
    let tensor = |m| build_tensor_with_axes(&fits, m, &classifiers, &descriptors).map_err(|e| runtime(e.to_string()));
    let accuracy = tensor(Metric::Accuracy)?;
    let loss = tensor(Metric::Loss)?;
    let selected = match metric {
        Metric::Accuracy => &accuracy,
        Metric::Loss => &loss,
    };
    let rows = metrics::analyze(selected, thresholds).map_err(|e| runtime(e.to_string()))?;

    Ok(Analysis {
        fits,
        rows,
        summary: AnalysisSummary {
            metric,
            thresholds: *thresholds,
            classifiers,
            hyperparams,
            accuracy,
            loss,
            intercepts,
            baselines,
            excluded,
            warnings,
        },
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn write_analysis(analysis: &Analysis, dir: &Path) -> Result<(), CliError> {
    let runtime = |m: String| CliError::Runtime(m);
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    for m in [Metric::Accuracy, Metric::Loss] {
        let fits: Vec<SurrogateFit> = analysis.fits.iter().filter(|f| f.metric == m).cloned().collect();
        let mut buf = Vec::new();
        write_fits_csv(&fits, &mut buf).map_err(|e| runtime(e.to_string()))?;
        write_file(&dir.join(fits_file(m)), &buf)?;
        let mut buf = Vec::new();
        analysis
            .summary
            .tensor(m)
            .write_csv(&mut buf)
            .map_err(|e| runtime(e.to_string()))?;
        write_file(&dir.join(coefficients_file(m)), &buf)?;
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| runtime(e.to_string());
    w.write_record(["classifier", "hyper_params", "metric", "intercept"]).map_err(csv_err)?;
    for i in &analysis.summary.intercepts {
        w.write_record([
            i.classifier.clone(),
            i.hyper_params.clone(),
            i.metric.to_string(),
            i.intercept.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let buf = w.into_inner().map_err(|e| runtime(e.to_string()))?;
    write_file(&dir.join(INTERCEPTS_FILE), &buf)?;

    let mut buf = Vec::new();
    metrics::write_csv(&analysis.rows, &mut buf).map_err(|e| runtime(e.to_string()))?;
    write_file(&dir.join(METRICS_FILE), &buf)?;

    let json = serde_json::to_string_pretty(&analysis.summary).expect("summary serializes");
    write_file(&dir.join(SUMMARY_FILE), (json + "\n").as_bytes())
}
