//! Per-augmentation sensitivity, consistency, influence and reliability
//! computed from a normalized coefficient tensor.
//!
//! For augmentation `i`, with `K` classifiers and `L` hyper-parameter
//! settings:
//!
//! ```text
//! var_k(i)       = sample variance over l of coef[k][l][i]      (divide by L-1)
//! sensitivity(i) = mean_k var_k(i)
//! consistency(i) = 1 / sensitivity(i)
//! influence(i)   = mean_k mean_l coef[k][l][i]
//! reliability(i) = sensitivity(i) * influence(i)    (table mode)
//!                = consistency(i) * influence(i)    (equation mode)
//! ```
//!
//! The two reliability modes disagree; both are always computed.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{AugmentationId, NUM_AUGMENTATIONS};
use crate::surrogate::CoefficientTensor;

pub const DEFAULT_SENSITIVITY_THRESHOLD: f64 = 0.2;
pub const DEFAULT_TOP_N: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("variance across hyper-parameters needs at least 2 settings, tensor has {0}")]
    TooFewHyperparams(usize),
    #[error("metrics require a normalized coefficient tensor")]
    NotNormalized,
    #[error("classifier index {0} out of range")]
    ClassifierOutOfRange(usize),
    #[error("metrics csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReliabilityMode {
    /// sensitivity × influence
    #[default]
    Table,
    /// consistency × influence
    Equation,
}

impl std::str::FromStr for ReliabilityMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReliabilityMode::Table),
            "equation" => Ok(ReliabilityMode::Equation),
            other => Err(format!("unknown reliability mode {other:?} (expected table or equation)")),
        }
    }
}

impl std::fmt::Display for ReliabilityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReliabilityMode::Table => "table",
            ReliabilityMode::Equation => "equation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub augmentation: AugmentationId,
    /// One sample variance per classifier.
    pub per_model_variance: Vec<f64>,
    pub sensitivity: f64,
    /// `+inf` when sensitivity is zero.
    pub consistency: f64,
    pub influence: f64,
    pub reliability_table: f64,
    pub reliability_equation: f64,
    pub sensitive: bool,
    pub reliable: bool,
}

impl MetricsRow {
    pub fn reliability(&self, mode: ReliabilityMode) -> f64 {
        match mode {
            ReliabilityMode::Table => self.reliability_table,
            ReliabilityMode::Equation => self.reliability_equation,
        }
    }
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn require_normalized(tensor: &CoefficientTensor) -> Result<(), MetricsError> {
    if !tensor.normalized {
        return Err(MetricsError::NotNormalized);
    }
    if tensor.num_hyperparams() < 2 {
        return Err(MetricsError::TooFewHyperparams(tensor.num_hyperparams()));
    }
    Ok(())
}

/// Sample variance of augmentation `i`'s coefficient across the
/// hyper-parameter settings of classifier `k`.
pub fn per_model_variance(
    tensor: &CoefficientTensor,
    i: AugmentationId,
    k: usize,
) -> Result<f64, MetricsError> {
    require_normalized(tensor)?;
    if k >= tensor.num_classifiers() {
        return Err(MetricsError::ClassifierOutOfRange(k));
    }
    let values: Vec<f64> = (0..tensor.num_hyperparams())
        .map(|l| tensor.get(k, l, i.index()))
        .collect();
    Ok(sample_variance(&values))
}

pub fn sensitivity(tensor: &CoefficientTensor, i: AugmentationId) -> Result<f64, MetricsError> {
    let k_count = tensor.num_classifiers();
    let mut total = 0.0;
    for k in 0..k_count {
        total += per_model_variance(tensor, i, k)?;
    }
    Ok(total / k_count as f64)
}

/// Reciprocal of sensitivity; `+inf` at zero.
pub fn consistency(sensitivity: f64) -> f64 {
    if sensitivity == 0.0 {
        f64::INFINITY
    } else {
        1.0 / sensitivity
    }
}

/// Grand mean of augmentation `i`'s coefficients: per-classifier means over
/// hyper-parameters, then the mean of those.
pub fn influence(tensor: &CoefficientTensor, i: AugmentationId) -> f64 {
    let l_count = tensor.num_hyperparams() as f64;
    let per_model: Vec<f64> = (0..tensor.num_classifiers())
        .map(|k| {
            (0..tensor.num_hyperparams())
                .map(|l| tensor.get(k, l, i.index()))
                .sum::<f64>()
                / l_count
        })
        .collect();
    per_model.iter().sum::<f64>() / per_model.len() as f64
}

/// Equation mode with zero sensitivity yields a signed infinity (zero
/// influence gives 0).
pub fn reliability(sensitivity: f64, consistency: f64, influence: f64, mode: ReliabilityMode) -> f64 {
    match mode {
        ReliabilityMode::Table => sensitivity * influence,
        ReliabilityMode::Equation => {
            if influence == 0.0 {
                0.0
            } else {
                consistency * influence
            }
        }
    }
}

/// One unlabelled row per augmentation.
pub fn compute_rows(tensor: &CoefficientTensor) -> Result<Vec<MetricsRow>, MetricsError> {
    require_normalized(tensor)?;
    AugmentationId::ALL
        .iter()
        .map(|&id| {
            let per_model_variance = (0..tensor.num_classifiers())
                .map(|k| per_model_variance(tensor, id, k))
                .collect::<Result<Vec<_>, _>>()?;
            let sens = per_model_variance.iter().sum::<f64>() / per_model_variance.len() as f64;
            let cons = consistency(sens);
            let infl = influence(tensor, id);
            Ok(MetricsRow {
                augmentation: id,
                per_model_variance,
                sensitivity: sens,
                consistency: cons,
                influence: infl,
                reliability_table: reliability(sens, cons, infl, ReliabilityMode::Table),
                reliability_equation: reliability(sens, cons, infl, ReliabilityMode::Equation),
                sensitive: false,
                reliable: false,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub sensitivity: f64,
    pub top_n: usize,
    pub mode: ReliabilityMode,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            sensitivity: DEFAULT_SENSITIVITY_THRESHOLD,
            top_n: DEFAULT_TOP_N,
            mode: ReliabilityMode::Table,
        }
    }
}

/// Sensitive iff sensitivity ≥ threshold. Reliable iff the selected
/// reliability is positive and ranks within the `top_n` largest, ties going
/// to the lower augmentation id.
pub fn classify(rows: &[MetricsRow], thresholds: &Thresholds) -> Vec<MetricsRow> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (rows[a].reliability(thresholds.mode), rows[b].reliability(thresholds.mode));
        rb.total_cmp(&ra).then(rows[a].augmentation.cmp(&rows[b].augmentation))
    });
    let top: Vec<usize> = order
        .into_iter()
        .filter(|&i| !rows[i].reliability(thresholds.mode).is_nan())
        .take(thresholds.top_n)
        .collect();
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let mut r = r.clone();
            r.sensitive = r.sensitivity >= thresholds.sensitivity;
            r.reliable = top.contains(&i) && r.reliability(thresholds.mode) > 0.0;
            r
        })
        .collect()
}

/// Rows computed and classified in one go.
pub fn analyze(tensor: &CoefficientTensor, thresholds: &Thresholds) -> Result<Vec<MetricsRow>, MetricsError> {
    Ok(classify(&compute_rows(tensor)?, thresholds))
}

pub fn write_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<(), MetricsError> {
    let err = |e: csv::Error| MetricsError::Csv(e.to_string());
    let k = rows.first().map_or(0, |r| r.per_model_variance.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["aug_id".to_string(), "aug_name".to_string()];
    header.extend((1..=k).map(|m| format!("var_m{m}")));
    header.extend(
        [
            "sensitivity",
            "consistency",
            "influence",
            "reliability_table",
            "reliability_equation",
            "sensitive",
            "reliable",
        ]
        .map(String::from),
    );
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec = vec![r.augmentation.index().to_string(), r.augmentation.name().to_string()];
        rec.extend(r.per_model_variance.iter().map(|v| v.to_string()));
        rec.extend([
            r.sensitivity.to_string(),
            r.consistency.to_string(),
            r.influence.to_string(),
            r.reliability_table.to_string(),
            r.reliability_equation.to_string(),
            r.sensitive.to_string(),
            r.reliable.to_string(),
        ]);
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| MetricsError::Csv(e.to_string()))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>, MetricsError> {
    let bad = |m: String| MetricsError::Csv(m);
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let k = headers.iter().filter(|h| h.starts_with("var_m")).count();
    if headers.len() != 2 + k + 7 {
        return Err(bad(format!("unexpected header {headers:?}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |j: usize| -> Result<f64, MetricsError> {
            rec[j]
                .parse()
                .map_err(|_| bad(format!("row {}: column {} is not a number", line + 1, &headers[j])))
        };
        let flag = |j: usize| -> Result<bool, MetricsError> {
            rec[j]
                .parse()
                .map_err(|_| bad(format!("row {}: column {} is not a boolean", line + 1, &headers[j])))
        };
        let id: usize = rec[0]
            .parse()
            .map_err(|_| bad(format!("row {}: bad aug_id", line + 1)))?;
        let augmentation = AugmentationId::from_index(id)
            .ok_or_else(|| bad(format!("row {}: aug_id {id} out of range", line + 1)))?;
        let per_model_variance = (0..k).map(|m| num(2 + m)).collect::<Result<Vec<_>, _>>()?;
        let b = 2 + k;
        rows.push(MetricsRow {
            augmentation,
            per_model_variance,
            sensitivity: num(b)?,
            consistency: num(b + 1)?,
            influence: num(b + 2)?,
            reliability_table: num(b + 3)?,
            reliability_equation: num(b + 4)?,
            sensitive: flag(b + 5)?,
            reliable: flag(b + 6)?,
        });
    }
    if rows.len() != NUM_AUGMENTATIONS {
        return Err(bad(format!("expected {NUM_AUGMENTATIONS} rows, found {}", rows.len())));
    }
    Ok(rows)
}
