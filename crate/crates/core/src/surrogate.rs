//! Linear surrogates: one least-squares fit per (classifier, hyper-params,
//! metric) series mapping augmentation bits to the metric, and the
//! normalized coefficient tensor built from those fits.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{AugVector, AugmentationId, NUM_AUGMENTATIONS};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Fewer samples than unknowns (intercept + 9) leaves the fit underdetermined.
pub const RECOMMENDED_MIN_SAMPLES: usize = NUM_AUGMENTATIONS + 1;

#[derive(Debug, Error, PartialEq)]
pub enum SurrogateError {
    #[error("design has {rows} rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("cannot fit a surrogate to zero samples")]
    NoSamples,
    #[error("target {index} is not finite")]
    NonFinite { index: usize },
    #[error("series has zero variance; normalization undefined")]
    ZeroVariance,
    #[error("no {metric} fit for classifier {classifier:?} with hyper-params {hyper_params:?}")]
    MissingCell {
        metric: Metric,
        classifier: String,
        hyper_params: String,
    },
    #[error("tensor shape mismatch: {0}")]
    Shape(String),
    #[error("series ({classifier}, {hyper_params}) is not normalized: mean {mean}, population std {std}")]
    NotNormalized {
        classifier: String,
        hyper_params: String,
        mean: f64,
        std: f64,
    },
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Loss,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Loss => "loss",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accuracy" => Ok(Metric::Accuracy),
            "loss" => Ok(Metric::Loss),
            other => Err(format!("unknown metric {other:?} (expected accuracy or loss)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub intercept: f64,
    pub coefficients: [f64; NUM_AUGMENTATIONS],
    /// Residual sum of squares.
    pub rss: f64,
    pub rank: usize,
    pub n_samples: usize,
    pub warnings: Vec<String>,
}

impl OlsFit {
    pub fn predict(&self, v: &AugVector) -> f64 {
        self.intercept
            + v.as_features()
                .iter()
                .zip(&self.coefficients)
                .map(|(x, c)| x * c)
                .sum::<f64>()
    }
}

/// Minimum-norm least squares of `y` on `[1 | X]`, where row `r` of `X` is
/// the bit pattern of `x[r]`. Solved through the SVD pseudo-inverse, so
/// rank-deficient designs (an augmentation always on or always off, too few
/// rows) still yield the minimum-norm coefficients, with a warning.
pub fn fit_ols(x: &[AugVector], y: &[f64]) -> Result<OlsFit, SurrogateError> {
    if x.len() != y.len() {
        return Err(SurrogateError::LengthMismatch {
            rows: x.len(),
            targets: y.len(),
        });
    }
    if x.is_empty() {
        return Err(SurrogateError::NoSamples);
    }
    if let Some(index) = y.iter().position(|v| !v.is_finite()) {
        return Err(SurrogateError::NonFinite { index });
    }
    let n = x.len();
    let cols = NUM_AUGMENTATIONS + 1;
    let design = DMatrix::from_fn(n, cols, |r, c| {
        if c == 0 {
            1.0
        } else if x[r].bits()[c - 1] {
            1.0
        } else {
            0.0
        }
    });
    let target = DVector::from_column_slice(y);

    let svd = design.clone().svd(true, true);
    let largest = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = RANK_TOLERANCE * largest;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let solve = |rhs: &DVector<f64>| svd.solve(rhs, cutoff).expect("U and V^T were computed");
    // nalgebra's SVD leaves ~1e-7 in the normal equations on some designs;
    // refinement through the same pseudo-inverse stays in the row space, so
    // the minimum-norm solution is kept.
    let mut beta = solve(&target);
    for _ in 0..2 {
        let r = &target - &design * &beta;
        beta += solve(&r);
    }

    let residual = &target - &design * &beta;
    let rss = residual.norm_squared();

    let mut warnings = Vec::new();
    if n < RECOMMENDED_MIN_SAMPLES {
        warnings.push(format!(
            "only {n} samples for {cols} unknowns; fit interpolates"
        ));
    }
    for id in AugmentationId::ALL {
        let on = x.iter().filter(|v| v.is_set(id)).count();
        if on == 0 || on == n {
            let state = if on == 0 { "never" } else { "always" };
            warnings.push(format!(
                "{id} is {state} applied; its coefficient follows the minimum-norm convention"
            ));
        }
    }
    if rank < cols && n >= RECOMMENDED_MIN_SAMPLES {
        warnings.push(format!("design matrix has rank {rank} < {cols}"));
    }

    let mut coefficients = [0.0; NUM_AUGMENTATIONS];
    coefficients.copy_from_slice(&beta.as_slice()[1..]);
    Ok(OlsFit {
        intercept: beta[0],
        coefficients,
        rss,
        rank,
        n_samples: n,
        warnings,
    })
}

/// Z-score with the population standard deviation (divide by 9).
pub fn normalize_series(
    coefficients: &[f64; NUM_AUGMENTATIONS],
) -> Result<[f64; NUM_AUGMENTATIONS], SurrogateError> {
    let (mean, std) = mean_and_pop_std(coefficients);
    let scale = coefficients.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if std == 0.0 || std <= 1e-12 * scale {
        return Err(SurrogateError::ZeroVariance);
    }
    Ok(coefficients.map(|c| (c - mean) / std))
}

pub fn mean_and_pop_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateFit {
    pub classifier: String,
    pub hyper_params: String,
    pub metric: Metric,
    #[serde(flatten)]
    pub ols: OlsFit,
}

/// Coefficients indexed by (classifier k, hyper-params l, augmentation i).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTensor {
    pub classifiers: Vec<String>,
    pub hyperparams: Vec<String>,
    /// Row-major over (k, l).
    pub values: Vec<[f64; NUM_AUGMENTATIONS]>,
    pub normalized: bool,
}

/// Default tolerance for the normalization invariant on freshly built tensors.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

impl CoefficientTensor {
    pub fn new(
        classifiers: Vec<String>,
        hyperparams: Vec<String>,
        values: Vec<[f64; NUM_AUGMENTATIONS]>,
        normalized: bool,
    ) -> Result<Self, SurrogateError> {
        if classifiers.is_empty() || hyperparams.is_empty() {
            return Err(SurrogateError::Shape("empty axis".into()));
        }
        if values.len() != classifiers.len() * hyperparams.len() {
            return Err(SurrogateError::Shape(format!(
                "{} series for a {}×{} grid",
                values.len(),
                classifiers.len(),
                hyperparams.len()
            )));
        }
        Ok(Self {
            classifiers,
            hyperparams,
            values,
            normalized,
        })
    }

    pub fn num_classifiers(&self) -> usize {
        self.classifiers.len()
    }

    pub fn num_hyperparams(&self) -> usize {
        self.hyperparams.len()
    }

    pub fn series(&self, k: usize, l: usize) -> &[f64; NUM_AUGMENTATIONS] {
        &self.values[k * self.hyperparams.len() + l]
    }

    pub fn get(&self, k: usize, l: usize, i: usize) -> f64 {
        self.series(k, l)[i]
    }

    /// Checks every series has mean 0 and population std 1 within `tol`.
    pub fn check_normalized(&self, tol: f64) -> Result<(), SurrogateError> {
        for (k, c) in self.classifiers.iter().enumerate() {
            for (l, h) in self.hyperparams.iter().enumerate() {
                let (mean, std) = mean_and_pop_std(self.series(k, l));
                if mean.abs() > tol || (std - 1.0).abs() > tol {
                    return Err(SurrogateError::NotNormalized {
                        classifier: c.clone(),
                        hyper_params: h.clone(),
                        mean,
                        std,
                    });
                }
            }
        }
        Ok(())
    }

    /// Column label used in CSV exports.
    pub fn series_label(&self, k: usize, l: usize) -> String {
        format!("{}|{}", self.classifiers[k], self.hyperparams[l])
    }

    /// Rows are augmentations, columns the (classifier, hyper-params) series.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SurrogateError> {
        let csv_err = |e: csv::Error| SurrogateError::Csv(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["aug_id".to_string(), "aug_name".to_string()];
        for k in 0..self.num_classifiers() {
            for l in 0..self.num_hyperparams() {
                header.push(self.series_label(k, l));
            }
        }
        w.write_record(&header).map_err(csv_err)?;
        for id in AugmentationId::ALL {
            let mut row = vec![id.index().to_string(), id.name().to_string()];
            for series in &self.values {
                row.push(series[id.index()].to_string());
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| SurrogateError::Csv(e.to_string()))
    }
}

/// Normalized tensor over explicit axes; every (classifier, hyper-params)
/// cell must have a fit for `metric`.
pub fn build_tensor_with_axes(
    fits: &[SurrogateFit],
    metric: Metric,
    classifiers: &[String],
    hyperparams: &[String],
) -> Result<CoefficientTensor, SurrogateError> {
    let mut values = Vec::with_capacity(classifiers.len() * hyperparams.len());
    for c in classifiers {
        for h in hyperparams {
            let fit = fits
                .iter()
                .find(|f| f.metric == metric && &f.classifier == c && &f.hyper_params == h)
                .ok_or_else(|| SurrogateError::MissingCell {
                    metric,
                    classifier: c.clone(),
                    hyper_params: h.clone(),
                })?;
            values.push(normalize_series(&fit.ols.coefficients)?);
        }
    }
    CoefficientTensor::new(classifiers.to_vec(), hyperparams.to_vec(), values, true)
}

/// Like [`build_tensor_with_axes`], with axes in order of first appearance.
pub fn build_tensor(fits: &[SurrogateFit], metric: Metric) -> Result<CoefficientTensor, SurrogateError> {
    let mut classifiers: Vec<String> = Vec::new();
    let mut hyperparams: Vec<String> = Vec::new();
    for f in fits.iter().filter(|f| f.metric == metric) {
        if !classifiers.contains(&f.classifier) {
            classifiers.push(f.classifier.clone());
        }
        if !hyperparams.contains(&f.hyper_params) {
            hyperparams.push(f.hyper_params.clone());
        }
    }
    if classifiers.is_empty() {
        return Err(SurrogateError::Shape(format!("no {metric} fits")));
    }
    build_tensor_with_axes(fits, metric, &classifiers, &hyperparams)
}

/// One row per fit: identity, intercept, coefficients, diagnostics.
pub fn write_fits_csv<W: Write>(fits: &[SurrogateFit], out: W) -> Result<(), SurrogateError> {
    let csv_err = |e: csv::Error| SurrogateError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["classifier", "hyper_params", "metric", "n_samples", "rank", "rss", "intercept"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..NUM_AUGMENTATIONS).map(|i| format!("coef_{i}")));
    header.push("warnings".into());
    w.write_record(&header).map_err(csv_err)?;
    for f in fits {
        let mut row = vec![
            f.classifier.clone(),
            f.hyper_params.clone(),
            f.metric.to_string(),
            f.ols.n_samples.to_string(),
            f.ols.rank.to_string(),
            f.ols.rss.to_string(),
            f.ols.intercept.to_string(),
        ];
        row.extend(f.ols.coefficients.iter().map(|c| c.to_string()));
        row.push(f.ols.warnings.join("; "));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| SurrogateError::Csv(e.to_string()))
}
