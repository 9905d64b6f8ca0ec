//! JSON run configuration with dotted `key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CliError;
use crate::augment::AugmentationParams;
use crate::design::default_hyperparams;
use crate::metrics::{ReliabilityMode, Thresholds, DEFAULT_SENSITIVITY_THRESHOLD, DEFAULT_TOP_N};
use crate::model::{ClassifierSpec, HyperParams};
use crate::surrogate::Metric;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl Default for DatasetPaths {
    fn default() -> Self {
        let dir = Path::new("data/fashion-mnist");
        Self {
            train_images: dir.join("train-images-idx3-ubyte.gz"),
            train_labels: dir.join("train-labels-idx1-ubyte.gz"),
            test_images: dir.join("t10k-images-idx3-ubyte.gz"),
            test_labels: dir.join("t10k-labels-idx1-ubyte.gz"),
        }
    }
}

impl DatasetPaths {
    pub fn all(&self) -> [&Path; 4] {
        [
            &self.train_images,
            &self.train_labels,
            &self.test_images,
            &self.test_labels,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub classifiers: Vec<ClassifierSpec>,
    pub hyperparams: Vec<HyperParams>,
    pub vector_count: usize,
    pub include_baseline: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            classifiers: ClassifierSpec::builtins(),
            hyperparams: default_hyperparams(),
            vector_count: 28,
            include_baseline: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Master seed: vectors, per-run seeds, data split and subsample all
    /// derive from it.
    pub seed: u64,
    pub dataset: DatasetPaths,
    /// Training images kept after the train/validation split; `null` keeps
    /// everything.
    pub subsample: Option<usize>,
    pub augmentation: AugmentationParams,
    pub grid: GridConfig,
    pub plan: PathBuf,
    pub store: PathBuf,
    /// Analysis and report directory.
    pub out: PathBuf,
    /// 0 = one per available core.
    pub workers: usize,
    pub metric: Metric,
    pub reliability_mode: ReliabilityMode,
    pub sensitivity_threshold: f64,
    pub top_n: usize,
    /// Directory for trained model files; none are written when unset.
    pub save_models: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: DatasetPaths::default(),
            subsample: Some(2000),
            augmentation: AugmentationParams::default(),
            grid: GridConfig::default(),
            plan: PathBuf::from("out/plan.json"),
            store: PathBuf::from("out/results.jsonl"),
            out: PathBuf::from("out/analysis"),
            workers: 0,
            metric: Metric::Accuracy,
            reliability_mode: ReliabilityMode::Table,
            sensitivity_threshold: DEFAULT_SENSITIVITY_THRESHOLD,
            top_n: DEFAULT_TOP_N,
            save_models: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Applies `a.b.c=value` overrides. The value is read as JSON when it
    /// parses, otherwise as a plain string; array elements are addressed by
    /// index (`augmentation.probability.3=0.9`).
    pub fn with_overrides<S: AsRef<str>>(self, overrides: &[S]) -> Result<Self, CliError> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut root = serde_json::to_value(&self).expect("config serializes");
        for raw in overrides {
            let raw = raw.as_ref();
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {raw:?}")))?;
            let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
            set_path(&mut root, key, value)?;
        }
        serde_json::from_value(root).map_err(|e| CliError::Usage(format!("--set: {e}")))
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            sensitivity: self.sensitivity_threshold,
            top_n: self.top_n,
            mode: self.reliability_mode,
        }
    }

    pub fn workers(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.workers
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if !(self.sensitivity_threshold > 0.0 && self.sensitivity_threshold.is_finite()) {
            return bad(format!(
                "sensitivity_threshold must be positive, got {}",
                self.sensitivity_threshold
            ));
        }
        if self.top_n == 0 {
            return bad("top_n must be positive".into());
        }
        if self.subsample == Some(0) {
            return bad("subsample must be positive".into());
        }
        self.augmentation
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let unknown = || CliError::Usage(format!("--set: unknown key {key:?}"));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let last = depth + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                // Optional fields serialize as null and may be filled in.
                if last {
                    let slot = map.get_mut(*part).ok_or_else(unknown)?;
                    *slot = value;
                    return Ok(());
                }
                map.get_mut(*part).ok_or_else(unknown)?
            }
            Value::Array(items) => {
                let i: usize = part.parse().map_err(|_| unknown())?;
                let slot = items.get_mut(i).ok_or_else(unknown)?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(unknown()),
        };
    }
    Err(unknown())
}
