//! Classifiers, optimizers and the training loop.
//!
//! Any model exposing a flat parameter vector and a batch loss/gradient can
//! be trained here; two small built-ins cover the desk-scale experiment.

pub mod artifact;
pub mod nets;
pub mod optim;
pub mod train;

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Image, NUM_CLASSES, PIXELS};

pub use nets::{LinearSoftmax, Mlp};
pub use optim::{adam_step, sgd_step, AdamConfig, AdamState};
pub use train::{train, train_with, EpochStats, TrainedModel};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: u32 },
    #[error("cannot evaluate on an empty image set")]
    EmptyEvaluation,
    #[error("unsupported architecture {0:?} for this backend")]
    UnsupportedArchitecture(String),
    #[error("model artifact error: {0}")]
    Artifact(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl Optimizer {
    pub fn default_learning_rate(self) -> f64 {
        match self {
            Optimizer::Sgd => 0.01,
            Optimizer::Adam => 0.001,
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Optimizer::Sgd => "SGD",
            Optimizer::Adam => "Adam",
        })
    }
}

pub const DEFAULT_BATCH_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub optimizer: Optimizer,
    pub epochs: u32,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl HyperParams {
    /// Optimizer-default learning rate and batch size.
    pub fn new(optimizer: Optimizer, epochs: u32) -> Self {
        Self {
            optimizer,
            epochs,
            learning_rate: optimizer.default_learning_rate(),
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs < 1 {
            return Err(ModelError::Precondition("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Precondition(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 1 {
            return Err(ModelError::Precondition("batch size must be >= 1".into()));
        }
        Ok(())
    }

    /// Short plot label, e.g. `SGD/20`.
    pub fn label(&self) -> String {
        format!("{}/{}", self.optimizer, self.epochs)
    }

    /// Full identity used as a results-store key, e.g. `sgd-e20-lr0.01-b64`.
    pub fn descriptor(&self) -> String {
        let opt = match self.optimizer {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        };
        format!(
            "{opt}-e{}-lr{}-b{}",
            self.epochs, self.learning_rate, self.batch_size
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    /// 784 → 10 affine map followed by softmax.
    LinearSoftmax,
    /// 784 → hidden (ReLU) → 10.
    Mlp { hidden: usize },
    /// Resolved by a caller-supplied [`Backend`].
    External { name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub id: String,
    pub architecture: Architecture,
}

impl ClassifierSpec {
    pub fn linear_softmax() -> Self {
        Self {
            id: "linear-softmax".into(),
            architecture: Architecture::LinearSoftmax,
        }
    }

    pub fn mlp() -> Self {
        Self {
            id: "mlp".into(),
            architecture: Architecture::Mlp { hidden: 128 },
        }
    }

    pub fn builtins() -> Vec<Self> {
        vec![Self::linear_softmax(), Self::mlp()]
    }

    /// Looks up a built-in by id.
    pub fn builtin(id: &str) -> Option<Self> {
        Self::builtins().into_iter().find(|s| s.id == id)
    }
}

/// A 10-way classifier over 784 pixel features with a flat parameter vector.
pub trait Classifier: Send + Sync {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Shapes of the parameter tensors, in storage order.
    fn shapes(&self) -> Vec<Vec<usize>>;

    fn num_params(&self) -> usize {
        self.params().len()
    }

    /// Writes the 10 logits for one input.
    fn forward(&self, x: &[f64], logits: &mut [f64]);

    /// Mean cross-entropy over the batch; `grad` is overwritten with its
    /// gradient with respect to `params()`.
    fn loss_grad(&self, xs: &[&[f64]], labels: &[u8], grad: &mut [f64]) -> f64;
}

/// Builds classifiers from specs.
pub trait Backend: Send + Sync {
    fn build(
        &self,
        spec: &ClassifierSpec,
        rng: &mut dyn RngCore,
    ) -> Result<Box<dyn Classifier>, ModelError>;
}

/// Backend for the two built-in architectures.
#[derive(Debug, Default, Clone, Copy)]
pub struct BuiltinBackend;

impl Backend for BuiltinBackend {
    fn build(
        &self,
        spec: &ClassifierSpec,
        rng: &mut dyn RngCore,
    ) -> Result<Box<dyn Classifier>, ModelError> {
        match &spec.architecture {
            Architecture::LinearSoftmax => Ok(Box::new(LinearSoftmax::init(rng))),
            Architecture::Mlp { hidden } if *hidden > 0 => Ok(Box::new(Mlp::init(*hidden, rng))),
            other => Err(ModelError::UnsupportedArchitecture(format!("{other:?}"))),
        }
    }
}

/// Numerically stable `(log-sum-exp, argmax)` of a logit vector.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

/// Softmax probabilities of a logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&z| (z - lse).exp()).collect()
}

/// Cross-entropy `-log p[label]` for one logit vector.
pub fn cross_entropy(logits: &[f64], label: u8) -> f64 {
    log_sum_exp(logits) - logits[label as usize]
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Percent correct, in `[0, 100]`.
    pub accuracy: f64,
    /// Mean cross-entropy.
    pub loss: f64,
}

impl EvalResult {
    /// Loss on the ×100 scale used for loss surrogates.
    pub fn loss_x100(&self) -> f64 {
        self.loss * 100.0
    }

    /// From per-sample correctness flags and losses.
    pub fn from_counts(correct: usize, total: usize, loss_sum: f64) -> Result<Self, ModelError> {
        if total == 0 {
            return Err(ModelError::EmptyEvaluation);
        }
        Ok(Self {
            accuracy: 100.0 * correct as f64 / total as f64,
            loss: loss_sum / total as f64,
        })
    }
}

/// Accuracy and mean cross-entropy on un-augmented images.
pub fn evaluate(classifier: &dyn Classifier, images: &[Image]) -> Result<EvalResult, ModelError> {
    let mut x = [0.0; PIXELS];
    let mut logits = [0.0; NUM_CLASSES];
    let mut correct = 0;
    let mut loss_sum = 0.0;
    for im in images {
        im.write_features(&mut x);
        classifier.forward(&x, &mut logits);
        if argmax(&logits) == im.label as usize {
            correct += 1;
        }
        loss_sum += cross_entropy(&logits, im.label);
    }
    EvalResult::from_counts(correct, images.len(), loss_sum)
}
