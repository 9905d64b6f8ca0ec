use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::OptimizerState;
use super::{evaluate, Backend, BuiltinBackend, Classifier, ClassifierSpec, HyperParams, ModelError};
use crate::augment::{apply_vector, AugVector, AugmentationParams};
use crate::dataset::{DataSplit, PIXELS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u32,
    /// Mean mini-batch loss over the (augmented) epoch.
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub valid_accuracy: Option<f64>,
}

pub struct TrainedModel {
    pub spec: ClassifierSpec,
    pub classifier: Box<dyn Classifier>,
    pub curve: Vec<EpochStats>,
}

impl std::fmt::Debug for TrainedModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrainedModel")
            .field("spec", &self.spec)
            .field("num_params", &self.classifier.num_params())
            .field("curve", &self.curve)
            .finish()
    }
}

/// Trains a built-in classifier. See [`train_with`].
pub fn train(
    spec: &ClassifierSpec,
    split: &DataSplit,
    v: &AugVector,
    params: &AugmentationParams,
    hp: &HyperParams,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    train_with(&BuiltinBackend, spec, split, v, params, hp, seed)
}

/// Mini-batch training on `split.train`, augmenting every sample on the fly
/// with `v`. A single ChaCha stream seeded by `seed` drives initialization,
/// shuffling and augmentation, so a run is reproducible bit for bit.
pub fn train_with(
    backend: &dyn Backend,
    spec: &ClassifierSpec,
    split: &DataSplit,
    v: &AugVector,
    params: &AugmentationParams,
    hp: &HyperParams,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    hp.validate()?;
    if split.train.is_empty() {
        return Err(ModelError::Precondition("training split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = backend.build(spec, &mut rng)?;
    let mut opt = OptimizerState::new(hp.optimizer, model.num_params());
    let mut grad = vec![0.0; model.num_params()];

    let n = split.train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut feats = vec![0.0; hp.batch_size * PIXELS];
    let mut labels = Vec::with_capacity(hp.batch_size);
    let mut curve = Vec::with_capacity(hp.epochs as usize);

    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(hp.batch_size) {
            labels.clear();
            for (slot, &idx) in chunk.iter().enumerate() {
                let image = &split.train[idx];
                let out = &mut feats[slot * PIXELS..(slot + 1) * PIXELS];
                if v.is_zero() {
                    image.write_features(out);
                } else {
                    apply_vector(image, v, params, &mut rng).write_features(out);
                }
                labels.push(image.label);
            }
            let xs: Vec<&[f64]> = feats[..chunk.len() * PIXELS].chunks(PIXELS).collect();
            let loss = model.loss_grad(&xs, &labels, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ModelError::Diverged { epoch });
            }
            opt.apply(model.params_mut(), &grad, hp.learning_rate);
            loss_sum += loss;
            batches += 1;
        }
        let (valid_loss, valid_accuracy) = if split.valid.is_empty() {
            (None, None)
        } else {
            let r = evaluate(model.as_ref(), &split.valid)?;
            (Some(r.loss), Some(r.accuracy))
        };
        curve.push(EpochStats {
            epoch,
            train_loss: loss_sum / batches as f64,
            valid_loss,
            valid_accuracy,
        });
    }

    Ok(TrainedModel {
        spec: spec.clone(),
        classifier: model,
        curve,
    })
}
