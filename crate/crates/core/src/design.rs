//! Augmentation-vector sampling and the experiment grid.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augment::{AugVector, NUM_AUGMENTATIONS};
use crate::model::{ClassifierSpec, HyperParams, Optimizer};

/// Number of distinct non-zero 9-bit vectors.
pub const MAX_VECTORS: usize = (1 << NUM_AUGMENTATIONS) - 1;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("requested {requested} vectors but only {MAX_VECTORS} distinct non-zero vectors exist")]
    TooManyVectors { requested: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("plan file {path}: {message}")]
    PlanFile { path: String, message: String },
}

/// Draws `n` distinct non-zero vectors, each bit an independent fair coin.
/// Zero and repeated draws are rejected and redrawn.
pub fn generate_vectors(n: usize, seed: u64) -> Result<Vec<AugVector>, DesignError> {
    if n > MAX_VECTORS {
        return Err(DesignError::TooManyVectors { requested: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut bits = [false; NUM_AUGMENTATIONS];
        for b in &mut bits {
            *b = rng.random_bool(0.5);
        }
        let v = AugVector::new(bits);
        if !v.is_zero() && seen.insert(v) {
            out.push(v);
        }
    }
    Ok(out)
}

/// SGD/20, SGD/15, Adam/20, Adam/15 with optimizer-default learning rates.
pub fn default_hyperparams() -> Vec<HyperParams> {
    vec![
        HyperParams::new(Optimizer::Sgd, 20),
        HyperParams::new(Optimizer::Sgd, 15),
        HyperParams::new(Optimizer::Adam, 20),
        HyperParams::new(Optimizer::Adam, 15),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub classifiers: Vec<ClassifierSpec>,
    pub hyperparams: Vec<HyperParams>,
    pub vectors: Vec<AugVector>,
    pub seed_base: u64,
    /// Also schedule one all-zero (un-augmented) run per classifier and
    /// hyper-parameter setting. These are baselines, not surrogate samples.
    #[serde(default)]
    pub include_baseline: bool,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<(), DesignError> {
        let bad = |m: String| Err(DesignError::InvalidGrid(m));
        if self.classifiers.is_empty() || self.hyperparams.is_empty() || self.vectors.is_empty() {
            return bad("classifiers, hyperparams and vectors must all be nonempty".into());
        }
        let mut ids = HashSet::new();
        for c in &self.classifiers {
            if !ids.insert(&c.id) {
                return bad(format!("duplicate classifier id {:?}", c.id));
            }
        }
        let mut descs = HashSet::new();
        for hp in &self.hyperparams {
            hp.validate()
                .map_err(|e| DesignError::InvalidGrid(e.to_string()))?;
            if !descs.insert(hp.descriptor()) {
                return bad(format!("duplicate hyper-parameter setting {}", hp.descriptor()));
            }
        }
        let mut seen = HashSet::new();
        for v in &self.vectors {
            if v.is_zero() {
                return bad("the all-zero vector cannot be a grid vector".into());
            }
            if !seen.insert(*v) {
                return bad(format!("duplicate vector {v}"));
            }
        }
        Ok(())
    }

    /// Grid runs excluding baselines.
    pub fn grid_size(&self) -> usize {
        self.classifiers.len() * self.hyperparams.len() * self.vectors.len()
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{}×{}×{} = {} runs",
            self.classifiers.len(),
            self.hyperparams.len(),
            self.vectors.len(),
            self.grid_size()
        );
        if self.include_baseline {
            s.push_str(&format!(
                " (+{} baseline)",
                self.classifiers.len() * self.hyperparams.len()
            ));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedRun {
    pub classifier: ClassifierSpec,
    pub hp_index: usize,
    pub hyper_params: HyperParams,
    pub vector: AugVector,
    pub seed: u64,
    #[serde(default)]
    pub baseline: bool,
}

/// Identity of a run inside a results store.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunKey {
    pub classifier: String,
    pub hyper_params: String,
    pub vector: AugVector,
}

impl std::fmt::Display for RunKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.classifier, self.hyper_params, self.vector)
    }
}

impl PlannedRun {
    pub fn key(&self) -> RunKey {
        RunKey {
            classifier: self.classifier.id.clone(),
            hyper_params: self.hyper_params.descriptor(),
            vector: self.vector,
        }
    }
}

/// Stable per-run seed: the first 8 bytes of SHA-256 over
/// `seed_base | len(id) | id | hp_index | mask`, all little-endian.
pub fn run_seed(seed_base: u64, classifier_id: &str, hp_index: usize, vector: &AugVector) -> u64 {
    let mut h = Sha256::new();
    h.update(seed_base.to_le_bytes());
    h.update((classifier_id.len() as u64).to_le_bytes());
    h.update(classifier_id.as_bytes());
    h.update((hp_index as u64).to_le_bytes());
    h.update(vector.mask().to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Cartesian product in (classifier, hyper-params, vector) order, followed
/// by baseline runs when the grid asks for them.
pub fn enumerate_runs(grid: &ExperimentGrid) -> Vec<PlannedRun> {
    let mut runs = Vec::with_capacity(grid.grid_size());
    let mut push = |c: &ClassifierSpec, l: usize, hp: &HyperParams, v: AugVector, baseline| {
        runs.push(PlannedRun {
            classifier: c.clone(),
            hp_index: l,
            hyper_params: *hp,
            vector: v,
            seed: run_seed(grid.seed_base, &c.id, l, &v),
            baseline,
        });
    };
    for c in &grid.classifiers {
        for (l, hp) in grid.hyperparams.iter().enumerate() {
            for v in &grid.vectors {
                push(c, l, hp, *v, false);
            }
        }
    }
    if grid.include_baseline {
        for c in &grid.classifiers {
            for (l, hp) in grid.hyperparams.iter().enumerate() {
                push(c, l, hp, AugVector::ZERO, true);
            }
        }
    }
    runs
}

/// The plan file: the grid plus its enumerated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub grid: ExperimentGrid,
    pub runs: Vec<PlannedRun>,
}

impl Plan {
    pub fn from_grid(grid: ExperimentGrid) -> Result<Self, DesignError> {
        grid.validate()?;
        let runs = enumerate_runs(&grid);
        Ok(Self { grid, runs })
    }

    pub fn save(&self, path: &Path) -> Result<(), DesignError> {
        let err = |message: String| DesignError::PlanFile {
            path: path.display().to_string(),
            message,
        };
        let json = serde_json::to_string_pretty(self).map_err(|e| err(e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| err(e.to_string()))
    }

    /// Loads a plan and checks its runs still match the grid.
    pub fn load(path: &Path) -> Result<Self, DesignError> {
        let err = |message: String| DesignError::PlanFile {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let plan: Plan = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        plan.grid.validate()?;
        if enumerate_runs(&plan.grid) != plan.runs {
            return Err(err("run list does not match the grid".into()));
        }
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n_vectors: usize) -> ExperimentGrid {
        ExperimentGrid {
            classifiers: ClassifierSpec::builtins(),
            hyperparams: default_hyperparams(),
            vectors: generate_vectors(n_vectors, 17).unwrap(),
            seed_base: 2024,
            include_baseline: false,
        }
    }

    #[test]
    fn exhausting_all_vectors() {
        let vs = generate_vectors(MAX_VECTORS, 3).unwrap();
        let masks: HashSet<u16> = vs.iter().map(|v| v.mask()).collect();
        assert_eq!(masks.len(), 511);
        assert!(!masks.contains(&0));
        assert!(matches!(
            generate_vectors(512, 3),
            Err(DesignError::TooManyVectors { requested: 512 })
        ));
    }

    #[test]
    fn vectors_are_deterministic() {
        assert_eq!(generate_vectors(28, 9).unwrap(), generate_vectors(28, 9).unwrap());
        assert_ne!(generate_vectors(28, 9).unwrap(), generate_vectors(28, 10).unwrap());
    }

    #[test]
    fn per_bit_frequency_near_half() {
        let vs = generate_vectors(400, 1).unwrap();
        for i in 0..NUM_AUGMENTATIONS {
            let f = vs.iter().filter(|v| v.bits()[i]).count() as f64 / 400.0;
            assert!((0.4..=0.6).contains(&f), "bit {i}: {f}");
        }
    }

    #[test]
    fn default_hyperparams_shape() {
        let hps = default_hyperparams();
        assert_eq!(hps.len(), 4);
        assert!(hps.contains(&HyperParams::new(Optimizer::Adam, 15)));
        let labels: Vec<String> = hps.iter().map(|h| h.label()).collect();
        assert_eq!(labels, ["SGD/20", "SGD/15", "Adam/20", "Adam/15"]);
        let distinct: HashSet<String> = hps.iter().map(|h| h.descriptor()).collect();
        assert_eq!(distinct.len(), 4);
    }

    #[test]
    fn full_grid_has_224_runs_with_unique_seeds() {
        let g = grid(28);
        let runs = enumerate_runs(&g);
        assert_eq!(runs.len(), 224);
        assert_eq!(g.summary(), "2×4×28 = 224 runs");
        let seeds: HashSet<u64> = runs.iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), 224);
        // lexicographic order
        assert_eq!(runs[0].classifier.id, "linear-softmax");
        assert_eq!(runs[28].hp_index, 1);
        assert_eq!(runs[112].classifier.id, "mlp");
    }

    #[test]
    fn singleton_grid() {
        let g = ExperimentGrid {
            classifiers: vec![ClassifierSpec::mlp()],
            hyperparams: vec![HyperParams::new(Optimizer::Sgd, 1)],
            vectors: vec!["000000001".parse().unwrap()],
            seed_base: 0,
            include_baseline: false,
        };
        assert_eq!(enumerate_runs(&g).len(), 1);
    }

    #[test]
    fn seeds_follow_the_triple_not_the_position() {
        let g = grid(28);
        let mut shuffled = g.clone();
        shuffled.vectors.reverse();
        let a = enumerate_runs(&g);
        let b = enumerate_runs(&shuffled);
        for run in &b {
            let expected = run_seed(g.seed_base, &run.classifier.id, run.hp_index, &run.vector);
            assert_eq!(run.seed, expected);
            let twin = a.iter().find(|r| r.key() == run.key()).unwrap();
            assert_eq!(twin.seed, run.seed);
        }
    }

    #[test]
    fn baseline_runs_appended() {
        let mut g = grid(3);
        g.include_baseline = true;
        let runs = enumerate_runs(&g);
        assert_eq!(runs.len(), 2 * 4 * 3 + 8);
        assert!(runs[24..].iter().all(|r| r.baseline && r.vector.is_zero()));
    }

    #[test]
    fn invalid_grids_rejected() {
        let mut g = grid(3);
        g.vectors.push(AugVector::ZERO);
        assert!(g.validate().is_err());
        let mut g = grid(3);
        g.vectors.push(g.vectors[0]);
        assert!(g.validate().is_err());
        let mut g = grid(3);
        g.classifiers.push(ClassifierSpec::mlp());
        assert!(g.validate().is_err());
    }

    #[test]
    fn plan_file_round_trip() {
        let plan = Plan::from_grid(grid(28)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.json");
        plan.save(&path).unwrap();
        assert_eq!(Plan::load(&path).unwrap(), plan);

        let mut tampered = plan.clone();
        tampered.runs[3].seed ^= 1;
        tampered.save(&path).unwrap();
        assert!(Plan::load(&path).is_err());
    }
}
