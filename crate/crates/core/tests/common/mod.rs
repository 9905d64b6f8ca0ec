//! Reference coefficient data: normalized accuracy and loss coefficients
//! for two ResNet models under four hyper-parameter settings, plus the raw
//! intercepts, and helpers that turn them into tensors, plans and stores.
#![allow(dead_code)]

use std::fs;
use std::io::Write;
use std::path::Path;

use augsens::augment::{AugVector, NUM_AUGMENTATIONS};
use augsens::design::{default_hyperparams, generate_vectors, ExperimentGrid, Plan};
use augsens::model::{Architecture, ClassifierSpec, EvalResult};
use augsens::runner::{RunOutcome, RunRecord};
use augsens::surrogate::{CoefficientTensor, Metric};

pub type Series = [f64; NUM_AUGMENTATIONS];

pub const MODELS: [&str; 2] = ["resnet50", "resnet101"];
/// Column order of every per-model block below.
pub const HP_LABELS: [&str; 4] = ["SGD/20", "SGD/15", "Adam/20", "Adam/15"];

pub const ACCURACY: [[Series; 4]; 2] = [
    [
        [-1.37753, -0.38749, -1.09627, 0.82165, 1.00407, 1.6181, -0.90568, 0.69845, -0.3753],
        [-1.05912, -0.70609, 0.24839, 0.06388, 0.37245, 0.85112, -1.98115, 0.90196, 1.30855],
        [-1.57819, -0.98549, -0.6173, 0.83706, 1.54998, 1.21236, -0.64639, 0.37885, -0.15087],
        [-1.09506, -1.8638, 0.85154, 1.03695, 0.59073, 0.12869, -0.78837, -0.09767, 1.23698],
    ],
    [
        [-0.66805, -1.30232, 0.21443, 1.30395, 1.64193, 0.89983, -0.38051, -0.86491, -0.84435],
        [-0.09396, -2.21461, 0.74823, 0.64976, -0.62531, -0.16057, 0.92741, -0.49069, 1.25975],
        [-1.00143, -1.28967, 1.46033, 0.42909, 0.97253, 0.83223, -1.49945, 0.29897, -0.20261],
        [-0.11416, -0.83631, 0.41451, 1.22928, -0.96455, 2.08849, -0.63685, -0.9144, -0.266],
    ],
];

pub const LOSS: [[Series; 4]; 2] = [
    [
        [1.86404, 0.67803, 0.58226, -0.60635, -0.99853, -1.567, 0.77833, -0.49495, -0.23582],
        [1.46457, 0.09303, -0.96806, 0.6726, -0.55259, -0.52453, 1.6835, -1.31929, -0.54922],
        [1.85244, 1.27735, 0.00981, -0.62812, -1.5652, -1.00633, 0.24856, -0.10154, -0.08696],
        [0.41434, 1.7776, -1.30983, -0.41325, -0.10486, -0.19157, 0.95644, 0.48017, -1.60903],
    ],
    [
        [-0.91805, 0.4217, 0.33034, -2.01824, -0.58406, -0.35578, 0.94881, 1.26523, 0.91005],
        [0.63276, 0.98258, -1.247, -0.58474, -0.23721, 1.98876, -0.99077, 0.2737, -0.81808],
        [-0.5953, 0.83343, -1.7796, 1.25519, 0.04326, 0.66887, 0.90186, -1.39342, 0.06571],
        [-1.27931, -0.76738, 0.88565, 0.21956, -0.4324, 1.62897, -0.5824, 1.32741, -1.0001],
    ],
];

pub const ACCURACY_INTERCEPTS: [[f64; 4]; 2] = [
    [90.512, 89.323, 89.3675, 89.3883],
    [90.3598, 91.2862, 91.54377, 71.6030],
];

/// Loss intercepts (loss × 100). The reference value for
/// (resnet101, SGD/15) is negative and cannot be a loss, so 40 stands in.
pub const LOSS_INTERCEPTS: [[f64; 4]; 2] = [
    [33.3264, 34.0535, 29.5997, 33.64966],
    [42.5369, 40.0, 116.7092, 1255.60897],
];

/// Table rows for augmentations 1..=5 (ids 0..=4):
/// (id, var_m1, var_m2, sensitivity, influence, table-mode reliability).
pub const TABLE_ROWS: [(usize, f64, f64, f64, f64, f64); 5] = [
    (0, 0.060465, 0.196556, 0.128511, -0.873437, -0.112246),
    (1, 0.402366, 0.334197, 0.368281, -1.198223, -0.441283),
    (2, 0.758516, 0.299119, 0.528818, 0.277983, 0.147002),
    (3, 0.183786, 0.185314, 0.184549, 0.796453, 0.146985),
    (4, 0.268516, 1.566889, 0.917703, 0.567729, 0.521006),
];

pub fn series(metric: Metric) -> &'static [[Series; 4]; 2] {
    match metric {
        Metric::Accuracy => &ACCURACY,
        Metric::Loss => &LOSS,
    }
}

pub fn intercepts(metric: Metric) -> &'static [[f64; 4]; 2] {
    match metric {
        Metric::Accuracy => &ACCURACY_INTERCEPTS,
        Metric::Loss => &LOSS_INTERCEPTS,
    }
}

/// The raw fixture values as a 2×4×9 tensor, flagged normalized.
pub fn tensor(metric: Metric) -> CoefficientTensor {
    let values = series(metric).iter().flat_map(|m| m.iter().copied()).collect();
    CoefficientTensor::new(
        MODELS.iter().map(|s| s.to_string()).collect(),
        HP_LABELS.iter().map(|s| s.to_string()).collect(),
        values,
        true,
    )
    .unwrap()
}

pub fn classifiers() -> Vec<ClassifierSpec> {
    MODELS
        .iter()
        .map(|m| ClassifierSpec {
            id: m.to_string(),
            architecture: Architecture::External { name: m.to_string() },
        })
        .collect()
}

/// 28 vectors whose design matrix has full column rank.
pub fn vectors() -> Vec<AugVector> {
    generate_vectors(28, 7).unwrap()
}

pub fn plan() -> Plan {
    Plan::from_grid(ExperimentGrid {
        classifiers: classifiers(),
        hyperparams: default_hyperparams(),
        vectors: vectors(),
        seed_base: 7,
        include_baseline: false,
    })
    .unwrap()
}

fn predict(intercept: f64, beta: &Series, v: &AugVector) -> f64 {
    intercept + v.as_features().iter().zip(beta).map(|(x, b)| x * b).sum::<f64>()
}

/// A complete store whose runs are exactly linear in the augmentation bits,
/// with the fixture series as coefficients.
pub fn records(plan: &Plan) -> Vec<RunRecord> {
    plan.runs
        .iter()
        .map(|run| {
            let k = MODELS.iter().position(|m| *m == run.classifier.id).unwrap();
            let l = run.hp_index;
            let accuracy = predict(ACCURACY_INTERCEPTS[k][l], &ACCURACY[k][l], &run.vector);
            let loss_x100 = predict(LOSS_INTERCEPTS[k][l], &LOSS[k][l], &run.vector);
            let outcome = RunOutcome {
                test: EvalResult {
                    accuracy,
                    loss: loss_x100 / 100.0,
                },
                valid: None,
            };
            RunRecord::done(run, &outcome, 0.0)
        })
        .collect()
}

pub fn write_store(path: &Path, records: &[RunRecord]) {
    let mut f = fs::File::create(path).unwrap();
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r).unwrap()).unwrap();
    }
}

/// Writes `plan.json` and `results.jsonl` into `dir`.
pub fn write_fixture(dir: &Path) -> Plan {
    let plan = plan();
    plan.save(&dir.join("plan.json")).unwrap();
    write_store(&dir.join("results.jsonl"), &records(&plan));
    plan
}

pub mod synth;
