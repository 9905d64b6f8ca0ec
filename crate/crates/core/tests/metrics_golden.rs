mod common;

use augsens::augment::AugmentationId;
use augsens::metrics::{self, compute_rows, influence, per_model_variance, sensitivity, ReliabilityMode, Thresholds};
use augsens::surrogate::{mean_and_pop_std, CoefficientTensor, Metric};
use proptest::prelude::*;

const TOL: f64 = 1e-4;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Independent evaluation straight from the fixture arrays.
fn oracle_row(i: usize) -> (f64, f64, f64, f64) {
    let var = |k: usize| {
        let v: Vec<f64> = common::ACCURACY[k].iter().map(|s| s[i]).collect();
        let m = v.iter().sum::<f64>() / 4.0;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 3.0
    };
    let (v1, v2) = (var(0), var(1));
    let infl = common::ACCURACY
        .iter()
        .map(|m| m.iter().map(|s| s[i]).sum::<f64>() / 4.0)
        .sum::<f64>()
        / 2.0;
    (v1, v2, (v1 + v2) / 2.0, infl)
}

#[test]
fn table_rows_reproduced() {
    let t = common::tensor(Metric::Accuracy);
    for &(i, v1, v2, s, infl, rel) in &common::TABLE_ROWS {
        let id = AugmentationId::from_index(i).unwrap();
        assert!(close(per_model_variance(&t, id, 0).unwrap(), v1, TOL), "var_m1 aug {i}");
        assert!(close(per_model_variance(&t, id, 1).unwrap(), v2, TOL), "var_m2 aug {i}");
        assert!(close(sensitivity(&t, id).unwrap(), s, TOL), "sensitivity aug {i}");
        assert!(close(influence(&t, id), infl, TOL), "influence aug {i}");
        let row = &compute_rows(&t).unwrap()[i];
        assert!(close(row.reliability_table, rel, TOL), "reliability aug {i}");
    }
}

#[test]
fn all_rows_match_independent_oracle() {
    let rows = compute_rows(&common::tensor(Metric::Accuracy)).unwrap();
    for (i, row) in rows.iter().enumerate() {
        let (v1, v2, s, infl) = oracle_row(i);
        assert!(close(row.per_model_variance[0], v1, 1e-12));
        assert!(close(row.per_model_variance[1], v2, 1e-12));
        assert!(close(row.sensitivity, s, 1e-12));
        assert!(close(row.influence, infl, 1e-12));
        assert!(close(row.consistency * row.sensitivity, 1.0, 1e-12));
        assert_eq!(row.reliability_table, row.sensitivity * row.influence);
    }
}

#[test]
fn equation_mode_differs_from_table_mode() {
    let rows = compute_rows(&common::tensor(Metric::Accuracy)).unwrap();
    let r = &rows[4];
    assert!(close(r.reliability_equation, 0.567729 / 0.917703, TOL));
    assert!(close(r.reliability_equation, 0.618642, TOL));
    assert!(!close(r.reliability_equation, r.reliability_table, 0.05));
}

#[test]
fn fixture_series_are_normalized() {
    for metric in [Metric::Accuracy, Metric::Loss] {
        for model in common::series(metric) {
            for s in model {
                let (mean, _) = mean_and_pop_std(s);
                let ss: f64 = s.iter().map(|x| (x - mean) * (x - mean)).sum();
                assert!(mean.abs() < 1e-3, "{metric} mean {mean}");
                assert!((ss - 9.0).abs() < 1e-2, "{metric} sum of squares {ss}");
            }
        }
        common::tensor(metric).check_normalized(1e-3).unwrap();
    }
}

#[test]
fn classification_follows_threshold_and_top_three() {
    let rows = metrics::analyze(&common::tensor(Metric::Accuracy), &Thresholds::default()).unwrap();
    let insensitive: Vec<usize> = rows.iter().filter(|r| !r.sensitive).map(|r| r.augmentation.index()).collect();
    // augmentation 7 sits at 0.252, above the cut
    assert_eq!(insensitive, vec![0, 3]);
    let mut by_sens: Vec<usize> = (0..9).collect();
    by_sens.sort_by(|&a, &b| rows[a].sensitivity.total_cmp(&rows[b].sensitivity));
    assert_eq!(&by_sens[..3], &[0, 3, 7]);
    assert_eq!(&by_sens[6..], &[6, 8, 4]);

    let reliable: Vec<usize> = rows.iter().filter(|r| r.reliable).map(|r| r.augmentation.index()).collect();
    assert_eq!(reliable, vec![4, 5, 8]);

    let eq = metrics::analyze(
        &common::tensor(Metric::Accuracy),
        &Thresholds {
            mode: ReliabilityMode::Equation,
            ..Thresholds::default()
        },
    )
    .unwrap();
    let reliable: Vec<usize> = eq.iter().filter(|r| r.reliable).map(|r| r.augmentation.index()).collect();
    // influence / sensitivity: 4.32 (3), 1.50 (5), 0.62 (4), 0.53 (2), ...
    assert_eq!(reliable, vec![3, 4, 5]);
}

fn tensor_strategy() -> impl Strategy<Value = CoefficientTensor> {
    (1usize..4, 2usize..6).prop_flat_map(|(k, l)| {
        prop::collection::vec(prop::array::uniform9(-3.0f64..3.0), k * l).prop_map(move |values| {
            CoefficientTensor::new(
                (0..k).map(|i| format!("m{i}")).collect(),
                (0..l).map(|i| format!("h{i}")).collect(),
                values,
                true,
            )
            .unwrap()
        })
    })
}

fn permuted(t: &CoefficientTensor, perm_k: &[usize], perm_l: &[usize]) -> CoefficientTensor {
    let mut values = Vec::new();
    for &k in perm_k {
        for &l in perm_l {
            values.push(*t.series(k, l));
        }
    }
    CoefficientTensor::new(
        perm_k.iter().map(|&k| t.classifiers[k].clone()).collect(),
        perm_l.iter().map(|&l| t.hyperparams[l].clone()).collect(),
        values,
        true,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn sensitivity_ignores_axis_order(t in tensor_strategy(), seed in any::<u64>()) {
        let mut perm_k: Vec<usize> = (0..t.num_classifiers()).collect();
        let mut perm_l: Vec<usize> = (0..t.num_hyperparams()).collect();
        let (nk, nl) = (perm_k.len() as u64, perm_l.len() as u64);
        perm_k.rotate_left((seed % nk) as usize);
        perm_l.reverse();
        perm_l.rotate_left(((seed >> 8) % nl) as usize);
        let p = permuted(&t, &perm_k, &perm_l);
        let a = compute_rows(&t).unwrap();
        let b = compute_rows(&p).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.sensitivity - y.sensitivity).abs() < 1e-12);
            prop_assert!((x.influence - y.influence).abs() < 1e-12);
        }
    }

    #[test]
    fn negation_flips_influence_and_reliability(t in tensor_strategy()) {
        let mut neg = t.clone();
        for s in &mut neg.values {
            for v in s.iter_mut() {
                *v = -*v;
            }
        }
        let a = compute_rows(&t).unwrap();
        let b = compute_rows(&neg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.sensitivity - y.sensitivity).abs() < 1e-12);
            prop_assert!((x.influence + y.influence).abs() < 1e-12);
            prop_assert!((x.reliability_table + y.reliability_table).abs() < 1e-12);
            if x.reliability_equation.is_finite() {
                prop_assert!((x.reliability_equation + y.reliability_equation).abs() < 1e-9 * x.reliability_equation.abs().max(1.0));
            }
        }
    }

    #[test]
    fn row_invariants(t in tensor_strategy()) {
        for r in compute_rows(&t).unwrap() {
            let mean = r.per_model_variance.iter().sum::<f64>() / r.per_model_variance.len() as f64;
            prop_assert!((r.sensitivity - mean).abs() < 1e-12);
            prop_assert!(r.sensitivity >= 0.0);
            if r.sensitivity > 0.0 {
                prop_assert!((r.consistency * r.sensitivity - 1.0).abs() < 1e-12);
            }
            prop_assert!((r.reliability_table - r.sensitivity * r.influence).abs() < 1e-12);
        }
    }

    #[test]
    fn reliable_count_bounded(t in tensor_strategy(), top_n in 1usize..9) {
        let th = Thresholds { top_n, ..Thresholds::default() };
        let rows = metrics::analyze(&t, &th).unwrap();
        let reliable: Vec<_> = rows.iter().filter(|r| r.reliable).collect();
        prop_assert!(reliable.len() <= top_n);
        prop_assert!(reliable.iter().all(|r| r.reliability_table > 0.0));
        // anything not reliable but positive ranks no higher than every reliable row
        for r in rows.iter().filter(|r| !r.reliable && r.reliability_table > 0.0) {
            prop_assert_eq!(reliable.len(), top_n);
            prop_assert!(reliable.iter().all(|q| q.reliability_table >= r.reliability_table));
        }
    }
}
