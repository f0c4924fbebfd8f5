use std::collections::BTreeMap;
use std::sync::Arc;

use exposition::fairness::{fairness_metrics, is_violation, parity_loss, subgroup_confusion, Metric};
use exposition::local::{break_down, shapley_values, BreakDownOptions, ShapleyOptions};
use exposition::models::fit_linear;
use exposition::stats::auc;
use exposition::{load_dataset_str, row_fn, Dataset, Explainer};
use proptest::prelude::*;

fn numeric_csv(rows: &[Vec<f64>], target: impl Fn(&[f64]) -> f64) -> Dataset {
    let p = rows[0].len();
    let mut csv: String = (1..=p).map(|j| format!("x{j},")).collect();
    csv.push_str("y\n");
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        csv.push_str(&format!("{},{}\n", cells.join(","), target(r)));
    }
    load_dataset_str(&csv, Some("y")).unwrap()
}

fn rows_strategy(p: usize, min: usize, max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, p), min..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn batch_predictions_do_not_depend_on_partition(rows in rows_strategy(3, 4, 60), cut in 1usize..1000) {
        let data = numeric_csv(&rows, |r| r[0] * r[1] - r[2]);
        let e = Explainer::new(Arc::new(row_fn(|r| r[0] * r[1] + r[2].sin())), data, "m", None, 0).unwrap();
        let x = e.features();
        let n = x.n_rows();
        let cut = 1 + cut % (n - 1);
        let whole = e.predict_batch(x).unwrap();
        let mut parts = e.predict_batch(&x.slice(0..cut)).unwrap();
        parts.extend(e.predict_batch(&x.slice(cut..n)).unwrap());
        prop_assert_eq!(whole.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), parts.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn auc_is_invariant_to_monotone_rescaling(
        pairs in prop::collection::vec((0u8..2, -5.0f64..5.0), 2..80),
        scale in 0.1f64..10.0,
        shift in -3.0f64..3.0,
    ) {
        let y: Vec<f64> = pairs.iter().map(|(c, _)| *c as f64).collect();
        let s: Vec<f64> = pairs.iter().map(|(_, v)| *v).collect();
        let t: Vec<f64> = s.iter().map(|v| (v * scale + shift).exp()).collect();
        prop_assert_eq!(auc(&y, &s), auc(&y, &t));
    }

    #[test]
    fn break_down_of_additive_model_ignores_order(rows in rows_strategy(4, 5, 30), row in 0usize..1000, seed in any::<u64>()) {
        let data = numeric_csv(&rows, |r| r[0]);
        let f = |r: &[f64]| 2.0 * r[0] + r[1] * r[1] - (r[2] / 3.0).cos() + 0.5 * r[3];
        let e = Explainer::new(Arc::new(row_fn(f)), data, "m", None, 0).unwrap();
        let inst = e.instance(row % rows.len()).unwrap();
        let names = ["x1", "x2", "x3", "x4"];
        let reference = break_down(&e, &inst, &BreakDownOptions { seed, ..Default::default() }).unwrap();
        let mut rng_state = seed;
        for _ in 0..10 {
            let mut order: Vec<String> = names.iter().map(|s| s.to_string()).collect();
            for i in (1..order.len()).rev() {
                rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(i, (rng_state >> 33) as usize % (i + 1));
            }
            let other = break_down(&e, &inst, &BreakDownOptions { order: Some(order), seed, ..Default::default() }).unwrap();
            for name in names {
                let a = reference.contribution_of(name).unwrap();
                let b = other.contribution_of(name).unwrap();
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{name}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn linear_fit_recovers_exact_coefficients(
        rows in rows_strategy(3, 8, 60),
        coefs in prop::collection::vec(-5.0f64..5.0, 3),
        intercept in -5.0f64..5.0,
    ) {
        let target = |r: &[f64]| intercept + coefs[0] * r[0] + coefs[1] * r[1] + coefs[2] * r[2];
        let data = numeric_csv(&rows, target);
        prop_assume!(rows.iter().map(|r| r[0]).fold(f64::NEG_INFINITY, f64::max) - rows.iter().map(|r| r[0]).fold(f64::INFINITY, f64::min) > 1.0);
        match fit_linear(&data) {
            Ok(m) => {
                prop_assert!((m.intercept - intercept).abs() < 1e-8, "intercept {}", m.intercept);
                for (j, c) in coefs.iter().enumerate() {
                    let got = m.coefficient(&format!("x{}", j + 1)).unwrap();
                    prop_assert!((got - c).abs() < 1e-8, "x{}: {got} vs {c}", j + 1);
                }
            }
            // near-collinear random designs are allowed to be rejected
            Err(exposition::ExplainError::Singular(_)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn violation_band_is_symmetric_under_inversion(r in 0.01f64..100.0, eps in 0.05f64..0.99) {
        let near = |b: f64| (r - b).abs() <= 1e-9 * b;
        prop_assume!(!near(eps) && !near(1.0 / eps));
        prop_assert_eq!(is_violation(r, eps), is_violation(1.0 / r, eps));
    }

    #[test]
    fn tighter_epsilon_flags_at_least_as_much(r in 0.01f64..100.0, a in 0.05f64..0.99, b in 0.05f64..0.99) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if is_violation(r, lo) {
            prop_assert!(is_violation(r, hi));
        }
    }

    #[test]
    fn subgroup_tallies_add_up(rows in prop::collection::vec((0usize..3, 0u8..2, 0.0f64..1.0), 6..120)) {
        let mut csv = String::from("g,s,y\n");
        for (g, y, s) in &rows {
            csv.push_str(&format!("{},{s},{y}\n", ["a", "b", "c"][*g]));
        }
        prop_assume!(rows.iter().any(|r| r.1 == 0) && rows.iter().any(|r| r.1 == 1));
        let data = load_dataset_str(&csv, Some("y")).unwrap();
        let e = Explainer::new(Arc::new(row_fn(|r| r[1])), data, "m", None, 0).unwrap();
        let confusion = subgroup_confusion(&e, "g", &BTreeMap::new()).unwrap();
        let total = confusion.total();
        prop_assert_eq!(total.n(), rows.len() as u64);
        let positives = rows.iter().filter(|r| r.2 >= 0.5).count() as u64;
        prop_assert_eq!(total.tp + total.fp, positives);
        let scores = fairness_metrics(&confusion);
        for g in &scores.subgroups {
            let loss = parity_loss(&scores, g).unwrap();
            for m in Metric::ALL {
                if let Some(Some(v)) = loss.values.get(&m) {
                    prop_assert!(*v >= 0.0);
                }
            }
        }
    }
}

#[test]
fn shapley_is_reproducible_for_a_seed() {
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|i| vec![i as f64 * 0.3, (i % 7) as f64, ((i * 13) % 5) as f64])
        .collect();
    let data = numeric_csv(&rows, |r| r[0]);
    let e = Explainer::new(Arc::new(row_fn(|r| r[0] * r[1] + r[2])), data, "m", None, 0).unwrap();
    let inst = e.instance(5).unwrap();
    let opts = ShapleyOptions {
        b: 15,
        background_size: 20,
        seed: 9,
        ..Default::default()
    };
    let a = shapley_values(&e, &inst, &opts)
        .unwrap()
        .to_explanation("m", &opts)
        .to_json_bytes();
    let b = shapley_values(&e, &inst, &opts)
        .unwrap()
        .to_explanation("m", &opts)
        .to_json_bytes();
    assert_eq!(a, b);
    let other = ShapleyOptions {
        seed: 10,
        ..opts.clone()
    };
    let c = shapley_values(&e, &inst, &other)
        .unwrap()
        .to_explanation("m", &other)
        .to_json_bytes();
    assert_ne!(a, c);
}
