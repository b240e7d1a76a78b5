mod common;

use proptest::prelude::*;
use tierprobe::probes::{fit_ridge, predict_ridge};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_form_matches_descent(seed in 0u64..10_000, n in 10usize..=50, d in 2usize..=20, a in 0usize..3) {
        let alpha = [0.1, 1.0, 10.0][a];
        let (x, y) = common::random_problem(seed, n, d);
        let m = fit_ridge(&x, &y, alpha).unwrap();
        let (w, b, gnorm) = common::ridge_by_descent(&x, &y, alpha, 1e-10);
        prop_assert!(gnorm <= 1e-10, "oracle stalled at gradient norm {gnorm:e}");
        for (a, o) in m.weights.iter().zip(&w) {
            prop_assert!((a - o).abs() <= 1e-6, "{a} vs {o}");
        }
        prop_assert!((m.intercept - b).abs() <= 1e-6);
    }
}

#[test]
fn twenty_by_five_residuals_match() {
    let (x, y) = common::random_problem(20, 20, 5);
    let m = fit_ridge(&x, &y, 1.0).unwrap();
    let (w, b, _) = common::ridge_by_descent(&x, &y, 1.0, 1e-11);
    let pred = predict_ridge(&m, &x).unwrap();
    for (i, p) in pred.iter().enumerate() {
        let oracle: f64 = (0..5).map(|j| x[(i, j)] * w[j]).sum::<f64>() + b;
        assert!((y[i] - p - (y[i] - oracle)).abs() <= 1e-6);
    }
}

#[test]
fn huge_alpha_predicts_the_mean() {
    let (x, y) = common::random_problem(3, 30, 8);
    let m = fit_ridge(&x, &y, 1e12).unwrap();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    assert!(m.weights.iter().all(|w| w.abs() < 1e-9));
    for p in predict_ridge(&m, &x).unwrap() {
        assert!((p - mean).abs() < 1e-8);
    }
}
