mod support;

use arsignal::regression::{
    fit_nnls, fit_nnls_with, kkt_violation, lawson_hanson, objective, transformed_problem,
    DesignMatrix, ScalingMode,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracles::{ls_objective, nnls_by_enumeration};

fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

#[test]
fn matches_enumeration_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..300 {
        let p = rng.random_range(1..=8);
        let n = rng.random_range(1..=20);
        let a = DMatrix::from_fn(n, p, |_, _| rng.random_range(-3.0..3.0));
        let b = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        let sol = lawson_hanson(&a, &b);
        let (_, best) = nnls_by_enumeration(&to_rows(&a), b.as_slice());
        let got = objective(&a, &b, &sol.x);
        assert!(sol.x.iter().all(|&v| v >= 0.0), "case {case}: negative coefficient");
        assert!(
            (got - best).abs() <= 1e-8 * best.max(1.0),
            "case {case} (n={n}, p={p}): {got} vs oracle {best}"
        );
    }
}

#[test]
fn objective_agrees_with_oracle_formula() {
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
    let b = DVector::from_vec(vec![1.0, 2.0, -1.0]);
    let x = DVector::from_vec(vec![0.25, 0.75]);
    let expected = ls_objective(&to_rows(&a), b.as_slice(), x.as_slice());
    assert!((objective(&a, &b, &x) - expected).abs() < 1e-12);
}

#[test]
fn identity_two_by_two_without_intercept() {
    let m = DesignMatrix::new(
        vec!["a".into(), "b".into()],
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![1.0, 0.0],
    )
    .unwrap();
    let model = fit_nnls_with(&m, ScalingMode::Identity).unwrap();
    assert_eq!(model.coefficients, vec![1.0, 0.0]);
    assert_eq!(model.intercept, 0.0);
}

#[test]
fn fitted_model_minimizes_its_transformed_problem() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for mode in [ScalingMode::Standardize, ScalingMode::CenterOnly, ScalingMode::Identity] {
        for _ in 0..40 {
            let n = rng.random_range(4..=20);
            let p = rng.random_range(1..=6);
            let rows: Vec<Vec<f64>> =
                (0..n).map(|_| (0..p).map(|_| f64::from(rng.random_range(0u8..=100))).collect()).collect();
            let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0u8..=4)) / 4.0).collect();
            let names = (0..p).map(|j| format!("q{j}")).collect();
            let m = DesignMatrix::new(names, rows, y).unwrap();
            let model = fit_nnls_with(&m, mode).unwrap();
            let (a, b) = transformed_problem(&model, &m);
            let (_, best) = nnls_by_enumeration(&to_rows(&a), b.as_slice());
            let x = DVector::from_vec(model.coefficients.clone());
            let got = objective(&a, &b, &x);
            assert!((got - best).abs() <= 1e-8 * best.max(1.0), "{mode}: {got} vs {best}");
        }
    }
}

fn problem() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
    (1usize..=12, 1usize..=6).prop_flat_map(|(n, p)| {
        (
            Just(n),
            Just(p),
            prop::collection::vec(-10.0f64..10.0, n * p),
            prop::collection::vec(-10.0f64..10.0, n),
        )
    })
}

proptest! {
    #[test]
    fn solution_is_nonnegative_and_satisfies_kkt((n, p, av, bv) in problem()) {
        let a = DMatrix::from_row_slice(n, p, &av);
        let b = DVector::from_vec(bv);
        let sol = lawson_hanson(&a, &b);
        prop_assert!(sol.x.iter().all(|&v| v >= 0.0));
        let scale = a.norm() * (a.norm() * sol.x.norm() + b.norm()) + 1.0;
        prop_assert!(kkt_violation(&a, &b, &sol.x) <= 1e-7 * scale);
        prop_assert!(objective(&a, &b, &sol.x) <= b.norm_squared() + 1e-9);
    }

    #[test]
    fn predictions_ignore_a_constant_feature_shift(
        rows in prop::collection::vec(prop::collection::vec(0u8..=100, 3), 6..20),
        labels in prop::collection::vec(0u8..=4, 20),
        shift in -50.0f64..50.0,
    ) {
        let n = rows.len();
        let names: Vec<String> = (0..3).map(|j| format!("q{j}")).collect();
        let x: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
        let y: Vec<f64> = labels[..n].iter().map(|&l| f64::from(l) / 4.0).collect();
        let shifted: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| v + shift).collect()).collect();
        let m1 = fit_nnls(&DesignMatrix::new(names.clone(), x.clone(), y.clone()).unwrap()).unwrap();
        let m2 = fit_nnls(&DesignMatrix::new(names.clone(), shifted.clone(), y).unwrap()).unwrap();
        for (r, s) in x.iter().zip(&shifted) {
            let (p1, p2) = (m1.predict(&names, r).unwrap(), m2.predict(&names, s).unwrap());
            prop_assert!((p1 - p2).abs() < 1e-6, "{} vs {}", p1, p2);
        }
    }

    #[test]
    fn raising_a_feature_never_lowers_the_prediction(
        rows in prop::collection::vec(prop::collection::vec(0u8..=100, 4), 6..20),
        labels in prop::collection::vec(0u8..=4, 20),
        probe in prop::collection::vec(0u8..=100, 4),
        col in 0usize..4,
        bump in 1u8..=50,
    ) {
        let n = rows.len();
        let names: Vec<String> = (0..4).map(|j| format!("q{j}")).collect();
        let x: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| f64::from(v)).collect()).collect();
        let y: Vec<f64> = labels[..n].iter().map(|&l| f64::from(l) / 4.0).collect();
        let model = fit_nnls(&DesignMatrix::new(names.clone(), x, y).unwrap()).unwrap();
        let base: Vec<f64> = probe.iter().map(|&v| f64::from(v)).collect();
        let mut raised = base.clone();
        raised[col] += f64::from(bump);
        prop_assert!(model.predict(&names, &raised).unwrap() >= model.predict(&names, &base).unwrap());
    }
}
