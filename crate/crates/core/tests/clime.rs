mod common;

use betaflow::clime::{constraint_violation, solve_clime, symmetrize, ClimeProblem};
use betaflow::Error;
use common::*;
use ndarray::Array2;
use proptest::prelude::*;

fn clime(s: &Array2<f64>, lambda: f64) -> betaflow::clime::PrecisionEstimate {
    solve_clime(&ClimeProblem::new(s.clone(), lambda).unwrap(), 1e-9).unwrap()
}

fn inverse(s: &Array2<f64>) -> Array2<f64> {
    let p = s.nrows();
    let mut inv = Array2::zeros((p, p));
    for j in 0..p {
        let e: Vec<f64> = (0..p).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
        let col = ols(s, &e);
        for i in 0..p {
            inv[[i, j]] = col[i];
        }
    }
    inv
}

#[test]
fn columns_match_lp_reference() {
    let mut r = rng(2024);
    for case in 0..20 {
        let p = 3 + case % 2;
        let s = random_spd(&mut r, p);
        for lambda in [0.05, 0.2] {
            let est = clime(&s, lambda);
            for j in 0..p {
                let reference = clime_column_lp(&s, j, lambda).expect("feasible");
                assert!((est.l1_norms[j] - reference).abs() < 1e-6, "case {case} column {j}");
            }
        }
    }
}

#[test]
fn identity_and_diagonal_closed_forms() {
    for lambda in [0.05, 0.1, 0.3, 0.7] {
        let est = clime(&Array2::eye(4), lambda);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 - lambda } else { 0.0 };
                assert!((est.omega[[i, j]] - want).abs() < 1e-8);
            }
        }
    }
    let s = Array2::from_diag(&ndarray::arr1(&[2.0, 4.0, 0.5]));
    let est = clime(&s, 0.1);
    for (j, d) in [2.0, 4.0, 0.5].iter().enumerate() {
        assert!((est.omega[[j, j]] - 0.9 / d).abs() < 1e-8);
    }
}

#[test]
fn lambda_at_least_one_gives_zero() {
    let s = random_spd(&mut rng(3), 5);
    for lambda in [1.0, 1.5, 10.0] {
        assert!(clime(&s, lambda).omega.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn rank_deficient_window_reports_column() {
    let mut r = rng(9);
    let x = random_matrix(&mut r, 2, 4);
    let s = x.t().dot(&x) / 2.0;
    match solve_clime(&ClimeProblem::new(s, 0.01).unwrap(), 1e-9) {
        Err(Error::Infeasible { .. }) => {}
        other => panic!("expected infeasibility, got {other:?}"),
    }
}

#[test]
fn window_gram_matrix_scaling() {
    let mut r = rng(4);
    let x = random_matrix(&mut r, 20, 3);
    let pb = ClimeProblem::from_window(x.view(), 0.01, 0.2).unwrap();
    let gram = x.t().dot(&x) / (20.0 * 0.01);
    for (a, b) in pb.s_hat.iter().zip(gram.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn solution_is_feasible(seed in any::<u64>(), p in 2usize..7, lambda in 0.02f64..0.9) {
        let s = random_spd(&mut rng(seed), p);
        let est = clime(&s, lambda);
        prop_assert!(constraint_violation(&s, &est.omega, lambda) <= 1e-9);
    }

    #[test]
    fn norm_is_monotone_in_lambda(seed in any::<u64>(), p in 2usize..6, a in 0.02f64..0.9, b in 0.02f64..0.9) {
        let s = random_spd(&mut rng(seed), p);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small = clime(&s, lo);
        let large = clime(&s, hi);
        for j in 0..p {
            prop_assert!(small.l1_norms[j] >= large.l1_norms[j] - 1e-9);
        }
    }

    #[test]
    fn never_worse_than_exact_inverse(seed in any::<u64>(), p in 2usize..6, lambda in 0.0f64..0.5) {
        let s = random_spd(&mut rng(seed), p);
        let inv = inverse(&s);
        let lambda = lambda.max(1e-6);
        let est = clime(&s, lambda);
        for j in 0..p {
            let inv_norm: f64 = inv.column(j).iter().map(|v| v.abs()).sum();
            prop_assert!(est.l1_norms[j] <= inv_norm + 1e-8);
        }
    }

    #[test]
    fn symmetrized_estimate_is_symmetric(seed in any::<u64>(), p in 2usize..6) {
        let s = random_spd(&mut rng(seed), p);
        let sym = symmetrize(&clime(&s, 0.2).omega);
        for i in 0..p {
            for j in 0..p {
                prop_assert_eq!(sym[[i, j]], sym[[j, i]]);
            }
        }
    }
}
