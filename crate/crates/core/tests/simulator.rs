mod common;

use betaflow::simulator::{
    cholesky, simulate_covariance_path, simulate_ou, simulate_paths, toeplitz_correlation, OUParams, SimConfig,
};
use common::*;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn quiet(p: usize, n: usize) -> SimConfig {
    SimConfig {
        p,
        n_all: n,
        n,
        s_p: p as f64,
        df: f64::INFINITY,
        jump_intensity_x: 0.0,
        jump_intensity_y: 0.0,
        ..SimConfig::default()
    }
}

#[test]
fn ou_path_matches_scalar_recurrence() {
    let params = OUParams::new(3.0, 0.3, 0.2, 0.15);
    let n_all = 500;
    let h = 1.0 / n_all as f64;
    let grid: Vec<f64> = (0..=n_all).map(|l| l as f64 * h).collect();
    let mut r = rng(17);
    let noise: Vec<f64> = (0..n_all).map(|_| StandardNormal.sample(&mut r)).collect();
    let path = simulate_ou(&params, &grid, &noise).unwrap();
    let mut x = 0.15;
    assert_eq!(path[0], x);
    for l in 0..n_all {
        x = x + 3.0 * (0.3 - x) * h + 0.2 * h.sqrt() * noise[l];
        assert!((path[l + 1] - x).abs() < 1e-14);
    }
}

#[test]
fn deterministic_beta_integrates_exactly() {
    let config = SimConfig {
        s_p: 1.5,
        xi: OUParams::new(3.0, 0.0, 0.0, 0.0),
        nu_prime: OUParams::new(3.0, 0.4, 0.0, 0.5),
        u: OUParams::new(5.0, 0.45, 0.0, 1.0),
        ..quiet(3, 400)
    };
    let sim = simulate_paths(&config).unwrap();
    for (l, row) in sim.true_spot_beta.outer_iter().enumerate() {
        assert!((row[0] - (1.0 + 0.1 * l as f64 / 400.0)).abs() < 1e-12);
    }
    assert!((sim.true_integrated_beta[0] - 1.05).abs() < 1e-12);
    assert_eq!(sim.true_integrated_beta[1], 0.0);
}

/// OLS on the generated increments is unbiased for a constant beta. The
/// spread at n = 200 is set by the residual volatility and the 0.8
/// correlation, so the check is on the mean estimate rather than on a fixed
/// error level.
#[test]
fn ols_recovers_constant_beta() {
    let seeds = 40;
    let mut estimates = Vec::with_capacity(seeds);
    for seed in 0..seeds as u64 {
        let config = SimConfig {
            seed,
            beta_drift: 0.0,
            xi: OUParams::new(3.0, 0.0, 0.0, 0.0),
            n_all: 4000,
            ..quiet(5, 200)
        };
        let sim = simulate_paths(&config).unwrap();
        let panel = &sim.panel;
        let dx = Array2::from_shape_fn((200, 5), |(i, j)| panel.x[[i + 1, j]] - panel.x[[i, j]]);
        let dy: Vec<f64> = (0..200).map(|i| panel.y[i + 1] - panel.y[i]).collect();
        estimates.push(ols(&dx, &dy));
    }
    let m = seeds as f64;
    let mut l2 = 0.0;
    for j in 0..5 {
        let col: Vec<f64> = estimates.iter().map(|b| b[j]).collect();
        let mean = col.iter().sum::<f64>() / m;
        let se = (col.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt() / m.sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "coordinate {j}: {mean} +- {se}");
    }
    for b in &estimates {
        l2 += (0..5).map(|j| (b[j] - 1.0).powi(2)).sum::<f64>().sqrt() / m;
    }
    assert!(l2 < 0.3, "mean l2 error {l2}");
}

#[test]
fn jump_counts_match_intensity() {
    let reps = 500;
    let mut counts = Vec::with_capacity(reps);
    for seed in 0..reps as u64 {
        let config = SimConfig { seed, df: 3.0, jump_intensity_x: 20.0, jump_intensity_y: 10.0, ..quiet(2, 100) };
        let sim = simulate_paths(&config).unwrap();
        counts.push(sim.jumps.x[0].len() as f64);
        counts.push(sim.jumps.x[1].len() as f64);
    }
    let m = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / m;
    let sd = (counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    assert!((mean - 20.0).abs() < 3.0 * sd / m.sqrt(), "mean {mean}, se {}", sd / m.sqrt());
}

#[test]
fn realized_variance_matches_integrated_variance() {
    // Deterministic u(t), so ∫Σ_jj(t)dt = ∫u(t)dt is known.
    let n_all = 4000;
    let h = 1.0 / n_all as f64;
    let config = SimConfig { u: OUParams::new(5.0, 0.45, 0.0, 1.0), ..quiet(4, n_all) };
    let integrated_u: f64 = (0..n_all).map(|l| 0.45 + 0.55 * (1.0 - 5.0 * h).powi(l as i32)).sum::<f64>() * h;
    for seed in 0..5 {
        let sim = simulate_paths(&SimConfig { seed, ..config.clone() }).unwrap();
        for j in 0..4 {
            let col = sim.panel.x.column(j);
            let rv: f64 = col.windows(2).into_iter().map(|w| (w[1] - w[0]).powi(2)).sum();
            assert!((rv / integrated_u - 1.0).abs() < 0.1, "seed {seed} column {j}: {rv} vs {integrated_u}");
        }
    }
}

#[test]
fn panel_grid_is_uniform() {
    let sim = simulate_paths(&SimConfig { p: 3, n: 250, n_all: 1000, ..SimConfig::default() }).unwrap();
    assert_eq!(sim.panel.t.len(), 251);
    for (i, t) in sim.panel.t.iter().enumerate() {
        assert!((t - i as f64 / 250.0).abs() < 1e-15);
    }
    assert_eq!(sim.panel.y[0], 0.0);
    assert!(sim.panel.x.row(0).iter().all(|v| *v == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn inactive_coordinates_stay_zero(seed in any::<u64>(), p in 1usize..8, s_p in 0.0f64..8.0) {
        let config = SimConfig { p, s_p, seed, n_all: 200, n: 100, ..SimConfig::default() };
        let sim = simulate_paths(&config).unwrap();
        let active = (s_p.floor() as usize).min(p);
        for j in active..p {
            prop_assert!(sim.true_spot_beta.column(j).iter().all(|v| *v == 0.0));
            prop_assert_eq!(sim.true_integrated_beta[j], 0.0);
        }
    }

    #[test]
    fn same_seed_same_output(seed in any::<u64>(), p in 1usize..5) {
        let config = SimConfig { p, seed, n_all: 200, n: 50, ..SimConfig::default() };
        let a = simulate_paths(&config).unwrap();
        let b = simulate_paths(&config).unwrap();
        prop_assert_eq!(a.panel, b.panel);
        prop_assert_eq!(a.true_integrated_beta, b.true_integrated_beta);
        prop_assert_eq!(a.jumps, b.jumps);
    }

    #[test]
    fn cholesky_factor_multiplies_back(p in 1usize..10, rho in 0.0f64..0.95, u in 0.01f64..3.0) {
        let config = SimConfig { p, rho, ..SimConfig::default() };
        let path = simulate_covariance_path(&config, &[u, 2.0 * u]).unwrap();
        let t = toeplitz_correlation(p, rho);
        for step in 0..2 {
            let l = path.factor(step);
            let back = l.dot(&l.t());
            let scale = u * (1 + step) as f64;
            for (a, b) in back.iter().zip(t.iter()) {
                prop_assert!((a - scale * b).abs() <= 1e-10);
            }
            for i in 0..p {
                for j in i + 1..p {
                    prop_assert_eq!(l[[i, j]], 0.0);
                }
            }
        }
    }

    #[test]
    fn cholesky_of_random_spd(seed in any::<u64>(), p in 1usize..8) {
        let s = random_spd(&mut rng(seed), p);
        let l = cholesky(&s).unwrap();
        let back = l.dot(&l.t());
        let diff: Array1<f64> = (&back - &s).iter().copied().collect();
        prop_assert!(diff.iter().all(|d| d.abs() < 1e-12));
    }
}
