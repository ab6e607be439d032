//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

pub fn random_vector(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(len, |_| scale * rng.random_range(-1.0..1.0))
}

/// Random symmetric positive-definite matrix `AᵀA/m + δI`.
pub fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> Array2<f64> {
    let a = random_matrix(rng, p + 3, p);
    let mut s = a.t().dot(&a) / (p + 3) as f64;
    for i in 0..p {
        s[[i, i]] += 0.2;
    }
    s
}

pub fn huber_scalar(x: f64, tau: f64) -> f64 {
    if x.abs() <= tau {
        0.5 * x * x
    } else {
        tau * x.abs() - 0.5 * tau * tau
    }
}

/// `(1/k)Σ l_τ(y_h − x_hᵀβ) + η‖β‖₁` by explicit loops.
pub fn huber_lasso_objective(x: &Array2<f64>, y: &Array1<f64>, beta: &[f64], tau: f64, eta: f64) -> f64 {
    let (k, p) = x.dim();
    let mut loss = 0.0;
    for h in 0..k {
        let mut fit = 0.0;
        for j in 0..p {
            fit += x[[h, j]] * beta[j];
        }
        loss += huber_scalar(y[h] - fit, tau);
    }
    loss / k as f64 + eta * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Cyclic coordinate descent with each coordinate minimized exactly by
/// bisection on its monotone subgradient. Stops when a full sweep moves no
/// coordinate by more than `tol`.
pub fn coordinate_descent(x: &Array2<f64>, y: &Array1<f64>, tau: f64, eta: f64, tol: f64) -> Vec<f64> {
    let (k, p) = x.dim();
    let kf = k as f64;
    let mut beta = vec![0.0; p];
    let mut r: Vec<f64> = y.to_vec();
    for _sweep in 0..200_000 {
        let mut moved = 0.0f64;
        for j in 0..p {
            let col: Vec<f64> = (0..k).map(|h| x[[h, j]]).collect();
            let b0 = beta[j];
            // Smooth part derivative at b, the other coordinates fixed.
            let smooth = |b: f64| -> f64 {
                let mut s = 0.0;
                for h in 0..k {
                    let rh = r[h] - col[h] * (b - b0);
                    s -= rh.clamp(-tau, tau) * col[h];
                }
                s / kf
            };
            let new = if eta > 0.0 && smooth(0.0).abs() <= eta {
                0.0
            } else {
                let sign = if eta == 0.0 { 0.0 } else { -smooth(0.0).signum() };
                let d = |b: f64| smooth(b) + eta * sign;
                let mut lo = -1.0;
                let mut hi = 1.0;
                while d(lo) > 0.0 {
                    lo *= 2.0;
                }
                while d(hi) < 0.0 {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if d(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-16 * (1.0 + mid.abs()) {
                        break;
                    }
                }
                0.5 * (lo + hi)
            };
            if new != b0 {
                for h in 0..k {
                    r[h] -= col[h] * (new - b0);
                }
                beta[j] = new;
                moved = moved.max((new - b0).abs());
            }
        }
        if moved <= tol {
            break;
        }
    }
    beta
}

/// Minimizes `cᵀx` subject to `A x ≤ b`, `x ≥ 0` (with `b` of any sign) by
/// the two-phase tableau simplex method with Bland's rule. Returns the
/// optimal value, or `None` if infeasible.
pub fn simplex_min(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<f64> {
    let m = a.len();
    let n = c.len();
    // Columns: x (n), slacks (m), artificials (m), rhs.
    let width = n + 2 * m + 1;
    let rhs = width - 1;
    let mut t = vec![vec![0.0; width]; m];
    let mut basis = vec![0usize; m];
    for i in 0..m {
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = flip * a[i][j];
        }
        t[i][n + i] = flip;
        t[i][n + m + i] = 1.0;
        t[i][rhs] = flip * b[i];
        basis[i] = n + m + i;
    }
    let eps = 1e-11;
    let pivot = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, row: usize, col: usize| {
        let pv = t[row][col];
        for v in t[row].iter_mut() {
            *v /= pv;
        }
        for i in 0..t.len() {
            if i != row && t[i][col] != 0.0 {
                let f = t[i][col];
                for j in 0..t[i].len() {
                    t[i][j] -= f * t[row][j];
                }
            }
        }
        basis[row] = col;
    };
    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, cost: &[f64], allowed: usize| -> bool {
        loop {
            // Reduced costs.
            let mut entering = None;
            for j in 0..allowed {
                if basis.contains(&j) {
                    continue;
                }
                let mut rc = cost[j];
                for i in 0..t.len() {
                    rc -= cost[basis[i]] * t[i][j];
                }
                if rc < -eps {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..t.len() {
                if t[i][col] > eps {
                    let ratio = t[i][rhs] / t[i][col];
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - eps || (ratio <= lr + eps && basis[i] < basis[li]) {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((row, _)) = leave else { return false };
            pivot(t, basis, row, col);
        }
    };
    let mut phase1 = vec![0.0; n + 2 * m];
    for i in 0..m {
        phase1[n + m + i] = 1.0;
    }
    run(&mut t, &mut basis, &phase1, n + 2 * m);
    let infeas: f64 = (0..m).filter(|&i| basis[i] >= n + m).map(|i| t[i][rhs]).sum();
    if infeas > 1e-9 {
        return None;
    }
    // Drive remaining zero-level artificials out of the basis.
    for i in 0..m {
        if basis[i] >= n + m {
            if let Some(col) = (0..n + m).find(|&j| t[i][j].abs() > eps) {
                pivot(&mut t, &mut basis, i, col);
            }
        }
    }
    let mut phase2 = vec![0.0; n + 2 * m];
    phase2[..n].copy_from_slice(c);
    if !run(&mut t, &mut basis, &phase2, n + m) {
        return None;
    }
    let mut value = 0.0;
    for i in 0..m {
        if basis[i] < n {
            value += c[basis[i]] * t[i][rhs];
        }
    }
    Some(value)
}

/// Optimal `‖ω‖₁` for `min ‖ω‖₁ s.t. ‖S ω − e_j‖_∞ ≤ λ`, via `ω = u − v`.
pub fn clime_column_lp(s: &Array2<f64>, column: usize, lambda: f64) -> Option<f64> {
    let p = s.nrows();
    let c = vec![1.0; 2 * p];
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..p {
        let e = if i == column { 1.0 } else { 0.0 };
        let row: Vec<f64> = (0..p).map(|j| s[[i, j]]).chain((0..p).map(|j| -s[[i, j]])).collect();
        a.push(row.clone());
        b.push(lambda + e);
        a.push(row.iter().map(|v| -v).collect());
        b.push(lambda - e);
    }
    simplex_min(&c, &a, &b)
}

/// Least squares via normal equations and Gaussian elimination.
pub fn ols(x: &Array2<f64>, y: &[f64]) -> Vec<f64> {
    let p = x.ncols();
    let mut m = vec![vec![0.0; p + 1]; p];
    for a in 0..p {
        for b in 0..p {
            m[a][b] = (0..x.nrows()).map(|h| x[[h, a]] * x[[h, b]]).sum();
        }
        m[a][p] = (0..x.nrows()).map(|h| x[[h, a]] * y[h]).sum();
    }
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        for i in 0..p {
            if i != col {
                let f = m[i][col] / m[col][col];
                for j in col..=p {
                    m[i][j] -= f * m[col][j];
                }
            }
        }
    }
    (0..p).map(|i| m[i][p] / m[i][i]).collect()
}
