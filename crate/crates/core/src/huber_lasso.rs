//! l1-penalized Huber regression on one window:
//!
//! ```text
//! minimize  (1/k) Σ_h l_τ(y_h − x_hᵀβ) + η‖β‖₁
//! ```
//!
//! solved by monotone FISTA with backtracking and adaptive restart. At
//! iterations 1, 2, 4, 8, … the iterate is handed to an active-set
//! refinement that solves the quadratic piece selected by the current signs
//! and inside residuals exactly; its result is kept only if the objective
//! does not increase, so the objective trace stays monotone. With
//! `τ = ∞` the loss is the (half) least-squares loss and the problem is the
//! ordinary LASSO.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::simulator::cholesky;
use crate::{Error, Result};

/// Huber loss `l_τ(x)`. `τ = ∞` gives `x²/2`.
pub fn huber_loss(x: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(loss_unchecked(x, tau))
}

/// Derivative of the Huber loss, i.e. `x` clipped to `[−τ, τ]`.
pub fn huber_grad(x: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(x.clamp(-tau, tau))
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("Huber tau must be positive, got {tau}")))
    }
}

#[inline]
fn loss_unchecked(x: f64, tau: f64) -> f64 {
    let a = x.abs();
    if a <= tau {
        0.5 * x * x
    } else {
        tau * a - 0.5 * tau * tau
    }
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// One window of the local regression.
#[derive(Debug, Clone, Copy)]
pub struct HuberLassoProblem<'a> {
    /// `k × p` covariate increments.
    pub design: ArrayView2<'a, f64>,
    /// `k` response increments.
    pub response: ArrayView1<'a, f64>,
    pub tau: f64,
    pub eta: f64,
}

impl<'a> HuberLassoProblem<'a> {
    pub fn new(design: ArrayView2<'a, f64>, response: ArrayView1<'a, f64>, tau: f64, eta: f64) -> Result<Self> {
        let problem = Self { design, response, tau, eta };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        if self.design.nrows() != self.response.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows but response has {} entries",
                self.design.nrows(),
                self.response.len()
            )));
        }
        if self.design.nrows() == 0 || self.design.ncols() == 0 {
            return Err(Error::InvalidInput("empty Huber-LASSO window".into()));
        }
        check_tau(self.tau)?;
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidInput(format!("eta must be finite and >= 0, got {}", self.eta)));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    fn residual_into(&self, beta: &[f64], out: &mut [f64]) {
        for (h, row) in self.design.outer_iter().enumerate() {
            let fit: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
            out[h] = self.response[h] - fit;
        }
    }

    fn loss_of_residual(&self, r: &[f64]) -> f64 {
        r.iter().map(|&v| loss_unchecked(v, self.tau)).sum::<f64>() / self.k() as f64
    }

    /// Gradient of the smooth part given the residual `y − Xβ`.
    fn grad_of_residual(&self, r: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        let tau = self.tau;
        for (h, row) in self.design.outer_iter().enumerate() {
            let psi = r[h].clamp(-tau, tau);
            if psi != 0.0 {
                for (g, x) in out.iter_mut().zip(row.iter()) {
                    *g -= psi * x;
                }
            }
        }
        let k = self.k() as f64;
        out.iter_mut().for_each(|g| *g /= k);
    }

    /// Smooth empirical loss `ℒ(β)`.
    pub fn loss(&self, beta: &Array1<f64>) -> f64 {
        let mut r = vec![0.0; self.k()];
        self.residual_into(beta.as_slice().expect("contiguous beta"), &mut r);
        self.loss_of_residual(&r)
    }

    /// `ℒ(β) + η‖β‖₁`.
    pub fn objective(&self, beta: &Array1<f64>) -> f64 {
        self.loss(beta) + self.eta * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// `∇ℒ(β)`.
    pub fn gradient(&self, beta: &Array1<f64>) -> Array1<f64> {
        let mut r = vec![0.0; self.k()];
        self.residual_into(beta.as_slice().expect("contiguous beta"), &mut r);
        let mut g = vec![0.0; self.p()];
        self.grad_of_residual(&r, &mut g);
        Array1::from(g)
    }

    /// Max-norm violation of the subgradient optimality conditions.
    pub fn kkt_gap(&self, beta: &Array1<f64>) -> f64 {
        kkt_gap(beta.as_slice().expect("contiguous beta"), self.gradient(beta).as_slice().unwrap(), self.eta)
    }
}

fn kkt_gap(beta: &[f64], grad: &[f64], eta: f64) -> f64 {
    beta.iter()
        .zip(grad)
        .map(|(&b, &g)| {
            if b > 0.0 {
                (g + eta).abs()
            } else if b < 0.0 {
                (g - eta).abs()
            } else {
                (g.abs() - eta).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Nesterov momentum (FISTA); plain ISTA when false.
    pub accelerate: bool,
    /// Keep the per-iteration objective values.
    pub record_trace: bool,
    /// Periodic active-set refinement on the identified quadratic piece.
    pub refine: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 10_000, accelerate: true, record_trace: false, refine: true }
    }
}

/// Result of one window solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotBetaEstimate {
    pub beta: Array1<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_gap: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<f64>,
}

/// Solves the window problem from `init`. Exceeding `max_iter` returns the
/// best iterate with `converged = false`.
pub fn solve(problem: &HuberLassoProblem, init: &Array1<f64>, opts: &SolverOptions) -> Result<SpotBetaEstimate> {
    problem.validate()?;
    let (k, p) = (problem.k(), problem.p());
    if init.len() != p {
        return Err(Error::DimensionMismatch(format!("init has {} entries, expected {p}", init.len())));
    }
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Huber-LASSO initial point".into()));
    }
    let eta = problem.eta;
    let l1 = |b: &[f64]| b.iter().map(|v| v.abs()).sum::<f64>();

    // Curvature of the Huber loss is at most 1, so (1/k)‖x_j‖² bounds the
    // per-coordinate Lipschitz constant from below; backtracking raises it.
    let mut lipschitz = (0..p)
        .map(|j| problem.design.column(j).iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max)
        / k as f64;
    if !(lipschitz > 0.0) {
        lipschitz = 1.0;
    }

    let mut x = init.to_vec();
    let mut r_x = vec![0.0; k];
    problem.residual_into(&x, &mut r_x);
    let mut f_x = problem.loss_of_residual(&r_x);
    let mut obj_x = f_x + eta * l1(&x);
    if !obj_x.is_finite() {
        return Err(Error::NonFinite("Huber-LASSO objective at the initial point".into()));
    }
    let mut g_x = vec![0.0; p];
    problem.grad_of_residual(&r_x, &mut g_x);
    let mut gap = kkt_gap(&x, &g_x, eta);

    let mut trace = Vec::new();
    if opts.record_trace {
        trace.push(obj_x);
    }

    let mut y = x.clone();
    let mut r_y = r_x.clone();
    let mut g_y = g_x.clone();
    let mut f_y = f_x;
    let mut t = 1.0f64;
    let mut z = vec![0.0; p];
    let mut r_z = vec![0.0; k];
    let mut iterations = 0;
    let mut next_refine = 1;

    while gap > opts.tol && iterations < opts.max_iter {
        iterations += 1;

        if opts.refine && iterations == next_refine {
            next_refine *= 2;
            let max_steps = 4 * (p + k);
            let mut cand = active_set_refine(problem, &x, opts.tol, max_steps);
            if cand == x {
                cand = active_set_refine(problem, &vec![0.0; p], opts.tol, max_steps);
            }
            {
                let mut r_c = vec![0.0; k];
                problem.residual_into(&cand, &mut r_c);
                let f_c = problem.loss_of_residual(&r_c);
                let obj_c = f_c + eta * l1(&cand);
                if obj_c <= obj_x {
                    x = cand;
                    r_x = r_c;
                    f_x = f_c;
                    obj_x = obj_c;
                    problem.grad_of_residual(&r_x, &mut g_x);
                    gap = kkt_gap(&x, &g_x, eta);
                    t = 1.0;
                    y.copy_from_slice(&x);
                    r_y.copy_from_slice(&r_x);
                    f_y = f_x;
                    g_y.copy_from_slice(&g_x);
                    if opts.record_trace {
                        trace.push(obj_x);
                    }
                    continue;
                }
            }
        }

        // Backtracking proximal step from y.
        let f_z = loop {
            for j in 0..p {
                z[j] = soft_threshold(y[j] - g_y[j] / lipschitz, eta / lipschitz);
            }
            problem.residual_into(&z, &mut r_z);
            let f_z = problem.loss_of_residual(&r_z);
            let mut lin = 0.0;
            let mut quad = 0.0;
            for j in 0..p {
                let d = z[j] - y[j];
                lin += g_y[j] * d;
                quad += d * d;
            }
            let bound = f_y + lin + 0.5 * lipschitz * quad;
            if f_z <= bound + 1e-14 * f_y.abs().max(1e-300) || quad == 0.0 {
                break f_z;
            }
            lipschitz *= 2.0;
            if !lipschitz.is_finite() {
                return Err(Error::Numerical("Huber-LASSO step size underflow".into()));
            }
        };
        let obj_z = f_z + eta * l1(&z);
        if !obj_z.is_finite() {
            return Err(Error::NonFinite("Huber-LASSO objective".into()));
        }

        let improved = obj_z <= obj_x;
        let x_prev = x.clone();
        if improved {
            x.copy_from_slice(&z);
            r_x.copy_from_slice(&r_z);
            f_x = f_z;
            obj_x = obj_z;
            problem.grad_of_residual(&r_x, &mut g_x);
            gap = kkt_gap(&x, &g_x, eta);
        }
        if opts.record_trace {
            trace.push(obj_x);
        }

        if opts.accelerate && improved {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum = (t - 1.0) / t_next;
            for j in 0..p {
                y[j] = x[j] + momentum * (x[j] - x_prev[j]);
            }
            t = t_next;
            problem.residual_into(&y, &mut r_y);
            f_y = problem.loss_of_residual(&r_y);
            problem.grad_of_residual(&r_y, &mut g_y);
        } else {
            // Restart momentum from the incumbent.
            t = 1.0;
            y.copy_from_slice(&x);
            r_y.copy_from_slice(&r_x);
            f_y = f_x;
            g_y.copy_from_slice(&g_x);
            if !improved && !opts.accelerate {
                // A plain proximal step that fails to decrease means the step
                // is numerically exhausted.
                break;
            }
        }
    }

    Ok(SpotBetaEstimate {
        beta: Array1::from(x),
        objective: obj_x,
        iterations,
        kkt_gap: gap,
        converged: gap <= opts.tol,
        trace,
    })
}

/// Solves `G z = b` for symmetric positive-definite `G`.
fn spd_solve(gram: &Array2<f64>, rhs: &[f64]) -> Option<Vec<f64>> {
    let l = cholesky(gram).ok()?;
    let m = rhs.len();
    let mut z = rhs.to_vec();
    for a in 0..m {
        let s: f64 = (0..a).map(|b| l[[a, b]] * z[b]).sum();
        z[a] = (z[a] - s) / l[[a, a]];
    }
    for a in (0..m).rev() {
        let s: f64 = (a + 1..m).map(|b| l[[b, a]] * z[b]).sum();
        z[a] = (z[a] - s) / l[[a, a]];
    }
    z.iter().all(|v| v.is_finite()).then_some(z)
}

/// Minimizer of the quadratic model that agrees with the objective on the
/// piece fixed by `support`/`signs` and by which residuals lie in `[−τ, τ]`.
fn piece_minimizer(problem: &HuberLassoProblem, r: &[f64], support: &[usize], signs: &[f64]) -> Option<Vec<f64>> {
    let m = support.len();
    let tau = problem.tau;
    let inside = r.iter().filter(|v| v.abs() <= tau).count();
    if m == 0 || m > inside {
        return None;
    }
    let mut gram = Array2::<f64>::zeros((m, m));
    let mut rhs = vec![0.0; m];
    for (h, row) in problem.design.outer_iter().enumerate() {
        if r[h].abs() <= tau {
            for (a, &ja) in support.iter().enumerate() {
                let xa = row[ja];
                rhs[a] += xa * problem.response[h];
                for (b, &jb) in support.iter().enumerate().skip(a) {
                    gram[[a, b]] += xa * row[jb];
                }
            }
        } else {
            let edge = tau * r[h].signum();
            for (a, &ja) in support.iter().enumerate() {
                rhs[a] += row[ja] * edge;
            }
        }
    }
    let k = problem.k() as f64;
    for a in 0..m {
        rhs[a] -= k * problem.eta * signs[a];
        for b in 0..a {
            gram[[a, b]] = gram[[b, a]];
        }
    }
    spd_solve(&gram, &rhs)
}

/// Exact minimizer over `α ∈ [0, 1]` of the convex piecewise quadratic
/// `φ(α) = (1/k)Σ l_τ(r_h − α a_h) + η‖x + αd‖₁`.
fn line_minimizer(r: &[f64], a: &[f64], x: &[f64], d: &[f64], tau: f64, eta: f64) -> f64 {
    let k = r.len() as f64;
    let slope = |alpha: f64| -> f64 {
        let mut s = 0.0;
        for (ri, ai) in r.iter().zip(a) {
            s -= (ri - alpha * ai).clamp(-tau, tau) * ai;
        }
        s /= k;
        for (xj, dj) in x.iter().zip(d) {
            let v = xj + alpha * dj;
            s += eta * if v != 0.0 { v.signum() * dj } else { dj.abs() };
        }
        s
    };
    let mut breaks: Vec<f64> = Vec::new();
    for (ri, ai) in r.iter().zip(a) {
        if *ai != 0.0 && tau.is_finite() {
            for edge in [tau, -tau] {
                let b = (ri - edge) / ai;
                if b > 0.0 && b < 1.0 {
                    breaks.push(b);
                }
            }
        }
    }
    for (xj, dj) in x.iter().zip(d) {
        if *dj != 0.0 {
            let b = -xj / dj;
            if b > 0.0 && b < 1.0 {
                breaks.push(b);
            }
        }
    }
    breaks.push(1.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut lo = 0.0;
    for &hi in &breaks {
        // φ is quadratic on (lo, hi); its slope is linear there.
        let mid = 0.5 * (lo + hi);
        let s_mid = slope(mid);
        let curv: f64 =
            r.iter().zip(a).filter(|(ri, ai)| (*ri - mid * *ai).abs() <= tau).map(|(_, ai)| ai * ai).sum::<f64>() / k;
        let s_hi = s_mid + curv * (hi - mid);
        if s_hi >= 0.0 {
            let s_lo = s_mid - curv * (mid - lo);
            if s_lo >= 0.0 {
                return lo;
            }
            return if curv > 0.0 { (mid - s_mid / curv).clamp(lo, hi) } else { hi };
        }
        lo = hi;
    }
    1.0
}

/// The coordinate of `support` that is currently zero, if one was just added.
fn entering_index(x: &[f64], support: &[usize], added: bool) -> Option<usize> {
    if !added {
        return None;
    }
    support.iter().position(|&j| x[j] == 0.0)
}

/// Pivot when the enlarged support exceeds the rows inside `[−τ, τ]` by one:
/// moves along the null space of those rows, with the entering coordinate
/// taking its KKT sign, up to the first support coordinate that reaches zero.
fn pivot_direction(
    problem: &HuberLassoProblem,
    r: &[f64],
    x: &[f64],
    support: &[usize],
    signs: &[f64],
    entering: usize,
) -> Option<Vec<f64>> {
    let rows: Vec<usize> = (0..r.len()).filter(|&h| r[h].abs() <= problem.tau).collect();
    let m = support.len();
    if m != rows.len() + 1 {
        return None;
    }
    let rest: Vec<usize> = (0..m).filter(|&a| a != entering).collect();
    let q = rows.len();
    // Square system X_{Q,rest} d_rest = −X_{Q,j} s_j, solved through its normal equations.
    let mut gram = Array2::<f64>::zeros((q, q));
    let mut rhs = vec![0.0; q];
    let col_j = support[entering];
    for &h in &rows {
        let row = problem.design.row(h);
        let b = -row[col_j] * signs[entering];
        for (a, &ia) in rest.iter().enumerate() {
            let xa = row[support[ia]];
            rhs[a] += xa * b;
            for (c, &ic) in rest.iter().enumerate() {
                gram[[a, c]] += xa * row[support[ic]];
            }
        }
    }
    let z = spd_solve(&gram, &rhs)?;
    let mut d = vec![0.0; x.len()];
    d[col_j] = signs[entering];
    for (a, &ia) in rest.iter().enumerate() {
        d[support[ia]] = z[a];
    }
    let step = support
        .iter()
        .filter(|&&j| x[j] != 0.0 && x[j] * d[j] < 0.0)
        .map(|&j| -x[j] / d[j])
        .fold(f64::INFINITY, f64::min);
    if !step.is_finite() {
        return None;
    }
    Some(d.into_iter().map(|v| v * step).collect())
}

/// Active-set refinement in the spirit of feature-sign search: Newton steps on
/// the current quadratic piece, an exact line search across the kinks, and
/// one coordinate activated at a time. Never increases the objective.
fn active_set_refine(problem: &HuberLassoProblem, start: &[f64], tol: f64, max_steps: usize) -> Vec<f64> {
    let (k, p) = (problem.k(), problem.p());
    let eta = problem.eta;
    let mut x = start.to_vec();
    let mut r = vec![0.0; k];
    let mut g = vec![0.0; p];
    for _ in 0..max_steps {
        problem.residual_into(&x, &mut r);
        problem.grad_of_residual(&r, &mut g);
        if kkt_gap(&x, &g, eta) <= tol {
            break;
        }
        let mut support: Vec<usize> = (0..p).filter(|&j| x[j] != 0.0).collect();
        let mut signs: Vec<f64> = support.iter().map(|&j| x[j].signum()).collect();
        let active_ok = support.iter().zip(&signs).all(|(&j, &s)| (g[j] + eta * s).abs() <= tol);
        if active_ok {
            let entering = (0..p)
                .filter(|&j| x[j] == 0.0)
                .map(|j| (j, g[j].abs() - eta))
                .filter(|(_, v)| *v > tol)
                .max_by(|a, b| a.1.total_cmp(&b.1));
            let Some((j, _)) = entering else { break };
            let pos = support.partition_point(|&i| i < j);
            support.insert(pos, j);
            signs.insert(pos, -g[j].signum());
        }
        let mut d = vec![0.0; p];
        if let Some(z) = piece_minimizer(problem, &r, &support, &signs) {
            for j in 0..p {
                d[j] = -x[j];
            }
            for (a, &j) in support.iter().enumerate() {
                d[j] += z[a];
            }
        } else {
            let Some(entering) = entering_index(&x, &support, active_ok) else { break };
            let Some(dir) = pivot_direction(problem, &r, &x, &support, &signs, entering) else { break };
            d = dir;
        }
        let a_dir: Vec<f64> = problem.design.outer_iter().map(|row| row.iter().zip(&d).map(|(u, v)| u * v).sum()).collect();
        let alpha = line_minimizer(&r, &a_dir, &x, &d, problem.tau, eta);
        if alpha <= 0.0 {
            break;
        }
        let before = problem.loss_of_residual(&r) + eta * x.iter().map(|v| v.abs()).sum::<f64>();
        let mut next: Vec<f64> = x.iter().zip(&d).map(|(xj, dj)| xj + alpha * dj).collect();
        // Coordinates that reach zero at the step leave the support.
        for j in 0..p {
            if d[j] != 0.0 && x[j] != 0.0 && ((-x[j] / d[j]) - alpha).abs() <= 1e-12 * alpha.max(1.0) {
                next[j] = 0.0;
            }
        }
        let mut r_next = vec![0.0; k];
        problem.residual_into(&next, &mut r_next);
        let after = problem.loss_of_residual(&r_next) + eta * next.iter().map(|v| v.abs()).sum::<f64>();
        if !(after <= before) {
            break;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loss_values() {
        assert_eq!(huber_loss(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(huber_loss(0.5, 1.0).unwrap(), 0.125);
        assert_eq!(huber_loss(3.0, 1.0).unwrap(), 2.5);
        assert_eq!(huber_loss(-3.0, 1.0).unwrap(), 2.5);
        assert_eq!(huber_loss(3.0, f64::INFINITY).unwrap(), 4.5);
        assert!(huber_loss(1.0, 0.0).is_err());
        assert!(huber_grad(1.0, -1.0).is_err());
    }

    #[test]
    fn grad_is_clip() {
        assert_eq!(huber_grad(0.3, 1.0).unwrap(), 0.3);
        assert_eq!(huber_grad(5.0, 2.0).unwrap(), 2.0);
        assert_eq!(huber_grad(-5.0, 2.0).unwrap(), -2.0);
        assert_eq!(huber_grad(-5.0, f64::INFINITY).unwrap(), -5.0);
    }

    #[test]
    fn grad_matches_central_differences() {
        let tau = 0.7;
        let h = 1e-6;
        for i in 0..=100 {
            let x = -3.0 * tau + 6.0 * tau * i as f64 / 100.0;
            if (x.abs() - tau).abs() < 1e-3 {
                continue;
            }
            let fd = (huber_loss(x + h, tau).unwrap() - huber_loss(x - h, tau).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(fd, huber_grad(x, tau).unwrap(), epsilon = 1e-6);
        }
    }

    fn random_problem(seed: u64, k: usize, p: usize) -> (Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((k, p), |_| rng.random_range(-1.0..1.0));
        let beta = Array1::from_shape_fn(p, |j| if j % 2 == 0 { 1.0 } else { 0.0 });
        let noise = Array1::from_shape_fn(k, |_| 0.3 * rng.random_range(-1.0..1.0));
        let y = x.dot(&beta) + noise;
        (x, y)
    }

    #[test]
    fn large_penalty_gives_zero() {
        let (x, y) = random_problem(1, 30, 4);
        let pb = HuberLassoProblem::new(x.view(), y.view(), 0.5, 1.0).unwrap();
        let g0 = pb.gradient(&Array1::zeros(4));
        let eta = g0.iter().fold(0.0f64, |m, v| m.max(v.abs())) * 1.01;
        let pb = HuberLassoProblem { eta, ..pb };
        let est = solve(&pb, &Array1::zeros(4), &SolverOptions::default()).unwrap();
        assert!(est.beta.iter().all(|&b| b == 0.0));
        assert!(est.converged);
        assert_eq!(est.iterations, 0);
    }

    #[test]
    fn exact_interpolation_scalar() {
        let x = Array2::from_shape_vec((5, 1), vec![1.0, -2.0, 0.5, 3.0, -1.0]).unwrap();
        let y = x.column(0).mapv(|v| 2.0 * v);
        let pb = HuberLassoProblem::new(x.view(), y.view(), f64::INFINITY, 0.0).unwrap();
        let est = solve(&pb, &Array1::zeros(1), &SolverOptions::default()).unwrap();
        assert_abs_diff_eq!(est.beta[0], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn objective_trace_is_monotone() {
        let (x, y) = random_problem(3, 40, 5);
        let pb = HuberLassoProblem::new(x.view(), y.view(), 0.3, 0.02).unwrap();
        let opts = SolverOptions { record_trace: true, ..SolverOptions::default() };
        let est = solve(&pb, &Array1::zeros(5), &opts).unwrap();
        assert!(est.converged, "kkt gap {}", est.kkt_gap);
        for w in est.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(est.kkt_gap <= 1e-7);
    }

    #[test]
    fn max_iter_reports_non_convergence() {
        let (x, y) = random_problem(4, 40, 5);
        let pb = HuberLassoProblem::new(x.view(), y.view(), 0.3, 0.01).unwrap();
        let opts = SolverOptions { max_iter: 2, refine: false, ..SolverOptions::default() };
        let est = solve(&pb, &Array1::zeros(5), &opts).unwrap();
        assert!(!est.converged);
        assert_eq!(est.iterations, 2);
        assert!(est.objective <= pb.objective(&Array1::zeros(5)));
    }

    #[test]
    fn dimension_errors() {
        let (x, y) = random_problem(4, 10, 3);
        let y_short = y.slice(ndarray::s![..9]).to_owned();
        assert!(HuberLassoProblem::new(x.view(), y_short.view(), 1.0, 0.1).is_err());
        let pb = HuberLassoProblem::new(x.view(), y.view(), 1.0, 0.1).unwrap();
        assert!(solve(&pb, &Array1::zeros(2), &SolverOptions::default()).is_err());
        assert!(solve(&pb, &Array1::from(vec![f64::NAN, 0.0, 0.0]), &SolverOptions::default()).is_err());
    }
}
