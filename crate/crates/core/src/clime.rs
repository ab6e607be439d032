//! Constrained l1-minimization for inverse matrix estimation (CLIME).
//!
//! Column `j` of the estimate solves the linear program
//!
//! ```text
//! minimize ‖ω‖₁   subject to   ‖S ω − e_j‖_max ≤ λ
//! ```
//!
//! written with `ω = ω⁺ − ω⁻` and bounded row activities `r = Sω ∈ [e_j − λ, e_j + λ]`.
//! With the row activities basic and `ω = 0` nonbasic, every reduced cost is
//! `+1`, so the all-slack basis is dual feasible and a bounded dual simplex
//! runs without a phase one. A column whose dual ray is unbounded has an
//! empty feasible set.
//!
//! The estimate is not symmetrized; [`symmetrize`] is available separately.

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const PRIMAL_TOL: f64 = 1e-10;
const DUAL_TOL: f64 = 1e-11;
const PIVOT_TOL: f64 = 1e-9;
/// Relative cost perturbation against dual degeneracy (all costs equal 1).
const COST_PERTURBATION: f64 = 1e-11;
const REFRESH_EVERY: usize = 32;

/// A CLIME instance: symmetric sample matrix and constraint level.
#[derive(Debug, Clone, PartialEq)]
pub struct ClimeProblem {
    pub s_hat: Array2<f64>,
    pub lambda: f64,
}

impl ClimeProblem {
    pub fn new(s_hat: Array2<f64>, lambda: f64) -> Result<Self> {
        let problem = Self { s_hat, lambda };
        problem.validate()?;
        Ok(problem)
    }

    /// `S = XᵀX / (k·Δ_n)` for a `k × p` window.
    pub fn from_window(window: ArrayView2<f64>, delta_n: f64, lambda: f64) -> Result<Self> {
        let k = window.nrows() as f64;
        let s_hat = window.t().dot(&window) / (k * delta_n);
        Self::new(s_hat, lambda)
    }

    pub fn p(&self) -> usize {
        self.s_hat.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.s_hat.nrows();
        if p == 0 || self.s_hat.ncols() != p {
            return Err(Error::DimensionMismatch("CLIME needs a non-empty square matrix".into()));
        }
        if self.s_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("CLIME sample matrix".into()));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput(format!("CLIME lambda must be positive, got {}", self.lambda)));
        }
        let scale = self.s_hat.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..p {
            for j in 0..i {
                if (self.s_hat[[i, j]] - self.s_hat[[j, i]]).abs() > 1e-10 * scale {
                    return Err(Error::InvalidInput(format!("CLIME matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }
}

/// Estimated precision matrix with diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionEstimate {
    pub omega: Array2<f64>,
    /// `max(‖SΩ̂ − I‖_max − λ, 0)`.
    pub feasibility_gap: f64,
    pub l1_norms: Vec<f64>,
}

impl PrecisionEstimate {
    /// `tr[(SΩ̂ − I)²]`, the loss used to select λ.
    pub fn trace_loss(&self, s_hat: &Array2<f64>) -> f64 {
        let mut m = s_hat.dot(&self.omega);
        for i in 0..m.nrows() {
            m[[i, i]] -= 1.0;
        }
        // tr(M²) = Σ_ij M_ij M_ji
        let mut tr = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                tr += m[[i, j]] * m[[j, i]];
            }
        }
        tr
    }
}

/// Solves all columns (in parallel) and checks feasibility to `tol`.
pub fn solve_clime(problem: &ClimeProblem, tol: f64) -> Result<PrecisionEstimate> {
    problem.validate()?;
    let p = problem.p();
    let columns = (0..p)
        .into_par_iter()
        .map(|j| solve_column(&problem.s_hat, j, problem.lambda))
        .collect::<Result<Vec<_>>>()?;
    let omega = Array2::from_shape_fn((p, p), |(i, j)| columns[j][i]);
    let l1_norms = columns.iter().map(|c| c.iter().map(|v| v.abs()).sum()).collect();
    let feasibility_gap = constraint_violation(&problem.s_hat, &omega, problem.lambda);
    if feasibility_gap > tol {
        return Err(Error::Numerical(format!(
            "CLIME solution violates the constraint by {feasibility_gap:e} (tolerance {tol:e})"
        )));
    }
    Ok(PrecisionEstimate { omega, feasibility_gap, l1_norms })
}

/// `max(‖SΩ − I‖_max − λ, 0)`.
pub fn constraint_violation(s_hat: &Array2<f64>, omega: &Array2<f64>, lambda: f64) -> f64 {
    let m = s_hat.dot(omega);
    let mut worst = 0.0f64;
    for ((i, j), v) in m.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((v - target).abs());
    }
    (worst - lambda).max(0.0)
}

/// Keeps, for each pair, the entry of smaller magnitude.
pub fn symmetrize(omega: &Array2<f64>) -> Array2<f64> {
    let p = omega.nrows();
    Array2::from_shape_fn((p, p), |(i, j)| {
        let (a, b) = (omega[[i, j]], omega[[j, i]]);
        if a.abs() <= b.abs() { a } else { b }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    Plus(usize),
    Minus(usize),
    Row(usize),
}

impl Var {
    fn index(self, p: usize) -> usize {
        match self {
            Var::Plus(k) => k,
            Var::Minus(k) => p + k,
            Var::Row(k) => 2 * p + k,
        }
    }

    fn from_index(idx: usize, p: usize) -> Self {
        match idx / p {
            0 => Var::Plus(idx),
            1 => Var::Minus(idx - p),
            _ => Var::Row(idx - 2 * p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Basic(usize),
    AtLower,
    AtUpper,
}

/// Bounded dual simplex for one CLIME column.
pub fn solve_column(s_hat: &Array2<f64>, column: usize, lambda: f64) -> Result<Vec<f64>> {
    let p = s_hat.nrows();
    // Work on S / c so the pivots are O(1); ω scales back by 1/c.
    let c = s_hat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if c == 0.0 {
        return if lambda >= 1.0 { Ok(vec![0.0; p]) } else { Err(Error::Infeasible { column, lambda }) };
    }
    let s = s_hat / c;
    let s = s.as_standard_layout();
    let s_row = |i: usize| &s.as_slice().unwrap()[i * p..(i + 1) * p];

    let lower: Vec<f64> = (0..p).map(|i| if i == column { 1.0 - lambda } else { -lambda }).collect();
    let upper: Vec<f64> = (0..p).map(|i| if i == column { 1.0 + lambda } else { lambda }).collect();
    let nvars = 3 * p;
    let cost: Vec<f64> = (0..nvars)
        .map(|idx| {
            if idx < 2 * p {
                // Deterministic, distinct tiny perturbations.
                1.0 + COST_PERTURBATION * (((idx * 7919) % 1009) as f64 / 1009.0)
            } else {
                0.0
            }
        })
        .collect();

    // Basis: row activities r_i in row i. B = −I.
    let mut basis: Vec<usize> = (0..p).map(|i| Var::Row(i).index(p)).collect();
    let mut status: Vec<Status> = (0..nvars)
        .map(|idx| if idx >= 2 * p { Status::Basic(idx - 2 * p) } else { Status::AtLower })
        .collect();
    let mut binv = Array2::<f64>::from_diag_elem(p, -1.0);
    let mut xb = vec![0.0; p];
    let mut d = cost.clone();
    for i in 0..p {
        d[Var::Row(i).index(p)] = 0.0;
    }

    // Column A_k of the constraint matrix [S, −S, −I], applied by closures.
    let column_times = |binv: &Array2<f64>, var: Var, out: &mut [f64]| match var {
        Var::Plus(k) | Var::Minus(k) => {
            let sign = if matches!(var, Var::Plus(_)) { 1.0 } else { -1.0 };
            for (i, o) in out.iter_mut().enumerate() {
                let row = binv.row(i);
                // S symmetric: column k equals row k.
                *o = sign * row.iter().zip(s_row(k)).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        Var::Row(k) => {
            for (i, o) in out.iter_mut().enumerate() {
                *o = -binv[[i, k]];
            }
        }
    };

    let nonbasic_value = |status: &[Status], idx: usize, lower: &[f64], upper: &[f64]| -> f64 {
        match (Var::from_index(idx, p), status[idx]) {
            (Var::Row(k), Status::AtLower) => lower[k],
            (Var::Row(k), Status::AtUpper) => upper[k],
            _ => 0.0,
        }
    };

    let refresh_primal = |binv: &Array2<f64>, status: &[Status], xb: &mut [f64]| {
        // x_B = B⁻¹(−A_N x_N); only nonbasic rows carry a value, A_r = −e_r.
        let mut rhs = vec![0.0; p];
        for k in 0..p {
            let idx = Var::Row(k).index(p);
            if !matches!(status[idx], Status::Basic(_)) {
                rhs[k] = nonbasic_value(status, idx, &lower, &upper);
            }
        }
        for i in 0..p {
            xb[i] = binv.row(i).iter().zip(&rhs).map(|(a, b)| a * b).sum();
        }
    };

    let max_iter = 50 * p + 1000;
    let mut rho = vec![0.0; p];
    let mut s_rho = vec![0.0; p];
    let mut alpha_col = vec![0.0; p];
    let mut alpha = vec![0.0; nvars];

    for iter in 0..=max_iter {
        if iter == max_iter {
            return Err(Error::Numerical(format!("CLIME column {column}: dual simplex iteration limit")));
        }
        if iter > 0 && iter % REFRESH_EVERY == 0 {
            refresh_primal(&binv, &status, &mut xb);
        }

        // Leaving row: largest bound violation.
        let mut leave = None;
        let mut worst = PRIMAL_TOL;
        for i in 0..p {
            let var = Var::from_index(basis[i], p);
            let (lo, hi) = match var {
                Var::Row(k) => (lower[k], upper[k]),
                _ => (0.0, f64::INFINITY),
            };
            let viol = if xb[i] < lo { lo - xb[i] } else if xb[i] > hi { xb[i] - hi } else { 0.0 };
            if viol > worst {
                worst = viol;
                leave = Some((i, if xb[i] < lo { lo } else { hi }, xb[i] < lo));
            }
        }
        let Some((row, target, below)) = leave else { break };

        // Pivot row α_k = (e_rᵀB⁻¹) A_k.
        rho.copy_from_slice(binv.row(row).as_slice().unwrap());
        for k in 0..p {
            s_rho[k] = s_row(k).iter().zip(&rho).map(|(a, b)| a * b).sum();
        }
        for k in 0..p {
            alpha[Var::Plus(k).index(p)] = s_rho[k];
            alpha[Var::Minus(k).index(p)] = -s_rho[k];
            alpha[Var::Row(k).index(p)] = -rho[k];
        }

        // Harris two-pass dual ratio test.
        let eligible = |idx: usize| -> bool {
            let a = alpha[idx];
            if a.abs() < PIVOT_TOL {
                return false;
            }
            match status[idx] {
                Status::Basic(_) => false,
                Status::AtLower => if below { a < 0.0 } else { a > 0.0 },
                Status::AtUpper => if below { a > 0.0 } else { a < 0.0 },
            }
        };
        let mut bound = f64::INFINITY;
        for idx in 0..nvars {
            if eligible(idx) {
                bound = bound.min((d[idx].abs() + DUAL_TOL) / alpha[idx].abs());
            }
        }
        if !bound.is_finite() {
            return Err(Error::Infeasible { column, lambda });
        }
        let mut enter = None;
        let mut best_pivot = 0.0;
        for idx in 0..nvars {
            if eligible(idx) && d[idx].abs() / alpha[idx].abs() <= bound && alpha[idx].abs() > best_pivot {
                best_pivot = alpha[idx].abs();
                enter = Some(idx);
            }
        }
        let enter = enter.expect("ratio test bound came from an eligible candidate");

        // Dual update.
        let theta_d = d[enter] / alpha[enter];
        for idx in 0..nvars {
            if !matches!(status[idx], Status::Basic(_)) {
                d[idx] -= theta_d * alpha[idx];
            }
        }
        let leaving = basis[row];
        d[leaving] = -theta_d;
        d[enter] = 0.0;

        // Primal update along the entering column.
        column_times(&binv, Var::from_index(enter, p), &mut alpha_col);
        let theta_p = (xb[row] - target) / alpha_col[row];
        let entering_value = nonbasic_value(&status, enter, &lower, &upper) + theta_p;
        for i in 0..p {
            xb[i] -= theta_p * alpha_col[i];
        }
        xb[row] = entering_value;

        status[leaving] = if below { Status::AtLower } else { Status::AtUpper };
        status[enter] = Status::Basic(row);
        basis[row] = enter;

        // Product-form update of B⁻¹.
        let piv = alpha_col[row];
        let pivot_row: Vec<f64> = binv.row(row).iter().map(|v| v / piv).collect();
        for i in 0..p {
            let f = alpha_col[i];
            if i == row || f == 0.0 {
                continue;
            }
            for (b, pr) in binv.row_mut(i).iter_mut().zip(&pivot_row) {
                *b -= f * pr;
            }
        }
        binv.row_mut(row).assign(&Array1::from(pivot_row));

        // Boxed row variables stay dual feasible by sitting at the right bound.
        let mut flipped = false;
        for k in 0..p {
            let idx = Var::Row(k).index(p);
            match status[idx] {
                Status::AtLower if d[idx] < -DUAL_TOL => {
                    status[idx] = Status::AtUpper;
                    flipped = true;
                }
                Status::AtUpper if d[idx] > DUAL_TOL => {
                    status[idx] = Status::AtLower;
                    flipped = true;
                }
                _ => {}
            }
        }
        if flipped {
            refresh_primal(&binv, &status, &mut xb);
        }
    }

    refresh_primal(&binv, &status, &mut xb);
    let mut omega = vec![0.0; p];
    for (i, &idx) in basis.iter().enumerate() {
        match Var::from_index(idx, p) {
            Var::Plus(k) => omega[k] += xb[i].max(0.0),
            Var::Minus(k) => omega[k] -= xb[i].max(0.0),
            Var::Row(_) => {}
        }
    }
    Ok(omega.into_iter().map(|w| w / c).collect())
}
