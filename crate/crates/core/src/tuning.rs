//! Data-driven selection of the tuning constants.
//!
//! - `c_η` minimizes a BIC summed over windows,
//!   `Σ_w [ k·log(2·ℒ_w(β̂)) + df_w·log k ]` with `df` the support size;
//! - `c_λ` minimizes the summed CLIME loss `tr[(SΩ̂ − I)²]`, skipping grid
//!   points at which any window is infeasible;
//! - `c_τ`, `c_ϖ`, `c_h` are chosen in that order by one-step-ahead squared
//!   prediction error over a sequence of calibration panels.
//!
//! Ties resolve to the smallest grid value attaining the minimum.

use std::collections::BTreeMap;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::clime::{solve_clime, ClimeProblem};
use crate::huber_lasso::{solve, HuberLassoProblem, SolverOptions};
use crate::pipeline::{
    compute_tuning_with, debias_spot, integrate, threshold, EstimatorConfig, Estimator,
    Method, TuningConstants,
};
use crate::preprocessing::{IncrementSet, LogPricePanel, ResponseKind};
use crate::{Error, Result};

/// Index of the minimum score; ties go to the smallest grid value, then the
/// earliest position. `None` scores are skipped.
pub fn argmin_grid(grid: &[f64], scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        let Some(s) = *s else { continue };
        if !s.is_finite() && s != f64::NEG_INFINITY {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let sb = scores[b].unwrap();
                if s < sb || (s == sb && grid[i] < grid[b]) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

/// BIC contribution of one window fit. A zero loss is floored at the
/// smallest positive double so the logarithm stays finite.
fn window_bic(loss: f64, df: usize, k: usize) -> f64 {
    let kf = k as f64;
    kf * (2.0 * loss).max(f64::MIN_POSITIVE).ln() + df as f64 * kf.ln()
}

/// Summed BIC at every penalty in `etas`. A grid point is `None` when any
/// window fails to converge.
pub fn bic_scores(problems: &[HuberLassoProblem], etas: &[f64], opts: &SolverOptions) -> Result<Vec<Option<f64>>> {
    if problems.is_empty() {
        return Err(Error::InvalidInput("BIC selection needs at least one window".into()));
    }
    let p = problems[0].p();
    // Warm start along the grid in decreasing penalty order.
    let mut order: Vec<usize> = (0..etas.len()).collect();
    order.sort_by(|a, b| etas[*b].total_cmp(&etas[*a]));
    let mut warm: Vec<Array1<f64>> = vec![Array1::zeros(p); problems.len()];
    let mut scores = vec![None; etas.len()];
    for gi in order {
        let mut total = 0.0;
        let mut ok = true;
        for (w, pb) in problems.iter().enumerate() {
            let pb = HuberLassoProblem { eta: etas[gi], ..*pb };
            let fit = solve(&pb, &warm[w], opts)?;
            warm[w] = fit.beta.clone();
            let df = fit.beta.iter().filter(|b| **b != 0.0).count();
            if fit.converged {
                total += window_bic(pb.loss(&fit.beta), df, pb.k());
            } else {
                ok = false;
            }
        }
        if ok {
            scores[gi] = Some(total);
        }
    }
    Ok(scores)
}

/// Penalty from `grid` minimizing the summed BIC over `window_problems`
/// (their own `eta` is ignored).
pub fn select_eta_bic(window_problems: &[HuberLassoProblem], grid: &[f64], opts: &SolverOptions) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty eta grid".into()));
    }
    let scores = bic_scores(window_problems, grid, opts)?;
    argmin_grid(grid, &scores)
        .map(|i| grid[i])
        .ok_or_else(|| Error::Numerical("no eta grid point produced converged fits".into()))
}

/// BIC selection of the global LASSO penalty `η_L` over the full sample.
pub fn select_lasso_eta_bic(inc: &IncrementSet, grid: &[f64], opts: &SolverOptions) -> Result<f64> {
    let n = inc.n();
    let pb = HuberLassoProblem::new(inc.dx_trunc.view(), ArrayView1::from(&inc.dy_trunc), f64::INFINITY, 0.0)?;
    let etas: Vec<f64> = grid.iter().map(|e| e / (2.0 * n as f64)).collect();
    let chosen = select_eta_bic(&[pb], &etas, opts)?;
    Ok(grid[etas.iter().position(|e| *e == chosen).unwrap()])
}

/// Summed trace loss at each λ; `None` where some window is infeasible.
pub fn lambda_scores(window_matrices: &[ClimeProblem], grid: &[f64], tol: f64) -> Result<Vec<Option<f64>>> {
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let mut total = Some(0.0);
        for pb in window_matrices {
            let pb = ClimeProblem { lambda, ..pb.clone() };
            match solve_clime(&pb, tol) {
                Ok(est) => total = total.map(|t| t + est.trace_loss(&pb.s_hat)),
                Err(Error::Infeasible { .. }) | Err(Error::Numerical(_)) => {
                    total = None;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        scores.push(total);
    }
    Ok(scores)
}

/// λ from `grid` minimizing the summed trace loss over feasible grid points.
pub fn select_lambda(window_matrices: &[ClimeProblem], grid: &[f64], tol: f64) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty lambda grid".into()));
    }
    let scores = lambda_scores(window_matrices, grid, tol)?;
    argmin_grid(grid, &scores)
        .map(|i| grid[i])
        .ok_or_else(|| Error::Numerical("every lambda grid point is infeasible".into()))
}

/// [`select_lambda`] through the estimator's CLIME cache.
pub(crate) fn select_lambda_cached(est: &Estimator, k_n: usize, grid: &[f64], tol: f64) -> Result<f64> {
    let scores = lambda_scores_cached(est, k_n, grid, tol)?;
    argmin_grid(grid, &scores)
        .map(|i| grid[i])
        .ok_or_else(|| Error::Numerical("every lambda grid point is infeasible".into()))
}

fn lambda_scores_cached(est: &Estimator, k_n: usize, grid: &[f64], tol: f64) -> Result<Vec<Option<f64>>> {
    let delta = est.increments().delta();
    // The feasible set grows with λ, so once some window is infeasible every
    // smaller λ is too; walk the grid downward and skip those.
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|a, b| grid[*b].total_cmp(&grid[*a]));
    let mut scores = vec![None; grid.len()];
    let mut infeasible_at: Option<f64> = None;
    for i in order {
        let lambda = grid[i];
        if infeasible_at.is_some_and(|f| lambda <= f) {
            continue;
        }
        let windows = match est.clime_windows_strict(k_n, lambda, tol) {
            Ok(w) => w,
            Err(Error::Infeasible { .. }) => {
                infeasible_at = Some(lambda);
                continue;
            }
            Err(Error::Numerical(_)) => continue,
            Err(e) => return Err(e),
        };
        let mut total = 0.0;
        for (start, w) in est.window_starts(k_n).into_iter().zip(windows.iter()) {
            let omega = w.as_ref().expect("strict windows are all solved");
            let s = ClimeProblem::from_window(est.design(start, k_n), delta, lambda)?.s_hat;
            total += omega.trace_loss(&s);
        }
        scores[i] = Some(total);
    }
    Ok(scores)
}

/// Grids for the prediction-error stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MspeGrids {
    pub c_tau: Vec<f64>,
    pub c_varpi: Vec<f64>,
    pub c_h: Vec<f64>,
}

impl Default for MspeGrids {
    fn default() -> Self {
        let pow2 = |lo: i32, hi: i32| (lo..=hi).map(|l| 2f64.powi(l)).collect();
        Self { c_tau: pow2(0, 10), c_varpi: pow2(-10, 0), c_h: pow2(-5, 5) }
    }
}

/// Selected constants and the losses behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub chosen: BTreeMap<String, f64>,
    /// Per constant: `(grid value, loss)`; infeasible points are omitted.
    pub grid_scores: BTreeMap<String, Vec<(f64, f64)>>,
    pub criterion: BTreeMap<String, String>,
}

impl TuningReport {
    fn record(&mut self, name: &str, criterion: &str, grid: &[f64], scores: &[Option<f64>], chosen: f64) {
        self.chosen.insert(name.into(), chosen);
        self.criterion.insert(name.into(), criterion.into());
        self.grid_scores.insert(
            name.into(),
            grid.iter().zip(scores).filter_map(|(g, s)| s.map(|s| (*g, s))).collect(),
        );
    }
}

fn squared_distance(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

struct CalibrationPanel {
    est: Estimator,
    k_n: usize,
}

impl CalibrationPanel {
    /// Spot fits on every block that has room for one window (`⌊n/k⌋`).
    fn spot_path(&self, kind: ResponseKind, tau: f64, eta: f64, opts: &SolverOptions) -> Result<Vec<Array1<f64>>> {
        let n = self.est.n();
        let mut init = Array1::zeros(self.est.p());
        let mut out = Vec::new();
        let mut start = 0;
        while start + self.k_n <= n {
            let pb = HuberLassoProblem::new(
                self.est.design(start, self.k_n),
                self.est.response(kind, start, self.k_n),
                tau,
                eta,
            )?;
            let fit = solve(&pb, &init, opts)?;
            init = fit.beta.clone();
            out.push(self.raw(&fit.beta, kind));
            start += self.k_n;
        }
        Ok(out)
    }

    fn raw(&self, beta: &Array1<f64>, kind: ResponseKind) -> Array1<f64> {
        match &self.est.increments().scale {
            Some(s) => s.rescale_beta(beta, kind),
            None => beta.clone(),
        }
    }
}

/// Sequential grid selection of `c_τ`, then `c_ϖ`, then `c_h` by one-step-ahead
/// prediction error over `calibration_panels` (consecutive periods of one
/// series). `c_η` and `c_λ` are fixed from `config` when set, otherwise
/// selected jointly over all panels first.
pub fn select_mspe_constants(
    calibration_panels: &[LogPricePanel],
    grids: &MspeGrids,
    config: &EstimatorConfig,
) -> Result<TuningReport> {
    if calibration_panels.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "the c_h stage needs at least 2 calibration panels, got {}",
            calibration_panels.len()
        )));
    }
    if grids.c_tau.is_empty() || grids.c_varpi.is_empty() || grids.c_h.is_empty() {
        return Err(Error::InvalidInput("MSPE grids must be nonempty".into()));
    }
    let config = EstimatorConfig { method: Method::Red, ..config.clone() };
    let panels = calibration_panels
        .iter()
        .map(|panel| {
            let inc = IncrementSet::from_panel(panel)?;
            let est = Estimator::new(&inc, config.standardize)?;
            config.validate(est.n())?;
            let k_n = config.window_length(est.n());
            Ok(CalibrationPanel { est, k_n })
        })
        .collect::<Result<Vec<_>>>()?;
    let count = panels.len() as f64;
    let mut report = TuningReport { chosen: BTreeMap::new(), grid_scores: BTreeMap::new(), criterion: BTreeMap::new() };

    let (c_eta, c_lambda) = joint_eta_lambda(&panels, &config, &mut report)?;
    let constants_for = |panel: &CalibrationPanel, c_tau: f64, c_varpi: f64, c_h: f64| {
        let c = TuningConstants { c_tau, c_eta, c_lambda, c_varpi, c_h };
        compute_tuning_with(panel.est.n(), panel.est.p(), &c, config.varpi_form)
    };

    // Stage 1: c_τ against next-window non-robust fits on the truncated response.
    let references = panels
        .iter()
        .map(|pl| {
            let t = constants_for(pl, f64::INFINITY, config.c_varpi, config.c_h)?;
            pl.spot_path(ResponseKind::Truncated, f64::INFINITY, t.eta, &config.solver)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut fits_by_tau = Vec::with_capacity(grids.c_tau.len());
    let mut scores = Vec::with_capacity(grids.c_tau.len());
    for &c_tau in &grids.c_tau {
        let mut total = 0.0;
        let mut fits = Vec::with_capacity(panels.len());
        for (pl, reference) in panels.iter().zip(&references) {
            let t = constants_for(pl, c_tau, config.c_varpi, config.c_h)?;
            let path = pl.spot_path(ResponseKind::Raw, t.tau, t.eta, &config.solver)?;
            let windows = pl.est.window_starts(pl.k_n).len();
            total += (0..windows).map(|m| squared_distance(&path[m], &reference[m + 1])).sum::<f64>();
            fits.push(path);
        }
        scores.push(Some(total / count));
        fits_by_tau.push(fits);
    }
    let i_tau = argmin_grid(&grids.c_tau, &scores).ok_or_else(|| Error::Numerical("c_tau losses not finite".into()))?;
    let c_tau = grids.c_tau[i_tau];
    report.record("c_tau", "mspe", &grids.c_tau, &scores, c_tau);
    let spot_hat = &fits_by_tau[i_tau];

    // Stage 2: c_ϖ, debiased spot estimates against next-window fits.
    let mut scores = Vec::with_capacity(grids.c_varpi.len());
    let mut tilde_by_varpi = Vec::with_capacity(grids.c_varpi.len());
    for &c_varpi in &grids.c_varpi {
        let mut total = 0.0;
        let mut per_panel = Vec::with_capacity(panels.len());
        for (pl, hat_raw) in panels.iter().zip(spot_hat) {
            let t = constants_for(pl, c_tau, c_varpi, config.c_h)?;
            let tilde = debiased_path(pl, &t, &config)?;
            total += tilde.iter().enumerate().map(|(m, b)| squared_distance(&pl.raw(b, ResponseKind::Raw), &hat_raw[m + 1])).sum::<f64>();
            per_panel.push(tilde);
        }
        scores.push(Some(total / count));
        tilde_by_varpi.push(per_panel);
    }
    let i_varpi =
        argmin_grid(&grids.c_varpi, &scores).ok_or_else(|| Error::Numerical("c_varpi losses not finite".into()))?;
    let c_varpi = grids.c_varpi[i_varpi];
    report.record("c_varpi", "mspe", &grids.c_varpi, &scores, c_varpi);

    // Stage 3: c_h, thresholded integrated beta against next panel's debiased one.
    let integrated = panels
        .iter()
        .zip(&tilde_by_varpi[i_varpi])
        .map(|(pl, tilde)| integrate(tilde, pl.k_n, pl.est.increments().delta()))
        .collect::<Result<Vec<_>>>()?;
    let mut scores = Vec::with_capacity(grids.c_h.len());
    for &c_h in &grids.c_h {
        let mut total = 0.0;
        for j in 0..panels.len() - 1 {
            let t = constants_for(&panels[j], c_tau, c_varpi, c_h)?;
            let thr = threshold(integrated[j].view(), t.h_n, config.threshold_rule)?;
            total += squared_distance(
                &panels[j].raw(&thr, ResponseKind::Raw),
                &panels[j + 1].raw(&integrated[j + 1], ResponseKind::Raw),
            );
        }
        scores.push(Some(total / (count - 1.0)));
    }
    let i_h = argmin_grid(&grids.c_h, &scores).ok_or_else(|| Error::Numerical("c_h losses not finite".into()))?;
    report.record("c_h", "mspe", &grids.c_h, &scores, grids.c_h[i_h]);
    Ok(report)
}

/// Debiased spot path (standardized units) of one calibration panel.
fn debiased_path(
    pl: &CalibrationPanel,
    t: &crate::pipeline::TuningValues,
    config: &EstimatorConfig,
) -> Result<Vec<Array1<f64>>> {
    let k = pl.k_n;
    let delta = pl.est.increments().delta();
    let fits = pl.est.spot_fits(ResponseKind::Raw, k, t.tau, t.eta, &config.solver)?;
    let omegas = pl.est.clime_windows(k, t.lambda, config.clime_tol)?;
    let mut out: Vec<Array1<f64>> = Vec::with_capacity(fits.len());
    for ((start, fit), omega) in pl.est.window_starts(k).into_iter().zip(&fits).zip(omegas.iter()) {
        let b = match omega {
            Ok(o) if fit.converged => debias_spot(
                fit.beta.view(),
                o.omega.view(),
                pl.est.design(start + k, k),
                pl.est.response(ResponseKind::Raw, start + k, k),
                k,
                delta,
                t.varpi,
            )?,
            _ => out.last().cloned().unwrap_or_else(|| fit.beta.clone()),
        };
        out.push(b);
    }
    Ok(out)
}

/// Resolves `c_η` and `c_λ` once for all calibration panels.
fn joint_eta_lambda(panels: &[CalibrationPanel], config: &EstimatorConfig, report: &mut TuningReport) -> Result<(f64, f64)> {
    let c_eta = match config.c_eta {
        Some(c) => c,
        None => {
            let mut totals = vec![Some(0.0); config.eta_grid.len()];
            for pl in panels {
                let base = TuningConstants { c_tau: config.c_tau, c_eta: 1.0, c_lambda: 1.0, c_varpi: config.c_varpi, c_h: config.c_h };
                let unit = compute_tuning_with(pl.est.n(), pl.est.p(), &base, config.varpi_form)?;
                let etas: Vec<f64> = config.eta_grid.iter().map(|c| c * unit.eta).collect();
                let problems = pl
                    .est
                    .window_starts(pl.k_n)
                    .into_iter()
                    .map(|i| {
                        HuberLassoProblem::new(pl.est.design(i, pl.k_n), pl.est.response(ResponseKind::Raw, i, pl.k_n), unit.tau, 0.0)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let scores = bic_scores(&problems, &etas, &config.solver)?;
                for (t, s) in totals.iter_mut().zip(scores) {
                    *t = match (*t, s) {
                        (Some(a), Some(b)) => Some(a + b),
                        _ => None,
                    };
                }
            }
            let i = argmin_grid(&config.eta_grid, &totals)
                .ok_or_else(|| Error::Numerical("no eta grid point produced converged fits".into()))?;
            report.record("c_eta", "bic", &config.eta_grid, &totals, config.eta_grid[i]);
            config.eta_grid[i]
        }
    };
    let c_lambda = match config.c_lambda {
        Some(c) => c,
        None => {
            let mut totals = vec![Some(0.0); config.lambda_grid.len()];
            for pl in panels {
                let n = pl.est.n() as f64;
                let unit = n.powf(-0.25) * (pl.est.p() as f64).ln().sqrt();
                let lambdas: Vec<f64> = config.lambda_grid.iter().map(|c| c * unit).collect();
                let scores = lambda_scores_cached(&pl.est, pl.k_n, &lambdas, config.clime_tol)?;
                for (t, s) in totals.iter_mut().zip(scores) {
                    *t = match (*t, s) {
                        (Some(a), Some(b)) => Some(a + b),
                        _ => None,
                    };
                }
            }
            let i = argmin_grid(&config.lambda_grid, &totals)
                .ok_or_else(|| Error::Numerical("every lambda grid point is infeasible".into()))?;
            report.record("c_lambda", "trace_loss", &config.lambda_grid, &totals, config.lambda_grid[i]);
            config.lambda_grid[i]
        }
    };
    Ok((c_eta, c_lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn argmin_prefers_smallest_value_on_ties() {
        let grid = [0.5, 0.1, 0.1, 2.0];
        let scores = [Some(1.0), Some(1.0), Some(1.0), None];
        assert_eq!(argmin_grid(&grid, &scores), Some(1));
        assert_eq!(argmin_grid(&grid, &[None, None, None, None]), None);
    }

    #[test]
    fn identity_lambda_selection() {
        let windows = vec![ClimeProblem::new(Array2::eye(3), 0.5).unwrap(); 2];
        let scores = lambda_scores(&windows, &[0.1, 0.5], 1e-9).unwrap();
        assert!((scores[0].unwrap() - 2.0 * 3.0 * 0.01).abs() < 1e-10);
        assert!((scores[1].unwrap() - 2.0 * 3.0 * 0.25).abs() < 1e-10);
        assert_eq!(select_lambda(&windows, &[0.1, 0.5], 1e-9).unwrap(), 0.1);
        assert_eq!(select_lambda(&windows, &[0.5], 1e-9).unwrap(), 0.5);
    }

    #[test]
    fn all_infeasible_lambdas_error() {
        let s = Array2::from_elem((2, 2), 1.0);
        let windows = vec![ClimeProblem::new(s, 0.1).unwrap()];
        assert!(select_lambda(&windows, &[0.05, 0.1], 1e-9).is_err());
        // λ = 1 admits Ω = 0, which is the only feasible point in this grid.
        assert_eq!(select_lambda(&windows, &[0.05, 1.0], 1e-9).unwrap(), 1.0);
    }

    #[test]
    fn singleton_and_duplicate_eta_grids() {
        let x = Array2::from_shape_fn((20, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5);
        let y = x.column(0).mapv(|v| 2.0 * v) + Array1::from_shape_fn(20, |i| 0.01 * ((i % 3) as f64 - 1.0));
        let pb = HuberLassoProblem::new(x.view(), y.view(), 1.0, 0.0).unwrap();
        let opts = SolverOptions::default();
        assert_eq!(select_eta_bic(&[pb], &[0.3], &opts).unwrap(), 0.3);
        assert_eq!(select_eta_bic(&[pb], &[0.01, 0.01], &opts).unwrap(), 0.01);
    }

    #[test]
    fn mspe_needs_two_panels() {
        let panel = LogPricePanel {
            t: vec![0.0, 0.5, 1.0],
            y: vec![0.0, 1.0, 0.5],
            x: Array2::from_shape_vec((3, 2), vec![0.0, 0.0, 1.0, 0.2, 0.4, 0.9]).unwrap(),
        };
        assert!(select_mspe_constants(&[panel], &MspeGrids::default(), &EstimatorConfig::default()).is_err());
    }

    #[test]
    fn default_grids_match_powers_of_two() {
        let g = MspeGrids::default();
        assert_eq!(g.c_tau.len(), 11);
        assert_eq!(g.c_tau[4], 16.0);
        assert_eq!(g.c_varpi[4], 1.0 / 64.0);
        assert_eq!(g.c_h[3], 0.25);
    }
}
