//! The windowed estimation pipeline.
//!
//! For every window start `i ∈ {0, k, 2k, …}` with `i + 2k ≤ n`:
//!
//! 1. fit the l1-penalized Huber regression on increments `i+1 ..= i+k`;
//! 2. estimate the precision matrix of the same window by CLIME;
//! 3. debias the fit with the next, disjoint window `i+k+1 ..= i+2k`,
//!    winsorizing the correction at `ϖ`;
//!
//! then integrate the debiased spot estimates with weight `k·Δ_n` and
//! threshold the result at `h_n`. ED-LASSO is the same procedure with
//! `τ = ϖ = ∞` on the jump-truncated response; the LASSO baseline is one
//! global least-squares LASSO over the whole sample.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use ndarray::{s, Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::clime::{solve_clime, ClimeProblem, PrecisionEstimate};
use crate::huber_lasso::{solve, HuberLassoProblem, SolverOptions, SpotBetaEstimate};
use crate::preprocessing::{standardize, IncrementSet, ResponseKind, Scale};
use crate::tuning;
use crate::{Error, Result};

pub const DEFAULT_C_TAU: f64 = 16.0;
pub const DEFAULT_C_VARPI: f64 = 1.0 / 64.0;
pub const DEFAULT_C_H: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Red,
    Ed,
    Lasso,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Red => "red",
            Method::Ed => "ed",
            Method::Lasso => "lasso",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "red" | "redlasso" => Ok(Method::Red),
            "ed" | "edlasso" => Ok(Method::Ed),
            "lasso" => Ok(Method::Lasso),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdRule {
    Hard,
    Soft,
}

/// How the winsorization level `ϖ` depends on the sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "form")]
pub enum VarpiForm {
    /// `ϖ = c_ϖ (log p)^{1/4}`.
    Practical,
    /// `ϖ = c_ϖ s_p^{2−δ} n^{δ/4} (log p)^{(1−3δ)/4}`.
    Theoretical { s_p: f64, delta: f64 },
}

/// The five tuning constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningConstants {
    #[serde(with = "crate::serde_ext")]
    pub c_tau: f64,
    pub c_eta: f64,
    #[serde(with = "crate::serde_ext")]
    pub c_lambda: f64,
    #[serde(with = "crate::serde_ext")]
    pub c_varpi: f64,
    pub c_h: f64,
}

/// Resolved tuning values for a given `(n, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningValues {
    #[serde(with = "crate::serde_ext")]
    pub tau: f64,
    pub eta: f64,
    #[serde(with = "crate::serde_ext")]
    pub lambda: f64,
    #[serde(with = "crate::serde_ext")]
    pub varpi: f64,
    pub h_n: f64,
}

/// `τ = c_τ n^{−1/4}(log p)^{−3/4}`, `η = c_η n^{−5/4}(log p)^{3/4}`,
/// `λ = c_λ n^{−1/4}(log p)^{1/2}`, `ϖ = c_ϖ (log p)^{1/4}`,
/// `h_n = c_h n^{−1/2}(log p)^{3/2}`.
pub fn compute_tuning(n: usize, p: usize, c: &TuningConstants) -> Result<TuningValues> {
    compute_tuning_with(n, p, c, VarpiForm::Practical)
}

pub fn compute_tuning_with(n: usize, p: usize, c: &TuningConstants, form: VarpiForm) -> Result<TuningValues> {
    if n < 4 || p < 2 {
        return Err(Error::InvalidInput(format!("tuning formulas need n >= 4 and p >= 2, got n = {n}, p = {p}")));
    }
    Ok(tuning_formulas(n as f64, (p as f64).ln(), c, form))
}

/// The tuning formulas with `log p` supplied directly.
pub fn tuning_formulas(n: f64, log_p: f64, c: &TuningConstants, form: VarpiForm) -> TuningValues {
    let varpi = match form {
        VarpiForm::Practical => c.c_varpi * log_p.powf(0.25),
        VarpiForm::Theoretical { s_p, delta } => {
            c.c_varpi * s_p.powf(2.0 - delta) * n.powf(delta / 4.0) * log_p.powf((1.0 - 3.0 * delta) / 4.0)
        }
    };
    TuningValues {
        tau: c.c_tau * n.powf(-0.25) * log_p.powf(-0.75),
        eta: c.c_eta * n.powf(-1.25) * log_p.powf(0.75),
        lambda: c.c_lambda * n.powf(-0.25) * log_p.sqrt(),
        varpi,
        h_n: c.c_h * n.powf(-0.5) * log_p.powf(1.5),
    }
}

/// Entrywise clip to `[−ϖ, ϖ]`.
pub fn winsorize_vector(v: ArrayView1<f64>, varpi: f64) -> Array1<f64> {
    v.mapv(|x| x.clamp(-varpi, varpi))
}

/// `β̃ = β̂ + ψ_ϖ( (1/(kΔ)) Ω̂ᵀ X_nextᵀ (Y_next − X_next β̂) )`.
pub fn debias_spot(
    beta_hat: ArrayView1<f64>,
    omega_hat: ArrayView2<f64>,
    design_next: ArrayView2<f64>,
    response_next: ArrayView1<f64>,
    k_n: usize,
    delta_n: f64,
    varpi: f64,
) -> Result<Array1<f64>> {
    let p = beta_hat.len();
    if omega_hat.dim() != (p, p) || design_next.ncols() != p || design_next.nrows() != response_next.len() {
        return Err(Error::DimensionMismatch(format!(
            "debias: beta {p}, omega {:?}, design {:?}, response {}",
            omega_hat.dim(),
            design_next.dim(),
            response_next.len()
        )));
    }
    let residual = &response_next - &design_next.dot(&beta_hat);
    let score = design_next.t().dot(&residual);
    let correction = omega_hat.t().dot(&score) / (k_n as f64 * delta_n);
    Ok(&beta_hat + &winsorize_vector(correction.view(), varpi))
}

/// Number of spot estimates entering the Riemann sum: `⌊1/(kΔ)⌋ − 1`.
pub fn integration_terms(k_n: usize, delta_n: f64) -> usize {
    let blocks = (1.0 / (k_n as f64 * delta_n) + 1e-9).floor() as usize;
    blocks.saturating_sub(1)
}

/// `Σ_{i=0}^{⌊1/(kΔ)⌋−2} β̃_{i k Δ}·kΔ`.
pub fn integrate(spot: &[Array1<f64>], k_n: usize, delta_n: f64) -> Result<Array1<f64>> {
    let terms = integration_terms(k_n, delta_n);
    if terms == 0 || spot.len() < terms {
        return Err(Error::InvalidInput(format!(
            "integration needs {terms} spot estimates, got {}",
            spot.len()
        )));
    }
    let weight = k_n as f64 * delta_n;
    let mut acc = Array1::<f64>::zeros(spot[0].len());
    for b in &spot[..terms] {
        if b.len() != acc.len() {
            return Err(Error::DimensionMismatch("spot estimates differ in length".into()));
        }
        acc.scaled_add(weight, b);
    }
    Ok(acc)
}

/// `s(x)·1{|x| ≥ h}` with hard `s(x) = x` or soft `s(x) = x − sign(x)h`.
pub fn threshold(i_beta: ArrayView1<f64>, h_n: f64, rule: ThresholdRule) -> Result<Array1<f64>> {
    if !(h_n >= 0.0) {
        return Err(Error::InvalidInput(format!("threshold level must be >= 0, got {h_n}")));
    }
    Ok(i_beta.mapv(|x| {
        if x.abs() < h_n {
            0.0
        } else {
            match rule {
                ThresholdRule::Hard => x,
                ThresholdRule::Soft => x - x.signum() * h_n,
            }
        }
    }))
}

/// Geometric grid of `points` values spanning `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (points - 1) as f64;
    (0..points).map(|i| if i + 1 == points { hi } else { lo * (ratio * i as f64).exp() }).collect()
}

pub fn default_constant_grid() -> Vec<f64> {
    geometric_grid(0.1, 10.0, 13)
}

/// All estimator settings. `None` for `c_eta`/`c_lambda` selects them from
/// their grids (BIC and trace loss respectively).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub method: Method,
    /// Window length; `⌊√n⌋` when absent.
    pub k_n: Option<usize>,
    #[serde(with = "crate::serde_ext")]
    pub c_tau: f64,
    pub c_eta: Option<f64>,
    pub c_lambda: Option<f64>,
    #[serde(with = "crate::serde_ext")]
    pub c_varpi: f64,
    pub c_h: f64,
    pub eta_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    /// Penalty of the global LASSO baseline; BIC over `lasso_grid` when absent.
    pub eta_lasso: Option<f64>,
    pub lasso_grid: Vec<f64>,
    pub threshold_rule: ThresholdRule,
    pub varpi_form: VarpiForm,
    /// Response used by the windowed fits; RED defaults to raw, ED to truncated.
    pub response: Option<ResponseKind>,
    pub standardize: bool,
    /// Time intervals `[a, b]` over which spot estimates are set to zero.
    pub zero_intervals: Vec<(f64, f64)>,
    pub solver: SolverOptions,
    pub clime_tol: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            method: Method::Red,
            k_n: None,
            c_tau: DEFAULT_C_TAU,
            c_eta: None,
            c_lambda: None,
            c_varpi: DEFAULT_C_VARPI,
            c_h: DEFAULT_C_H,
            eta_grid: default_constant_grid(),
            lambda_grid: default_constant_grid(),
            eta_lasso: None,
            lasso_grid: default_constant_grid(),
            threshold_rule: ThresholdRule::Hard,
            varpi_form: VarpiForm::Practical,
            response: None,
            standardize: true,
            zero_intervals: Vec::new(),
            solver: SolverOptions::default(),
            clime_tol: 1e-7,
        }
    }
}

impl EstimatorConfig {
    pub fn for_method(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn window_length(&self, n: usize) -> usize {
        self.k_n.unwrap_or_else(|| (n as f64).sqrt().floor() as usize)
    }

    pub fn response_kind(&self) -> ResponseKind {
        self.response.unwrap_or(match self.method {
            Method::Red => ResponseKind::Raw,
            Method::Ed | Method::Lasso => ResponseKind::Truncated,
        })
    }

    /// `(c_τ, c_ϖ)` actually used: ED forces both to infinity.
    pub fn robustification(&self) -> (f64, f64) {
        match self.method {
            Method::Ed => (f64::INFINITY, f64::INFINITY),
            _ => (self.c_tau, self.c_varpi),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let k = self.window_length(n);
        if self.method != Method::Lasso {
            if k < 2 {
                return bad(format!("window length k_n = {k} must be >= 2"));
            }
            if 2 * k > n {
                return bad(format!("window length k_n = {k} leaves no room for two windows in n = {n}"));
            }
        }
        for (name, grid) in [("eta_grid", &self.eta_grid), ("lambda_grid", &self.lambda_grid), ("lasso_grid", &self.lasso_grid)] {
            if grid.is_empty() || grid.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return bad(format!("{name} must be nonempty with positive finite entries"));
            }
        }
        if !(self.c_tau > 0.0) || !(self.c_varpi > 0.0) || !(self.c_h >= 0.0) {
            return bad("c_tau and c_varpi must be positive, c_h nonnegative".into());
        }
        for (name, v) in [("c_eta", self.c_eta), ("c_lambda", self.c_lambda), ("eta_lasso", self.eta_lasso)] {
            if let Some(v) = v {
                if !(v >= 0.0) || !v.is_finite() {
                    return bad(format!("{name} must be finite and >= 0"));
                }
            }
        }
        if self.c_lambda == Some(0.0) {
            return bad("c_lambda must be positive".into());
        }
        Ok(())
    }
}

/// Per-window record of the spot estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotRecord {
    /// Window start index `i` (increments `i+1 ..= i+k`).
    pub start: usize,
    pub t: f64,
    /// `β̂` in standardized units.
    pub beta_hat: Array1<f64>,
    /// `β̃` in standardized units.
    pub beta_tilde: Array1<f64>,
    pub debiased: bool,
    pub converged: bool,
    pub iterations: usize,
    pub kkt_gap: f64,
    /// CLIME failure message, if any.
    pub clime_error: Option<String>,
    /// Estimate replaced by the previous window's after a failure.
    pub carried_forward: bool,
    /// Zeroed by a user-supplied interval.
    pub masked: bool,
}

/// Output of one estimator run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedBeta {
    pub method: Method,
    /// Debiased integrated beta `Îβ`, raw units.
    pub debiased: Array1<f64>,
    /// Thresholded estimator `Ĩβ`, raw units.
    pub thresholded: Array1<f64>,
    /// Plain integration of the non-debiased spot fits, raw units.
    pub naive: Array1<f64>,
    pub debiased_std: Array1<f64>,
    pub thresholded_std: Array1<f64>,
    pub naive_std: Array1<f64>,
    pub tuning: TuningValues,
    pub constants: TuningConstants,
    pub k_n: usize,
    pub n: usize,
    pub spot_path: Vec<SpotRecord>,
    pub scale: Option<Scale>,
}

impl IntegratedBeta {
    pub fn failed_windows(&self) -> usize {
        self.spot_path.iter().filter(|r| r.carried_forward).count()
    }

    pub fn support(&self) -> Vec<usize> {
        self.thresholded.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect()
    }
}

type ClimeWindows = Arc<Vec<std::result::Result<PrecisionEstimate, String>>>;

/// Standardized increments plus cached per-window CLIME solutions, so that
/// several methods and tuning grids can share the expensive steps.
pub struct Estimator {
    inc: IncrementSet,
    clime_cache: Mutex<HashMap<(usize, u64), ClimeWindows>>,
}

impl Estimator {
    pub fn new(increments: &IncrementSet, standardize_columns: bool) -> Result<Self> {
        let inc = if standardize_columns && increments.scale.is_none() {
            standardize(increments)?
        } else {
            increments.clone()
        };
        if inc.n() < 4 {
            return Err(Error::InvalidInput(format!("need at least 4 increments, got {}", inc.n())));
        }
        Ok(Self { inc, clime_cache: Mutex::new(HashMap::new()) })
    }

    pub fn increments(&self) -> &IncrementSet {
        &self.inc
    }

    pub fn n(&self) -> usize {
        self.inc.n()
    }

    pub fn p(&self) -> usize {
        self.inc.p()
    }

    /// Window starts `0, k, 2k, …` with `i + 2k ≤ n`.
    pub fn window_starts(&self, k_n: usize) -> Vec<usize> {
        window_starts(self.n(), k_n)
    }

    pub fn design(&self, start: usize, k_n: usize) -> ArrayView2<'_, f64> {
        self.inc.dx_trunc.slice(s![start..start + k_n, ..])
    }

    pub fn response(&self, kind: ResponseKind, start: usize, k_n: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.inc.response(kind)[start..start + k_n])
    }

    pub fn clime_problem(&self, start: usize, k_n: usize, lambda: f64) -> Result<ClimeProblem> {
        ClimeProblem::from_window(self.design(start, k_n), self.inc.delta(), lambda)
    }

    /// Per-window CLIME estimates at `lambda`, cached.
    pub fn clime_windows(&self, k_n: usize, lambda: f64, tol: f64) -> Result<ClimeWindows> {
        let key = (k_n, lambda.to_bits());
        if let Some(hit) = self.clime_cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let mut out = Vec::new();
        for start in self.window_starts(k_n) {
            let pb = self.clime_problem(start, k_n, lambda)?;
            out.push(solve_clime(&pb, tol).map_err(|e| e.to_string()));
        }
        let out = Arc::new(out);
        self.clime_cache.lock().unwrap().insert(key, out.clone());
        Ok(out)
    }

    /// Like [`Estimator::clime_windows`] but stops at the first window that
    /// fails, returning its error. Only complete results are cached.
    pub fn clime_windows_strict(&self, k_n: usize, lambda: f64, tol: f64) -> Result<ClimeWindows> {
        let key = (k_n, lambda.to_bits());
        if let Some(hit) = self.clime_cache.lock().unwrap().get(&key) {
            if let Some(Err(msg)) = hit.iter().find(|w| w.is_err()) {
                return Err(Error::Numerical(msg.clone()));
            }
            return Ok(hit.clone());
        }
        let mut out = Vec::new();
        for start in self.window_starts(k_n) {
            let pb = self.clime_problem(start, k_n, lambda)?;
            out.push(Ok(solve_clime(&pb, tol)?));
        }
        let out = Arc::new(out);
        self.clime_cache.lock().unwrap().insert(key, out.clone());
        Ok(out)
    }

    /// Resolves `c_η` and `c_λ`, selecting them from their grids if unset.
    pub fn resolve_constants(&self, config: &EstimatorConfig) -> Result<TuningConstants> {
        let (n, p) = (self.n(), self.p());
        let k_n = config.window_length(n);
        let (c_tau, c_varpi) = config.robustification();
        let base = TuningConstants { c_tau, c_eta: 1.0, c_lambda: 1.0, c_varpi, c_h: config.c_h };
        let unit = compute_tuning_with(n, p, &base, config.varpi_form)?;
        let c_eta = match config.c_eta {
            Some(c) => c,
            None => {
                let etas: Vec<f64> = config.eta_grid.iter().map(|c| c * unit.eta).collect();
                let kind = config.response_kind();
                let problems = self
                    .window_starts(k_n)
                    .into_iter()
                    .map(|i| HuberLassoProblem::new(self.design(i, k_n), self.response(kind, i, k_n), unit.tau, 0.0))
                    .collect::<Result<Vec<_>>>()?;
                let chosen = tuning::select_eta_bic(&problems, &etas, &config.solver)?;
                config.eta_grid[etas.iter().position(|e| *e == chosen).expect("chosen from grid")]
            }
        };
        let c_lambda = match config.c_lambda {
            Some(c) => c,
            None => {
                let lambdas: Vec<f64> = config.lambda_grid.iter().map(|c| c * unit.lambda).collect();
                let chosen = tuning::select_lambda_cached(self, k_n, &lambdas, config.clime_tol)?;
                config.lambda_grid[lambdas.iter().position(|l| *l == chosen).expect("chosen from grid")]
            }
        };
        Ok(TuningConstants { c_eta, c_lambda, ..base })
    }

    /// Runs the configured method.
    pub fn run(&self, config: &EstimatorConfig) -> Result<IntegratedBeta> {
        config.validate(self.n())?;
        match config.method {
            Method::Lasso => self.run_lasso(config),
            Method::Red | Method::Ed => {
                let constants = self.resolve_constants(config)?;
                self.run_windows(config, &constants)
            }
        }
    }

    /// Runs the windowed estimator with fully resolved constants.
    pub fn run_windows(&self, config: &EstimatorConfig, constants: &TuningConstants) -> Result<IntegratedBeta> {
        let (n, p) = (self.n(), self.p());
        let k_n = config.window_length(n);
        config.validate(n)?;
        let tuning = compute_tuning_with(n, p, constants, config.varpi_form)?;
        let kind = config.response_kind();
        let delta = self.inc.delta();
        let precisions = self.clime_windows(k_n, tuning.lambda, config.clime_tol)?;
        let spots = self.spot_fits(kind, k_n, tuning.tau, tuning.eta, &config.solver)?;

        let mut records: Vec<SpotRecord> = Vec::with_capacity(spots.len());
        for (m, (start, fit)) in self.window_starts(k_n).into_iter().zip(spots).enumerate() {
            let t = start as f64 * delta;
            let masked = config.zero_intervals.iter().any(|&(a, b)| t >= a && t <= b);
            let mut record = SpotRecord {
                start,
                t,
                beta_hat: fit.beta.clone(),
                beta_tilde: fit.beta.clone(),
                debiased: false,
                converged: fit.converged,
                iterations: fit.iterations,
                kkt_gap: fit.kkt_gap,
                clime_error: None,
                carried_forward: false,
                masked,
            };
            match &precisions[m] {
                Ok(est) => {
                    record.beta_tilde = debias_spot(
                        fit.beta.view(),
                        est.omega.view(),
                        self.design(start + k_n, k_n),
                        self.response(kind, start + k_n, k_n),
                        k_n,
                        delta,
                        tuning.varpi,
                    )?;
                    record.debiased = true;
                }
                Err(msg) => record.clime_error = Some(msg.clone()),
            }
            if !record.converged || record.clime_error.is_some() {
                if let Some(prev) = records.last() {
                    record.beta_hat = prev.beta_hat.clone();
                    record.beta_tilde = prev.beta_tilde.clone();
                    record.carried_forward = true;
                }
            }
            if masked {
                record.beta_hat.fill(0.0);
                record.beta_tilde.fill(0.0);
            }
            records.push(record);
        }

        let tilde: Vec<Array1<f64>> = records.iter().map(|r| r.beta_tilde.clone()).collect();
        let hat: Vec<Array1<f64>> = records.iter().map(|r| r.beta_hat.clone()).collect();
        let debiased_std = integrate(&tilde, k_n, delta)?;
        let naive_std = integrate(&hat, k_n, delta)?;
        let thresholded_std = threshold(debiased_std.view(), tuning.h_n, config.threshold_rule)?;
        let rescale = |b: &Array1<f64>| match &self.inc.scale {
            Some(s) => s.rescale_beta(b, kind),
            None => b.clone(),
        };
        Ok(IntegratedBeta {
            method: config.method,
            debiased: rescale(&debiased_std),
            thresholded: rescale(&thresholded_std),
            naive: rescale(&naive_std),
            debiased_std,
            thresholded_std,
            naive_std,
            tuning,
            constants: *constants,
            k_n,
            n,
            spot_path: records,
            scale: self.inc.scale.clone(),
        })
    }

    /// Step 1 on every window, warm-starting from the previous window.
    pub fn spot_fits(
        &self,
        kind: ResponseKind,
        k_n: usize,
        tau: f64,
        eta: f64,
        opts: &SolverOptions,
    ) -> Result<Vec<SpotBetaEstimate>> {
        let mut init = Array1::<f64>::zeros(self.p());
        let mut out = Vec::new();
        for start in self.window_starts(k_n) {
            let pb = HuberLassoProblem::new(self.design(start, k_n), self.response(kind, start, k_n), tau, eta)?;
            let fit = solve(&pb, &init, opts)?;
            init = fit.beta.clone();
            out.push(fit);
        }
        Ok(out)
    }

    fn run_lasso(&self, config: &EstimatorConfig) -> Result<IntegratedBeta> {
        let eta_lasso = match config.eta_lasso {
            Some(e) => e,
            None => tuning::select_lasso_eta_bic(&self.inc, &config.lasso_grid, &config.solver)?,
        };
        let beta_std = lasso_fit(&self.inc, eta_lasso, &config.solver)?.beta;
        let kind = ResponseKind::Truncated;
        let raw = match &self.inc.scale {
            Some(s) => s.rescale_beta(&beta_std, kind),
            None => beta_std.clone(),
        };
        let nan_tuning = TuningValues { tau: f64::INFINITY, eta: eta_lasso, lambda: f64::NAN, varpi: f64::INFINITY, h_n: 0.0 };
        Ok(IntegratedBeta {
            method: Method::Lasso,
            debiased: raw.clone(),
            thresholded: raw.clone(),
            naive: raw,
            debiased_std: beta_std.clone(),
            thresholded_std: beta_std.clone(),
            naive_std: beta_std,
            tuning: nan_tuning,
            constants: TuningConstants {
                c_tau: f64::INFINITY,
                c_eta: eta_lasso,
                c_lambda: f64::NAN,
                c_varpi: f64::INFINITY,
                c_h: 0.0,
            },
            k_n: self.n(),
            n: self.n(),
            spot_path: Vec::new(),
            scale: self.inc.scale.clone(),
        })
    }
}

pub fn window_starts(n: usize, k_n: usize) -> Vec<usize> {
    if k_n == 0 {
        return Vec::new();
    }
    (0..).map(|m| m * k_n).take_while(|i| i + 2 * k_n <= n).collect()
}

/// Global least-squares LASSO `Σ(ŷ − x̂ᵀβ)² + η_L‖β‖₁` on the increments as
/// given (truncated response), in the increments' own units.
pub fn lasso_fit(inc: &IncrementSet, eta_lasso: f64, opts: &SolverOptions) -> Result<SpotBetaEstimate> {
    let n = inc.n();
    // (1/n)Σ r²/2 + η'‖β‖₁ has the same minimizer when η' = η_L/(2n).
    let pb = HuberLassoProblem::new(
        inc.dx_trunc.view(),
        ArrayView1::from(&inc.dy_trunc),
        f64::INFINITY,
        eta_lasso / (2.0 * n as f64),
    )?;
    solve(&pb, &Array1::zeros(inc.p()), opts)
}

/// RED-LASSO (or ED-LASSO, per `config.method`) on raw increments.
pub fn run_red_lasso(increments: &IncrementSet, config: &EstimatorConfig) -> Result<IntegratedBeta> {
    Estimator::new(increments, config.standardize)?.run(config)
}

/// Global LASSO baseline at a fixed penalty; returns raw-unit betas when the
/// increments carry a scale.
pub fn run_lasso_baseline(increments: &IncrementSet, eta_lasso: f64) -> Result<Array1<f64>> {
    let fit = lasso_fit(increments, eta_lasso, &SolverOptions::default())?;
    Ok(match &increments.scale {
        Some(s) => s.rescale_beta(&fit.beta, ResponseKind::Truncated),
        None => fit.beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    fn constants(c_tau: f64, c_h: f64) -> TuningConstants {
        TuningConstants { c_tau, c_eta: 1.0, c_lambda: 1.0, c_varpi: DEFAULT_C_VARPI, c_h }
    }

    #[test]
    fn tuning_at_unit_log_p() {
        let t = tuning_formulas(10_000.0, 1.0, &constants(16.0, 0.25), VarpiForm::Practical);
        assert_abs_diff_eq!(t.tau, 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(t.h_n, 0.0025, epsilon = 1e-15);
        assert_abs_diff_eq!(t.varpi, 1.0 / 64.0, epsilon = 1e-15);
        assert!(compute_tuning(3, 10, &constants(16.0, 0.25)).is_err());
        assert!(compute_tuning(100, 1, &constants(16.0, 0.25)).is_err());
    }

    #[test]
    fn theoretical_varpi_at_exact_sparsity() {
        let c = constants(16.0, 0.25);
        let t = tuning_formulas(1000.0, 2.0, &c, VarpiForm::Theoretical { s_p: 3.0, delta: 0.0 });
        assert_abs_diff_eq!(t.varpi, DEFAULT_C_VARPI * 9.0 * 2f64.powf(0.25), epsilon = 1e-14);
    }

    #[test]
    fn winsorize_examples() {
        let v = Array1::from(vec![1.0, 5.0, -5.0]);
        assert_eq!(winsorize_vector(v.view(), 2.0).to_vec(), vec![1.0, 2.0, -2.0]);
        assert_eq!(winsorize_vector(v.view(), f64::INFINITY), v);
        let once = winsorize_vector(v.view(), 0.5);
        assert_eq!(winsorize_vector(once.view(), 0.5), once);
    }

    #[test]
    fn zero_residual_means_no_correction() {
        let x = Array2::from_shape_vec((3, 2), vec![1.0, 0.5, -0.3, 2.0, 0.7, 0.1]).unwrap();
        let beta = Array1::from(vec![0.4, -1.2]);
        let y = x.dot(&beta);
        let omega = Array2::from_shape_vec((2, 2), vec![3.0, 1.0, -2.0, 0.5]).unwrap();
        let out = debias_spot(beta.view(), omega.view(), x.view(), y.view(), 3, 0.01, 1.0).unwrap();
        assert_eq!(out, beta);
        assert!(debias_spot(beta.view(), omega.view(), x.view(), y.slice(s![..2]), 3, 0.01, 1.0).is_err());
    }

    #[test]
    fn integration_index_arithmetic() {
        assert_eq!(integration_terms(10, 0.01), 9);
        let spot = vec![Array1::from(vec![2.0, -1.0]); 12];
        let out = integrate(&spot, 10, 0.01).unwrap();
        assert_abs_diff_eq!(out[0], 1.8, epsilon = 1e-14);
        assert_abs_diff_eq!(out[1], -0.9, epsilon = 1e-14);
        assert!(integrate(&spot[..8], 10, 0.01).is_err());
    }

    #[test]
    fn threshold_examples() {
        let v = Array1::from(vec![0.3, 0.7, -0.9]);
        assert_eq!(threshold(v.view(), 0.5, ThresholdRule::Hard).unwrap().to_vec(), vec![0.0, 0.7, -0.9]);
        let soft = threshold(v.view(), 0.5, ThresholdRule::Soft).unwrap();
        assert_eq!(soft[0], 0.0);
        assert_abs_diff_eq!(soft[1], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(soft[2], -0.4, epsilon = 1e-15);
        assert!(threshold(v.view(), 1.0, ThresholdRule::Hard).unwrap().iter().all(|&x| x == 0.0));
        assert!(threshold(v.view(), -1.0, ThresholdRule::Hard).is_err());
    }

    #[test]
    fn window_schedule() {
        assert_eq!(window_starts(100, 10), (0..9).map(|m| m * 10).collect::<Vec<_>>());
        assert_eq!(window_starts(105, 10).len(), 9);
        assert_eq!(window_starts(19, 10).len(), 0);
        assert_eq!(window_starts(2000, 44).len(), integration_terms(44, 1.0 / 2000.0));
    }

    #[test]
    fn grid_spans_interval() {
        let g = default_constant_grid();
        assert_eq!(g.len(), 13);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[12], 10.0);
        assert_abs_diff_eq!(g[6], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn config_checks() {
        let cfg = EstimatorConfig::default();
        assert!(cfg.validate(100).is_ok());
        assert!(EstimatorConfig { k_n: Some(1), ..cfg.clone() }.validate(100).is_err());
        assert!(EstimatorConfig { k_n: Some(51), ..cfg.clone() }.validate(100).is_err());
        assert!(EstimatorConfig { eta_grid: vec![], ..cfg.clone() }.validate(100).is_err());
        assert_eq!(EstimatorConfig::for_method(Method::Ed).robustification(), (f64::INFINITY, f64::INFINITY));
        assert_eq!("RED-LASSO".parse::<Method>().unwrap(), Method::Red);
    }
}
