//! Error metrics, R², and the multi-seed simulation benchmark.

use std::io::Write;

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pipeline::{Estimator, EstimatorConfig, IntegratedBeta, Method};
use crate::preprocessing::IncrementSet;
use crate::serde_ext::fmt_f64;
use crate::simulator::{simulate_paths, SimConfig};
use crate::{Error, Result};

/// Max, ℓ1 and ℓ2 norms of an estimation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub max: f64,
    pub l1: f64,
    pub l2: f64,
}

pub fn beta_errors(estimate: ArrayView1<f64>, truth: ArrayView1<f64>) -> Result<ErrorNorms> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has length {}, truth {}",
            estimate.len(),
            truth.len()
        )));
    }
    let mut e = ErrorNorms { max: 0.0, l1: 0.0, l2: 0.0 };
    for (a, b) in estimate.iter().zip(truth) {
        let d = (a - b).abs();
        e.max = e.max.max(d);
        e.l1 += d;
        e.l2 += d * d;
    }
    e.l2 = e.l2.sqrt();
    Ok(e)
}

/// `1 − Σ(Δ_iY − Δ_iX̂ᵀβ)² / Σ(Δ_iY − mean)²` over raw (unstandardized)
/// increments. `holdout` only labels whether `beta` came from an earlier period.
pub fn r_squared(increments: &IncrementSet, beta: ArrayView1<f64>, holdout: bool) -> Result<f64> {
    let _ = holdout;
    if increments.scale.is_some() {
        return Err(Error::InvalidInput("R² needs raw-unit increments, got standardized ones".into()));
    }
    if beta.len() != increments.p() {
        return Err(Error::DimensionMismatch(format!("beta has length {}, panel has p = {}", beta.len(), increments.p())));
    }
    let dy = &increments.dy;
    let mean = dy.iter().sum::<f64>() / dy.len() as f64;
    let fitted = increments.dx_trunc.dot(&beta);
    let ssr: f64 = dy.iter().zip(&fitted).map(|(y, f)| (y - f).powi(2)).sum();
    let sst: f64 = dy.iter().map(|y| (y - mean).powi(2)).sum();
    if !(sst > 0.0) {
        return Err(Error::InvalidInput("zero total sum of squares in R²".into()));
    }
    Ok(1.0 - ssr / sst)
}

/// Tail regime of the simulated jumps and `ν` multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Student-t with 2 degrees of freedom.
    Heavy,
    /// Gaussian limit, `df = ∞`.
    Subgaussian,
}

impl Regime {
    pub fn df(self) -> f64 {
        match self {
            Regime::Heavy => 2.0,
            Regime::Subgaussian => f64::INFINITY,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Heavy => "heavy",
            Regime::Subgaussian => "subgaussian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    /// Template; `n`, `df` and `seed` are set per task.
    pub sim: SimConfig,
    pub n_values: Vec<usize>,
    pub replications: usize,
    /// Seed of replication `r` is `base_seed + r`.
    pub base_seed: u64,
    pub regimes: Vec<Regime>,
    pub methods: Vec<Method>,
    /// Estimator settings shared by all methods; `method` is overridden.
    pub estimator: EstimatorConfig,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            sim: SimConfig::with_dimension(50),
            n_values: vec![500, 1000, 2000],
            replications: 50,
            base_seed: 0,
            regimes: vec![Regime::Heavy, Regime::Subgaussian],
            methods: vec![Method::Red, Method::Ed, Method::Lasso],
            estimator: EstimatorConfig::default(),
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.replications == 0 {
            return bad("replications must be >= 1".into());
        }
        if self.n_values.is_empty() || self.regimes.is_empty() || self.methods.is_empty() {
            return bad("n_values, regimes and methods must be nonempty".into());
        }
        for &n in &self.n_values {
            if n == 0 || !self.sim.n_all.is_multiple_of(n) {
                return bad(format!("n = {n} must divide n_all = {}", self.sim.n_all));
            }
        }
        Ok(())
    }

    pub fn sim_config(&self, regime: Regime, n: usize, seed: u64) -> SimConfig {
        SimConfig { n, df: regime.df(), seed, ..self.sim.clone() }
    }
}

/// Outcome of one method on one simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub method: Method,
    pub regime: Regime,
    pub n: usize,
    pub seed: u64,
    /// Errors of the final (thresholded) estimate.
    pub errors: Option<ErrorNorms>,
    /// Errors of the debiased, unthresholded integral.
    pub debiased: Option<ErrorNorms>,
    /// Errors of plain integration without debiasing.
    pub naive: Option<ErrorNorms>,
    pub failed_windows: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub regime: Regime,
    pub n: usize,
    pub completed: usize,
    pub failed: usize,
    pub mean: ErrorNorms,
    pub std_error: ErrorNorms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub spec: BenchmarkSpec,
    pub summaries: Vec<CellSummary>,
    pub records: Vec<SeedRecord>,
}

/// Sample mean and standard error `sd/√m` (zero for a single value).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

fn summarize(records: &[&SeedRecord]) -> (usize, usize, ErrorNorms, ErrorNorms) {
    let ok: Vec<ErrorNorms> = records.iter().filter_map(|r| r.errors).collect();
    let pick = |f: fn(&ErrorNorms) -> f64| mean_and_se(&ok.iter().map(f).collect::<Vec<_>>());
    let (mx, smx) = pick(|e| e.max);
    let (l1, sl1) = pick(|e| e.l1);
    let (l2, sl2) = pick(|e| e.l2);
    (
        ok.len(),
        records.len() - ok.len(),
        ErrorNorms { max: mx, l1, l2 },
        ErrorNorms { max: smx, l1: sl1, l2: sl2 },
    )
}

/// Simulates one panel and scores every requested method on it.
pub fn run_replication(spec: &BenchmarkSpec, regime: Regime, n: usize, seed: u64) -> Vec<SeedRecord> {
    let failed = |method: Method, msg: String| SeedRecord {
        method,
        regime,
        n,
        seed,
        errors: None,
        debiased: None,
        naive: None,
        failed_windows: 0,
        error: Some(msg),
    };
    let prepared = simulate_paths(&spec.sim_config(regime, n, seed)).and_then(|sim| {
        let inc = IncrementSet::from_panel(&sim.panel)?;
        let est = Estimator::new(&inc, spec.estimator.standardize)?;
        Ok((sim, est))
    });
    let (sim, est) = match prepared {
        Ok(v) => v,
        Err(e) => return spec.methods.iter().map(|m| failed(*m, e.to_string())).collect(),
    };
    let truth = sim.true_integrated_beta.view();
    spec.methods
        .iter()
        .map(|&method| {
            let config = EstimatorConfig { method, ..spec.estimator.clone() };
            let scored = est.run(&config).and_then(|fit: IntegratedBeta| {
                Ok((
                    beta_errors(fit.thresholded.view(), truth)?,
                    beta_errors(fit.debiased.view(), truth)?,
                    beta_errors(fit.naive.view(), truth)?,
                    fit.failed_windows(),
                ))
            });
            match scored {
                Ok((e, d, nv, fw)) => SeedRecord {
                    method,
                    regime,
                    n,
                    seed,
                    errors: Some(e),
                    debiased: Some(d),
                    naive: Some(nv),
                    failed_windows: fw,
                    error: None,
                },
                Err(e) => failed(method, e.to_string()),
            }
        })
        .collect()
}

/// Runs every `(regime, n, replication)` task, in parallel over tasks, and
/// aggregates per `(method, regime, n)`. Output order is fixed by the spec.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkResult> {
    spec.validate()?;
    let mut tasks = Vec::new();
    for &regime in &spec.regimes {
        for &n in &spec.n_values {
            for r in 0..spec.replications {
                tasks.push((regime, n, spec.base_seed + r as u64));
            }
        }
    }
    let per_task: Vec<Vec<SeedRecord>> =
        tasks.par_iter().map(|&(regime, n, seed)| run_replication(spec, regime, n, seed)).collect();
    let records: Vec<SeedRecord> = per_task.into_iter().flatten().collect();

    let mut summaries = Vec::new();
    for &method in &spec.methods {
        for &regime in &spec.regimes {
            for &n in &spec.n_values {
                let cell: Vec<&SeedRecord> =
                    records.iter().filter(|r| r.method == method && r.regime == regime && r.n == n).collect();
                let (completed, failed, mean, std_error) = summarize(&cell);
                summaries.push(CellSummary { method, regime, n, completed, failed, mean, std_error });
            }
        }
    }
    Ok(BenchmarkResult { spec: spec.clone(), summaries, records })
}

impl BenchmarkResult {
    pub fn summary(&self, method: Method, regime: Regime, n: usize) -> Option<&CellSummary> {
        self.summaries.iter().find(|s| s.method == method && s.regime == regime && s.n == n)
    }

    /// Per-seed records of one cell, in seed order.
    pub fn cell(&self, method: Method, regime: Regime, n: usize) -> Vec<&SeedRecord> {
        let mut v: Vec<&SeedRecord> =
            self.records.iter().filter(|r| r.method == method && r.regime == regime && r.n == n).collect();
        v.sort_by_key(|r| r.seed);
        v
    }

    /// Flat CSV `method,regime,n,seed,max,l1,l2`; failed seeds carry `NaN`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "method,regime,n,seed,max,l1,l2")?;
        for r in &self.records {
            let e = r.errors.unwrap_or(ErrorNorms { max: f64::NAN, l1: f64::NAN, l2: f64::NAN });
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.method.name(),
                r.regime.name(),
                r.n,
                r.seed,
                fmt_f64(e.max),
                fmt_f64(e.l1),
                fmt_f64(e.l2)
            )?;
        }
        Ok(())
    }
}

/// Mean and standard error of the paired differences `a − b`.
pub fn paired_difference(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_and_se(&d)
}

/// Convenience: errors of a raw-unit estimate vector.
pub fn errors_of(estimate: &Array1<f64>, truth: &Array1<f64>) -> Result<ErrorNorms> {
    beta_errors(estimate.view(), truth.view())
}
