//! Synthetic sample paths of the regression jump-diffusion
//!
//! ```text
//! dY = βᵀ(t) dXᶜ + ν(t) dW + Jʸ dΛʸ,   dX = σ(t) dB + J dΛ,
//! dβ = μ_β dt + ξ(t) dW_β               (first ⌊s_p⌋ coordinates only)
//! ```
//!
//! with `σ(t)σ(t)ᵀ = u(t)·[ρ^{|i−j|}]`, Ornstein-Uhlenbeck factors `u`, `ν'`
//! and `ξ`, and Student-t distributed jump sizes. Everything is discretized
//! with Euler-Maruyama on a uniform grid of `n_all` steps over `[0, 1]` and
//! the log-levels are then subsampled to the observation grid of `n` steps.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::preprocessing::LogPricePanel;
use crate::{Error, Result};

/// Floor applied to volatility-like OU paths before taking square roots.
pub const VOL_FLOOR: f64 = 1e-6;

/// Parameters of `dx = mean_reversion·(long_run_mean − x) dt + vol dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUParams {
    pub mean_reversion: f64,
    pub long_run_mean: f64,
    pub vol: f64,
    pub init: f64,
}

impl OUParams {
    pub const fn new(mean_reversion: f64, long_run_mean: f64, vol: f64, init: f64) -> Self {
        Self { mean_reversion, long_run_mean, vol, init }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_reversion > 0.0) || !self.mean_reversion.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "OU mean_reversion must be positive, got {}",
                self.mean_reversion
            )));
        }
        if !(self.vol >= 0.0) || !self.vol.is_finite() {
            return Err(Error::InvalidConfig(format!("OU vol must be >= 0, got {}", self.vol)));
        }
        if !self.long_run_mean.is_finite() || !self.init.is_finite() {
            return Err(Error::InvalidConfig("OU level parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Simulation design. Defaults follow the heavy-tailed design with `p = 100`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub p: usize,
    pub n_all: usize,
    pub n: usize,
    pub s_p: f64,
    /// Degrees of freedom of the t-draws; `inf` means standard normal.
    #[serde(with = "crate::serde_ext")]
    pub df: f64,
    pub jump_intensity_x: f64,
    pub jump_intensity_y: f64,
    pub jump_scale: f64,
    pub rho: f64,
    pub seed: u64,
    /// Drift of the active beta coordinates.
    pub beta_drift: f64,
    /// Initial value of the active beta coordinates.
    pub beta_init: f64,
    /// Residual-volatility base process ν'.
    pub nu_prime: OUParams,
    /// Covariate variance level u.
    pub u: OUParams,
    /// Beta diffusion coefficient ξ.
    pub xi: OUParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        let p = 100;
        Self {
            p,
            n_all: 4000,
            n: 1000,
            s_p: (p as f64).ln(),
            df: 2.0,
            jump_intensity_x: 20.0,
            jump_intensity_y: 10.0,
            jump_scale: 0.1,
            rho: 0.8,
            seed: 0,
            beta_drift: 0.1,
            beta_init: 1.0,
            nu_prime: OUParams::new(3.0, 0.4, 0.12, 0.5),
            u: OUParams::new(5.0, 0.45, 0.2, 1.0),
            xi: OUParams::new(3.0, 0.3, 0.1, 0.15),
        }
    }
}

impl SimConfig {
    /// Default design for `p` covariates with `s_p = log p`.
    pub fn with_dimension(p: usize) -> Self {
        Self { p, s_p: (p as f64).ln(), ..Self::default() }
    }

    /// Number of nonzero beta coordinates, `⌊s_p⌋` capped at `p`.
    pub fn active(&self) -> usize {
        (self.s_p.max(0.0).floor() as usize).min(self.p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.p == 0 {
            return bad("p must be >= 1".into());
        }
        if self.n == 0 || self.n_all == 0 || !self.n_all.is_multiple_of(self.n) {
            return bad(format!("n = {} must divide n_all = {}", self.n, self.n_all));
        }
        if !(self.df >= 2.0) {
            return bad(format!("df must be >= 2 or inf, got {}", self.df));
        }
        if !(self.jump_intensity_x >= 0.0 && self.jump_intensity_y >= 0.0)
            || !self.jump_intensity_x.is_finite()
            || !self.jump_intensity_y.is_finite()
        {
            return bad("jump intensities must be finite and >= 0".into());
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if !self.s_p.is_finite() || self.s_p < 0.0 {
            return bad(format!("s_p must be finite and >= 0, got {}", self.s_p));
        }
        if !self.jump_scale.is_finite() || !self.beta_drift.is_finite() || !self.beta_init.is_finite() {
            return bad("jump_scale, beta_drift and beta_init must be finite".into());
        }
        self.nu_prime.validate()?;
        self.u.validate()?;
        self.xi.validate()
    }
}

/// Jump arrival record, in generation-grid step indices (1-based: step `l`
/// covers `((l−1)h, lh]`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    /// Per covariate: (step, size).
    pub x: Vec<Vec<(usize, f64)>>,
    pub y: Vec<(usize, f64)>,
}

impl JumpRecord {
    /// Maps a generation step to the 1-based observation increment holding it.
    pub fn observation_index(step: usize, n_all: usize, n: usize) -> usize {
        let stride = n_all / n;
        step.div_ceil(stride)
    }
}

/// A simulated sample with ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub config: SimConfig,
    pub panel: LogPricePanel,
    /// β(t) on the generation grid, `(n_all + 1) × p`.
    pub true_spot_beta: Array2<f64>,
    /// Trapezoidal ∫₀¹ β(t) dt on the generation grid.
    pub true_integrated_beta: Array1<f64>,
    pub jumps: JumpRecord,
}

/// Euler-Maruyama path of an OU process on `grid`, one standard-normal
/// innovation per step. Returns `grid.len()` values starting at `init`.
pub fn simulate_ou(params: &OUParams, grid: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    params.validate()?;
    if grid.len() < 2 {
        return Err(Error::InvalidInput("OU grid needs at least two points".into()));
    }
    if noise.len() != grid.len() - 1 {
        return Err(Error::DimensionMismatch(format!(
            "OU noise has {} entries for {} steps",
            noise.len(),
            grid.len() - 1
        )));
    }
    let h = grid[1] - grid[0];
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("OU grid step must be positive, got {h}")));
    }
    let tol = 1e-9 * h.max(1.0);
    if grid.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > tol) {
        return Err(Error::InvalidInput("OU grid is not uniform".into()));
    }
    Ok(ou_recurrence(params, h, noise))
}

fn ou_recurrence(params: &OUParams, h: f64, noise: &[f64]) -> Vec<f64> {
    let sqrt_h = h.sqrt();
    let mut path = Vec::with_capacity(noise.len() + 1);
    let mut x = params.init;
    path.push(x);
    for &z in noise {
        x += params.mean_reversion * (params.long_run_mean - x) * h + params.vol * sqrt_h * z;
        path.push(x);
    }
    path
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let p = a.nrows();
    if a.ncols() != p {
        return Err(Error::DimensionMismatch("cholesky needs a square matrix".into()));
    }
    let mut l = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(sum > 0.0) {
                    return Err(Error::Numerical(format!(
                        "matrix is not positive definite (pivot {i} = {sum})"
                    )));
                }
                l[[i, i]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Cholesky factors of `Σ(t) = u(t)·T`, `T_ij = ρ^{|i−j|}`. Since `T` is
/// fixed, `L(t) = √u(t)·chol(T)`.
#[derive(Debug, Clone)]
pub struct CovariancePath {
    pub chol_base: Array2<f64>,
    pub sqrt_u: Vec<f64>,
}

impl CovariancePath {
    pub fn factor(&self, step: usize) -> Array2<f64> {
        &self.chol_base * self.sqrt_u[step]
    }

    pub fn len(&self) -> usize {
        self.sqrt_u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sqrt_u.is_empty()
    }
}

pub fn toeplitz_correlation(p: usize, rho: f64) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(i, j)| rho.powi(i.abs_diff(j) as i32))
}

pub fn simulate_covariance_path(config: &SimConfig, u_path: &[f64]) -> Result<CovariancePath> {
    let chol_base = cholesky(&toeplitz_correlation(config.p, config.rho))?;
    let sqrt_u = u_path
        .iter()
        .enumerate()
        .map(|(l, &u)| {
            let clamped = if u.is_nan() { u } else { u.max(VOL_FLOOR) };
            if clamped > 0.0 && clamped.is_finite() {
                Ok(clamped.sqrt())
            } else {
                Err(Error::Numerical(format!("u(t) at step {l} is not a valid variance: {u}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CovariancePath { chol_base, sqrt_u })
}

// Independent sub-streams of the master generator.
const STREAM_B: u64 = 1;
const STREAM_W: u64 = 2;
const STREAM_W_BETA: u64 = 3;
const STREAM_JUMPS_X: u64 = 4;
const STREAM_JUMPS_Y: u64 = 5;
const STREAM_T_NU: u64 = 6;
const STREAM_W_NU: u64 = 7;
const STREAM_W_U: u64 = 8;
const STREAM_W_XI: u64 = 9;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normals(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Student-t draw, or standard normal when `df` is infinite.
fn t_draw(rng: &mut ChaCha8Rng, t: Option<&StudentT<f64>>) -> f64 {
    match t {
        Some(d) => d.sample(rng),
        None => rng.sample(StandardNormal),
    }
}

/// Compound-Poisson arrivals on `[0, 1]` mapped to 1-based steps.
fn compound_poisson(
    rng: &mut ChaCha8Rng,
    intensity: f64,
    n_all: usize,
    scale: f64,
    t: Option<&StudentT<f64>>,
) -> Vec<(usize, f64)> {
    let mut jumps = Vec::new();
    if intensity <= 0.0 {
        return jumps;
    }
    // Exponential inter-arrival times give the Poisson process directly.
    let mut time = 0.0;
    loop {
        let gap: f64 = rng.sample(Exp1);
        time += gap / intensity;
        if time > 1.0 {
            break;
        }
        let step = ((time * n_all as f64).ceil() as usize).clamp(1, n_all);
        jumps.push((step, scale * t_draw(rng, t)));
    }
    jumps
}

/// Generates one replication of the regression jump-diffusion.
pub fn simulate_paths(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let SimConfig { p, n_all, n, seed, .. } = *config;
    let h = 1.0 / n_all as f64;
    let sqrt_h = h.sqrt();
    let active = config.active();
    let t_dist = if config.df.is_finite() {
        Some(StudentT::new(config.df).map_err(|e| Error::InvalidConfig(e.to_string()))?)
    } else {
        None
    };

    let nu_prime = ou_recurrence(&config.nu_prime, h, &normals(&mut stream(seed, STREAM_W_NU), n_all));
    let u_path = ou_recurrence(&config.u, h, &normals(&mut stream(seed, STREAM_W_U), n_all));
    let xi = ou_recurrence(&config.xi, h, &normals(&mut stream(seed, STREAM_W_XI), n_all));
    let cov = simulate_covariance_path(config, &u_path)?;

    let mut rng_jx = stream(seed, STREAM_JUMPS_X);
    let jumps_x: Vec<Vec<(usize, f64)>> = (0..p)
        .map(|_| {
            compound_poisson(&mut rng_jx, config.jump_intensity_x, n_all, config.jump_scale, t_dist.as_ref())
        })
        .collect();
    let jumps_y = compound_poisson(
        &mut stream(seed, STREAM_JUMPS_Y),
        config.jump_intensity_y,
        n_all,
        config.jump_scale,
        t_dist.as_ref(),
    );

    // Jump contributions per step.
    let mut jump_x = Array2::<f64>::zeros((n_all + 1, p));
    for (j, list) in jumps_x.iter().enumerate() {
        for &(step, size) in list {
            jump_x[[step, j]] += size;
        }
    }
    let mut jump_y = vec![0.0; n_all + 1];
    for &(step, size) in &jumps_y {
        jump_y[step] += size;
    }

    let mut rng_b = stream(seed, STREAM_B);
    let mut rng_w = stream(seed, STREAM_W);
    let mut rng_wb = stream(seed, STREAM_W_BETA);
    let mut rng_t = stream(seed, STREAM_T_NU);

    let mut beta = Array2::<f64>::zeros((n_all + 1, p));
    for j in 0..active {
        beta[[0, j]] = config.beta_init;
    }
    let mut x_level = Array2::<f64>::zeros((n_all + 1, p));
    let mut y_level = vec![0.0; n_all + 1];

    let chol = &cov.chol_base;
    let mut z = vec![0.0; p];
    let mut dxc = vec![0.0; p];
    for l in 1..=n_all {
        let prev = l - 1;
        for zi in z.iter_mut() {
            *zi = rng_b.sample(StandardNormal);
        }
        // dXᶜ = √u · L · z · √h, L lower triangular.
        let scale = cov.sqrt_u[prev] * sqrt_h;
        for i in 0..p {
            let mut acc = 0.0;
            for k in 0..=i {
                acc += chol[[i, k]] * z[k];
            }
            dxc[i] = scale * acc;
        }
        let nu = (1.0 + 0.5 * t_draw(&mut rng_t, t_dist.as_ref()).abs())
            * nu_prime[prev].max(VOL_FLOOR);
        let dz = nu * sqrt_h * rng_w.sample::<f64, _>(StandardNormal);

        let mut dy = dz + jump_y[l];
        for j in 0..active {
            dy += beta[[prev, j]] * dxc[j];
        }
        y_level[l] = y_level[prev] + dy;
        for j in 0..p {
            x_level[[l, j]] = x_level[[prev, j]] + dxc[j] + jump_x[[l, j]];
        }
        for j in 0..active {
            let dw: f64 = rng_wb.sample(StandardNormal);
            beta[[l, j]] = beta[[prev, j]] + config.beta_drift * h + xi[prev] * sqrt_h * dw;
        }
    }

    let true_integrated_beta = Array1::from_shape_fn(p, |j| {
        let col = beta.column(j);
        h * (col.sum() - 0.5 * (col[0] + col[n_all]))
    });

    let stride = n_all / n;
    let panel = LogPricePanel {
        t: (0..=n).map(|i| i as f64 / n as f64).collect(),
        y: (0..=n).map(|i| y_level[i * stride]).collect(),
        x: Array2::from_shape_fn((n + 1, p), |(i, j)| x_level[[i * stride, j]]),
    };

    Ok(SimOutput {
        config: config.clone(),
        panel,
        true_spot_beta: beta,
        true_integrated_beta,
        jumps: JumpRecord { x: jumps_x, y: jumps_y },
    })
}
