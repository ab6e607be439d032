//! From log-price panels to jump-truncated, standardized increments.
//!
//! Covariate increments are truncated at `v_j = 3·√BV_j·n^{−1/2}` where
//! `BV_j` is the bipower variation of covariate `j`. The dependent series is
//! truncated the same way, but only the non-robust baselines consume the
//! truncated version.

use std::f64::consts::FRAC_PI_2;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::serde_ext::fmt_f64;
use crate::{Error, Result};

/// Multiplier on `√BV·n^{−1/2}` for the jump thresholds.
pub const TRUNCATION_MULTIPLIER: f64 = 3.0;

/// Synchronized log-levels on a uniform grid over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPricePanel {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    /// `(n + 1) × p` covariate log-levels.
    pub x: Array2<f64>,
}

impl LogPricePanel {
    pub fn n(&self) -> usize {
        self.t.len().saturating_sub(1)
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.t.len();
        if len < 3 {
            return Err(Error::InvalidInput(format!("panel needs at least 3 rows, got {len}")));
        }
        if self.y.len() != len || self.x.nrows() != len {
            return Err(Error::DimensionMismatch(format!(
                "panel columns have lengths t={}, Y={}, X={}",
                len,
                self.y.len(),
                self.x.nrows()
            )));
        }
        if self.p() == 0 {
            return Err(Error::InvalidInput("panel has no covariates".into()));
        }
        if self.t.iter().chain(&self.y).chain(self.x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("panel contains missing or non-finite values".into()));
        }
        let dt = 1.0 / self.n() as f64;
        for (i, w) in self.t.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidInput(format!("time grid not increasing at row {}", i + 1)));
            }
            if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                return Err(Error::InvalidInput(format!(
                    "time grid spacing at row {} is {}, expected 1/n = {dt}",
                    i + 1,
                    w[1] - w[0]
                )));
            }
        }
        Ok(())
    }

    /// Restricts the panel to rows `start..=end`, re-basing time to `[0, 1]`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if end <= start + 1 || end > self.n() {
            return Err(Error::InvalidInput(format!("invalid panel slice {start}..={end}")));
        }
        let m = end - start;
        Ok(Self {
            t: (0..=m).map(|i| i as f64 / m as f64).collect(),
            y: self.y[start..=end].to_vec(),
            x: self.x.slice(ndarray::s![start..=end, ..]).to_owned(),
        })
    }

    /// Parses a CSV panel with header `t,Y,X_1..X_p`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
        let width = header.len();
        if width < 3 || &header[0] != "t" || &header[1] != "Y" {
            return Err(Error::Parse { line: 1, msg: "header must be t,Y,X_1,..,X_p".into() });
        }
        for (j, name) in header.iter().skip(2).enumerate() {
            if name != format!("X_{}", j + 1) {
                return Err(Error::Parse { line: 1, msg: format!("expected column X_{}, found `{name}`", j + 1) });
            }
        }
        let p = width - 2;
        let (mut t, mut y, mut xs) = (Vec::new(), Vec::new(), Vec::new());
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                csv_error(e, line)
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != width {
                return Err(Error::Parse { line, msg: format!("expected {width} fields, found {}", record.len()) });
            }
            let mut values = record.iter().map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { line, msg: format!("invalid number `{f}`") })
            });
            t.push(values.next().unwrap()?);
            y.push(values.next().unwrap()?);
            for v in values {
                xs.push(v?);
            }
        }
        let rows = t.len();
        let x = Array2::from_shape_vec((rows, p), xs).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let panel = Self { t, y, x };
        panel.validate()?;
        Ok(panel)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut line = String::from("t,Y");
        for j in 1..=self.p() {
            line.push_str(&format!(",X_{j}"));
        }
        writeln!(w, "{line}")?;
        for i in 0..self.t.len() {
            line.clear();
            line.push_str(&fmt_f64(self.t[i]));
            line.push(',');
            line.push_str(&fmt_f64(self.y[i]));
            for v in self.x.row(i) {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn csv_error(e: csv::Error, line: usize) -> Error {
    Error::Parse { line, msg: e.to_string() }
}

/// `(π/2)·Σ_{i≥2} |Δ_{i−1}|·|Δ_i|`.
pub fn bipower_variation(increments: &[f64]) -> Result<f64> {
    if increments.len() < 2 {
        return Err(Error::InvalidInput("bipower variation needs at least two increments".into()));
    }
    Ok(FRAC_PI_2 * increments.windows(2).map(|w| w[0].abs() * w[1].abs()).sum::<f64>())
}

/// Threshold `3·√BV·n^{−1/2}` for a series of `n` increments.
pub fn jump_threshold(increments: &[f64]) -> Result<f64> {
    let bv = bipower_variation(increments)?;
    Ok(TRUNCATION_MULTIPLIER * bv.sqrt() / (increments.len() as f64).sqrt())
}

/// Zeroes increments whose magnitude exceeds the bipower threshold.
pub fn truncate_series(increments: &[f64]) -> Result<(Vec<f64>, f64)> {
    let v = jump_threshold(increments)?;
    let kept = increments.iter().map(|&d| if d.abs() <= v { d } else { 0.0 }).collect();
    Ok((kept, v))
}

fn differences(levels: ArrayView1<f64>) -> Vec<f64> {
    levels.windows(2).into_iter().map(|w| w[1] - w[0]).collect()
}

/// Mean and population standard deviation of one increment column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub sd: f64,
}

impl ColumnScale {
    fn of(col: ArrayView1<f64>, name: impl FnOnce() -> String) -> Result<Self> {
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::ZeroVariance { column: name() });
        }
        Ok(Self { mean, sd })
    }

    fn apply(&self, col: &mut [f64]) {
        for v in col {
            *v = (*v - self.mean) / self.sd;
        }
    }
}

/// Which dependent series a fit used; selects the Y scale for re-scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    Raw,
    Truncated,
}

/// Standardization parameters recorded by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub y: ColumnScale,
    pub y_trunc: ColumnScale,
    pub x: Vec<ColumnScale>,
}

impl Scale {
    fn y_sd(&self, kind: ResponseKind) -> f64 {
        match kind {
            ResponseKind::Raw => self.y.sd,
            ResponseKind::Truncated => self.y_trunc.sd,
        }
    }

    /// Maps standardized-space betas back to raw units: `β_j·sd_y/sd_{x_j}`.
    pub fn rescale_beta(&self, beta: &Array1<f64>, kind: ResponseKind) -> Array1<f64> {
        let sd_y = self.y_sd(kind);
        Array1::from_shape_fn(beta.len(), |j| beta[j] * sd_y / self.x[j].sd)
    }

    /// Inverse of [`Scale::rescale_beta`].
    pub fn standardize_beta(&self, beta: &Array1<f64>, kind: ResponseKind) -> Array1<f64> {
        let sd_y = self.y_sd(kind);
        Array1::from_shape_fn(beta.len(), |j| beta[j] * self.x[j].sd / sd_y)
    }
}

/// Increments of a panel with jump truncation applied.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSet {
    /// Raw `Δ_i Y`, length `n`.
    pub dy: Vec<f64>,
    /// `Δ_i Y·1{|Δ_i Y| ≤ u_n}`.
    pub dy_trunc: Vec<f64>,
    /// `n × p` truncated covariate increments.
    pub dx_trunc: Array2<f64>,
    /// Covariate thresholds `v_j`.
    pub v: Vec<f64>,
    /// Dependent-series threshold.
    pub u_n: f64,
    /// Set once the columns have been standardized.
    pub scale: Option<Scale>,
}

impl IncrementSet {
    pub fn n(&self) -> usize {
        self.dy.len()
    }

    pub fn p(&self) -> usize {
        self.dx_trunc.ncols()
    }

    /// `Δ_n = 1/n`.
    pub fn delta(&self) -> f64 {
        1.0 / self.n() as f64
    }

    pub fn response(&self, kind: ResponseKind) -> &[f64] {
        match kind {
            ResponseKind::Raw => &self.dy,
            ResponseKind::Truncated => &self.dy_trunc,
        }
    }

    /// Builds truncated increments for both the covariates and `Y`.
    pub fn from_panel(panel: &LogPricePanel) -> Result<Self> {
        let (dx_trunc, v) = truncate_covariates(panel)?;
        let (dy_trunc, u_n) = truncate_dependent(panel)?;
        Ok(Self { dy: differences(panel.y.as_slice().into()), dy_trunc, dx_trunc, v, u_n, scale: None })
    }
}

/// Truncated covariate increments and their thresholds `v_j`.
pub fn truncate_covariates(panel: &LogPricePanel) -> Result<(Array2<f64>, Vec<f64>)> {
    panel.validate()?;
    let (n, p) = (panel.n(), panel.p());
    let mut dx = Array2::<f64>::zeros((n, p));
    let mut v = Vec::with_capacity(p);
    for j in 0..p {
        let (kept, threshold) = truncate_series(&differences(panel.x.column(j)))?;
        dx.column_mut(j).assign(&Array1::from(kept));
        v.push(threshold);
    }
    Ok((dx, v))
}

/// Truncated dependent increments and `u_n`.
pub fn truncate_dependent(panel: &LogPricePanel) -> Result<(Vec<f64>, f64)> {
    panel.validate()?;
    truncate_series(&differences(panel.y.as_slice().into()))
}

/// Centers every increment column and scales it to unit population variance.
/// Covariates use their truncated increments; `dy` and `dy_trunc` each use
/// their own statistics.
pub fn standardize(increments: &IncrementSet) -> Result<IncrementSet> {
    let mut out = increments.clone();
    let y = ColumnScale::of(ArrayView1::from(&increments.dy), || "Y".into())?;
    let y_trunc = ColumnScale::of(ArrayView1::from(&increments.dy_trunc), || "Y (truncated)".into())?;
    y.apply(&mut out.dy);
    y_trunc.apply(&mut out.dy_trunc);
    let mut x = Vec::with_capacity(increments.p());
    for (j, mut col) in out.dx_trunc.axis_iter_mut(Axis(1)).enumerate() {
        let s = ColumnScale::of(col.view(), || format!("X_{}", j + 1))?;
        col.mapv_inplace(|v| (v - s.mean) / s.sd);
        x.push(s);
    }
    out.scale = Some(Scale { y, y_trunc, x });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn panel_from_increments(dy: &[f64], dx: &[Vec<f64>]) -> LogPricePanel {
        let n = dy.len();
        let p = dx.len();
        let mut y = vec![0.0];
        for d in dy {
            y.push(y.last().unwrap() + d);
        }
        let mut x = Array2::zeros((n + 1, p));
        for j in 0..p {
            for i in 0..n {
                x[[i + 1, j]] = x[[i, j]] + dx[j][i];
            }
        }
        LogPricePanel { t: (0..=n).map(|i| i as f64 / n as f64).collect(), y, x }
    }

    #[test]
    fn bipower_on_constants_and_alternating_zeros() {
        assert_abs_diff_eq!(bipower_variation(&[1.0; 4]).unwrap(), FRAC_PI_2 * 3.0, epsilon = 1e-15);
        assert_eq!(bipower_variation(&[1.0, 0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!(bipower_variation(&[1.0]).is_err());
    }

    #[test]
    fn bipower_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut acc = 0.0;
        for i in 1..d.len() {
            acc += d[i - 1].abs() * d[i].abs();
        }
        assert_abs_diff_eq!(bipower_variation(&d).unwrap(), std::f64::consts::PI / 2.0 * acc, epsilon = 1e-12);
    }

    #[test]
    fn spike_is_truncated_and_rest_kept() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d: Vec<f64> = (0..200).map(|_| 0.01 * (1.0 + rng.random::<f64>())).collect();
        d[57] = 100.0 * 0.02;
        let panel = panel_from_increments(&d, &[d.clone()]);
        let (dx, v) = truncate_covariates(&panel).unwrap();
        assert!(v[0] < 2.0);
        for i in 0..200 {
            if i == 57 {
                assert_eq!(dx[[i, 0]], 0.0);
            } else {
                assert_abs_diff_eq!(dx[[i, 0]], d[i], epsilon = 1e-14);
            }
        }
        let (dy, _) = truncate_dependent(&panel).unwrap();
        assert_eq!(dy[57], 0.0);
        assert_abs_diff_eq!(dy[56], d[56], epsilon = 1e-14);
    }

    #[test]
    fn constant_increments_are_untouched() {
        let d = vec![0.5; 50];
        let panel = panel_from_increments(&d, &[d.clone(), d.clone()]);
        let inc = IncrementSet::from_panel(&panel).unwrap();
        for (a, b) in inc.dy_trunc.iter().zip(&d) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        for (a, b) in inc.dx_trunc.column(1).iter().zip(&d) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_point_column_standardizes_to_itself() {
        let panel = panel_from_increments(&[1.0, -1.0, 1.0, -1.0], &[vec![2.0, -2.0, 2.0, -2.0]]);
        let inc = IncrementSet::from_panel(&panel).unwrap();
        let std = standardize(&inc).unwrap();
        assert_eq!(std.dy, vec![1.0, -1.0, 1.0, -1.0]);
        assert_eq!(std.dx_trunc.column(0).to_vec(), vec![1.0, -1.0, 1.0, -1.0]);
        let s = std.scale.unwrap();
        assert_eq!(s.y, ColumnScale { mean: 0.0, sd: 1.0 });
        assert_eq!(s.x[0].sd, 2.0);
    }

    #[test]
    fn standardize_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let inc = IncrementSet::from_panel(&panel_from_increments(&d, &[e])).unwrap();
        let once = standardize(&inc).unwrap();
        let twice = standardize(&once).unwrap();
        for (a, b) in once.dy.iter().zip(&twice.dy) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        for (a, b) in once.dx_trunc.iter().zip(twice.dx_trunc.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_variance_column_is_named() {
        let panel = panel_from_increments(&[1.0, -1.0, 0.5], &[vec![0.1, 0.3, 0.2], vec![0.0, 0.0, 0.0]]);
        let inc = IncrementSet::from_panel(&panel).unwrap();
        match standardize(&inc) {
            Err(Error::ZeroVariance { column }) => assert_eq!(column, "X_2"),
            other => panic!("expected zero-variance error, got {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_and_strict_parse() {
        let panel = panel_from_increments(&[0.1, -0.2, 0.3, 0.05], &[vec![1.0, 2.0, -1.0, 0.5], vec![0.0, 0.1, 0.2, 0.3]]);
        let mut buf = Vec::new();
        panel.write_csv(&mut buf).unwrap();
        let back = LogPricePanel::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(back, panel);

        let bad = "t,Y,X_1\n0,0,0\n0.5,1,abc\n1,2,3\n";
        match LogPricePanel::from_csv_reader(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let short = "t,Y,X_1\n0,0,0\n0.5,1\n1,2,3\n";
        assert!(matches!(LogPricePanel::from_csv_reader(short.as_bytes()), Err(Error::Parse { line: 3, .. })));
        let header = "t,Y,Z\n0,0,0\n0.5,1,1\n1,2,3\n";
        assert!(matches!(LogPricePanel::from_csv_reader(header.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn panel_validation_rejects_irregular_grid() {
        let mut panel = panel_from_increments(&[0.1, 0.2, 0.3, 0.4], &[vec![0.1, 0.2, 0.3, 0.4]]);
        panel.t[2] = 0.6;
        assert!(panel.validate().is_err());
    }
}
