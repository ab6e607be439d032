//! Command-line front end: `simulate`, `estimate`, `tune`, `bench`.
//!
//! Settings resolve as flag > config file > default. A config file is either
//! a JSON object or flat `key = value` lines whose values are JSON (bare
//! words are taken as strings); dotted keys address nested fields, e.g.
//! `solver.tol = 1e-8`.
//!
//! Exit codes: 0 ok, 2 usage or configuration error, 3 data error,
//! 4 numerical failure.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::evaluation::{run_benchmark, BenchmarkSpec};
use crate::pipeline::{Estimator, EstimatorConfig};
use crate::preprocessing::{IncrementSet, LogPricePanel};
use crate::serde_ext::fmt_f64;
use crate::simulator::{simulate_paths, SimConfig};
use crate::tuning::{select_mspe_constants, MspeGrids};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub const THREADS_ENV: &str = "BETAFLOW_THREADS";

#[derive(Debug, Parser)]
#[command(name = "betaflow", version, about = "Robust high-dimensional integrated beta estimation")]
pub struct Cli {
    /// Worker threads; 0 picks automatically. Falls back to $BETAFLOW_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a jump-diffusion panel with known betas.
    Simulate(SimulateArgs),
    /// Estimate the integrated beta of one panel.
    Estimate(EstimateArgs),
    /// Select tuning constants on a sequence of calibration panels.
    Tune(TuneArgs),
    /// Run the multi-seed simulation benchmark.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_all: Option<usize>,
    /// Degrees of freedom, or `inf`.
    #[arg(long)]
    pub df: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// red, ed or lasso.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub k_n: Option<usize>,
    #[arg(long)]
    pub c_tau: Option<String>,
    #[arg(long)]
    pub c_eta: Option<f64>,
    #[arg(long)]
    pub c_lambda: Option<f64>,
    #[arg(long)]
    pub c_varpi: Option<String>,
    #[arg(long)]
    pub c_h: Option<f64>,
    #[arg(long)]
    pub eta_lasso: Option<f64>,
    /// hard or soft.
    #[arg(long)]
    pub threshold: Option<String>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Calibration panels in chronological order.
    #[arg(long = "panel", required = true, num_args = 1..)]
    pub panels: Vec<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub p: Option<usize>,
}

/// Settings of the `tune` subcommand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneConfig {
    pub estimator: EstimatorConfig,
    pub grids: MspeGrids,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Written as `manifest.json` into every output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Value,
    pub inputs: Vec<InputDigest>,
    pub artifacts: Vec<String>,
    pub version: String,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, kind: "usage", message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::InvalidConfig(_) => (EXIT_USAGE, "config"),
            e if e.is_data_error() => (EXIT_DATA, "data"),
            _ => (EXIT_NUMERICAL, "numerical"),
        };
        Self { code, kind, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn sha256_file(path: &Path) -> crate::Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Parses a config file: a JSON object, or flat `key = value` lines.
pub fn parse_config_text(text: &str) -> std::result::Result<Map<String, Value>, String> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        return match serde_json::from_str::<Value>(trimmed) {
            Ok(Value::Object(m)) => Ok(m),
            Ok(_) => Err("config JSON must be an object".into()),
            Err(e) => Err(format!("config JSON: {e}")),
        };
    }
    let mut out = Map::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=').or_else(|| line.split_once(':')) else {
            return Err(format!("config line {}: expected `key = value`", i + 1));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(format!("config line {}: empty key", i + 1));
        }
        set_path(&mut out, key, parse_value(value.trim()));
    }
    Ok(out)
}

fn parse_value(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.trim_matches('"').to_string()))
}

fn set_path(map: &mut Map<String, Value>, dotted: &str, value: Value) {
    let mut parts = dotted.split('.').peekable();
    let mut cur = map;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            cur.insert(part.to_string(), value);
            return;
        }
        let entry = cur.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
        if !entry.is_object() {
            *entry = Value::Object(Map::new());
        }
        cur = entry.as_object_mut().unwrap();
    }
}

fn merge(base: &mut Value, layer: &Map<String, Value>) {
    let Value::Object(b) = base else { return };
    for (k, v) in layer {
        match (b.get_mut(k), v) {
            (Some(dst @ Value::Object(_)), Value::Object(src)) => merge(dst, src),
            _ => {
                b.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Default, overlaid with the config file, overlaid with flag values.
pub fn resolve_layers<T: Serialize + DeserializeOwned>(
    default: &T,
    file: Option<&Path>,
    flags: &Map<String, Value>,
) -> CliResult<(T, Value)> {
    let mut value = serde_json::to_value(default).map_err(|e| CliError::usage(e.to_string()))?;
    if let Some(path) = file {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let layer = parse_config_text(&text).map_err(CliError::usage)?;
        unknown_key(&value, &layer, "").map_or(Ok(()), |k| Err(CliError::usage(format!("unknown config key `{k}`"))))?;
        merge(&mut value, &layer);
    }
    let mut nested = Map::new();
    for (k, v) in flags {
        set_path(&mut nested, k, v.clone());
    }
    merge(&mut value, &nested);
    let resolved: T = serde_json::from_value(value).map_err(|e| CliError::usage(format!("config schema: {e}")))?;
    let materialized = serde_json::to_value(&resolved).map_err(|e| CliError::usage(e.to_string()))?;
    Ok((resolved, materialized))
}

/// First key of `layer` with no counterpart in `schema`, as a dotted path.
fn unknown_key(schema: &Value, layer: &Map<String, Value>, prefix: &str) -> Option<String> {
    let Value::Object(fields) = schema else { return None };
    for (k, v) in layer {
        let path = format!("{prefix}{k}");
        match (fields.get(k), v) {
            (None, _) => return Some(path),
            (Some(inner), Value::Object(sub)) => {
                if let Some(bad) = unknown_key(inner, sub, &format!("{path}.")) {
                    return Some(bad);
                }
            }
            _ => {}
        }
    }
    None
}

fn flag<T: Into<Value>>(flags: &mut Map<String, Value>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        flags.insert(key.to_string(), v.into());
    }
}

fn flag_float_or_inf(flags: &mut Map<String, Value>, key: &str, v: &Option<String>) -> CliResult<()> {
    if let Some(s) = v {
        let value = match s.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => Value::from(x),
            Ok(x) if x > 0.0 => Value::from("inf"),
            _ => return Err(CliError::usage(format!("--{} expects a number or `inf`, got `{s}`", key.replace('_', "-")))),
        };
        flags.insert(key.to_string(), value);
    }
    Ok(())
}

fn create_dir(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out)
        .map_err(|e| CliError { code: EXIT_DATA, kind: "io", message: format!("cannot create {}: {e}", out.display()) })
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> crate::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

struct ManifestBuilder {
    subcommand: &'static str,
    started: Instant,
    started_unix: u64,
    inputs: Vec<InputDigest>,
    artifacts: Vec<String>,
}

impl ManifestBuilder {
    fn new(subcommand: &'static str) -> Self {
        Self {
            subcommand,
            started: Instant::now(),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    /// Digests an input file; an unreadable file is a usage error.
    fn input(&mut self, path: &Path) -> CliResult<()> {
        let sha256 =
            sha256_file(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(InputDigest { path: path.display().to_string(), sha256 });
        Ok(())
    }

    fn finish(self, out: &Path, config: Value) -> crate::Result<()> {
        let manifest = RunManifest {
            subcommand: self.subcommand.to_string(),
            config,
            inputs: self.inputs,
            artifacts: self.artifacts,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: self.started_unix,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        write_json(&out.join("manifest.json"), &manifest)
    }
}

fn simulate_cmd(a: &SimulateArgs) -> CliResult<()> {
    let mut flags = Map::new();
    flag(&mut flags, "p", a.p);
    flag(&mut flags, "n", a.n);
    flag(&mut flags, "n_all", a.n_all);
    flag(&mut flags, "seed", a.seed);
    flag_float_or_inf(&mut flags, "df", &a.df)?;
    // A new p without an explicit s_p keeps the log p sparsity.
    let default = match a.p {
        Some(p) => SimConfig::with_dimension(p),
        None => SimConfig::default(),
    };
    let (config, materialized) = resolve_layers(&default, a.config.as_deref(), &flags)?;
    config.validate()?;
    let mut manifest = ManifestBuilder::new("simulate");
    if let Some(c) = &a.config {
        manifest.input(c)?;
    }
    let sim = simulate_paths(&config)?;
    create_dir(&a.out)?;
    let mut w = BufWriter::new(File::create(a.out.join("panel.csv")).map_err(Error::from)?);
    sim.panel.write_csv(&mut w)?;
    w.flush().map_err(Error::from)?;
    let mut w = BufWriter::new(File::create(a.out.join("truth.csv")).map_err(Error::from)?);
    writeln!(w, "j,integrated_beta").map_err(Error::from)?;
    for (j, b) in sim.true_integrated_beta.iter().enumerate() {
        writeln!(w, "{},{}", j + 1, fmt_f64(*b)).map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    write_json(&a.out.join("config.json"), &config)?;
    manifest.artifacts = vec!["panel.csv".into(), "truth.csv".into(), "config.json".into()];
    manifest.finish(&a.out, materialized)?;
    Ok(())
}

fn estimate_cmd(a: &EstimateArgs) -> CliResult<()> {
    let mut flags = Map::new();
    flag(&mut flags, "method", a.method.clone());
    flag(&mut flags, "k_n", a.k_n);
    flag(&mut flags, "c_eta", a.c_eta);
    flag(&mut flags, "c_lambda", a.c_lambda);
    flag(&mut flags, "c_h", a.c_h);
    flag(&mut flags, "eta_lasso", a.eta_lasso);
    flag(&mut flags, "threshold_rule", a.threshold.clone());
    flag_float_or_inf(&mut flags, "c_tau", &a.c_tau)?;
    flag_float_or_inf(&mut flags, "c_varpi", &a.c_varpi)?;
    if let Some(m) = flags.get_mut("method") {
        let parsed: crate::pipeline::Method = m.as_str().unwrap_or_default().parse()?;
        *m = Value::from(parsed.name());
    }
    let (config, materialized) = resolve_layers(&EstimatorConfig::default(), a.config.as_deref(), &flags)?;
    let mut manifest = ManifestBuilder::new("estimate");
    manifest.input(&a.panel)?;
    if let Some(c) = &a.config {
        manifest.input(c)?;
    }
    let panel = LogPricePanel::from_csv_path(&a.panel)?;
    let inc = IncrementSet::from_panel(&panel)?;
    let est = Estimator::new(&inc, config.standardize)?;
    let fit = est.run(&config)?;
    create_dir(&a.out)?;
    write_json(&a.out.join("integrated_beta.json"), &fit)?;
    let kind = config.response_kind();
    let mut w = BufWriter::new(File::create(a.out.join("spot.csv")).map_err(Error::from)?);
    let header: Vec<String> = (1..=est.p()).map(|j| format!("beta_{j}")).collect();
    writeln!(w, "t,{},debiased", header.join(",")).map_err(Error::from)?;
    for r in &fit.spot_path {
        let raw = match &fit.scale {
            Some(s) => s.rescale_beta(&r.beta_tilde, kind),
            None => r.beta_tilde.clone(),
        };
        let cells: Vec<String> = raw.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{},{},{}", fmt_f64(r.t), cells.join(","), r.debiased).map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    manifest.artifacts = vec!["integrated_beta.json".into(), "spot.csv".into()];
    manifest.finish(&a.out, materialized)?;
    Ok(())
}

fn tune_cmd(a: &TuneArgs) -> CliResult<()> {
    let (config, materialized) = resolve_layers(&TuneConfig::default(), a.config.as_deref(), &Map::new())?;
    let mut manifest = ManifestBuilder::new("tune");
    let mut panels = Vec::with_capacity(a.panels.len());
    for path in &a.panels {
        manifest.input(path)?;
        panels.push(LogPricePanel::from_csv_path(path)?);
    }
    if let Some(c) = &a.config {
        manifest.input(c)?;
    }
    let report = select_mspe_constants(&panels, &config.grids, &config.estimator)?;
    create_dir(&a.out)?;
    write_json(&a.out.join("tuning_report.json"), &report)?;
    manifest.artifacts = vec!["tuning_report.json".into()];
    manifest.finish(&a.out, materialized)?;
    Ok(())
}

fn bench_cmd(a: &BenchArgs) -> CliResult<()> {
    let mut flags = Map::new();
    flag(&mut flags, "replications", a.replications);
    flag(&mut flags, "base_seed", a.seed);
    if let Some(p) = a.p {
        flags.insert("sim.p".into(), Value::from(p));
        flags.insert("sim.s_p".into(), Value::from((p as f64).ln()));
    }
    let (spec, materialized) = resolve_layers(&BenchmarkSpec::default(), a.config.as_deref(), &flags)?;
    let mut manifest = ManifestBuilder::new("bench");
    if let Some(c) = &a.config {
        manifest.input(c)?;
    }
    let result = run_benchmark(&spec)?;
    create_dir(&a.out)?;
    write_json(&a.out.join("result.json"), &result)?;
    let mut w = BufWriter::new(File::create(a.out.join("results.csv")).map_err(Error::from)?);
    result.write_csv(&mut w)?;
    w.flush().map_err(Error::from)?;
    manifest.artifacts = vec!["result.json".into(), "results.csv".into()];
    manifest.finish(&a.out, materialized)?;
    Ok(())
}

/// `--threads`, else `$BETAFLOW_THREADS`, else automatic.
pub fn thread_count(flag: Option<usize>) -> CliResult<usize> {
    if let Some(t) = flag {
        return Ok(t);
    }
    match std::env::var(THREADS_ENV) {
        Ok(s) if !s.trim().is_empty() => s
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("{THREADS_ENV} must be a nonnegative integer, got `{s}`"))),
        _ => Ok(0),
    }
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let threads = thread_count(cli.threads)?;
    // Ignored if a pool already exists in this process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    match &cli.command {
        Command::Simulate(a) => simulate_cmd(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Tune(a) => tune_cmd(a),
        Command::Bench(a) => bench_cmd(a),
    }
}

/// Parses `args`, runs the subcommand and returns the exit status. Errors go
/// to stderr as one JSON line.
pub fn parse_and_dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            report(&CliError::usage(e.to_string().lines().next().unwrap_or("usage error").to_string()));
            return EXIT_USAGE;
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            report(&e);
            e.code
        }
    }
}

fn report(e: &CliError) {
    let line = serde_json::json!({ "error": e.kind, "code": e.code, "message": e.message });
    eprintln!("{line}");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_config_parsing() {
        let m = parse_config_text("# comment\nmethod = \"ed\"\nc_h = 0.5\nsolver.tol = 1e-8\nthreshold_rule = soft\n").unwrap();
        assert_eq!(m["method"], "ed");
        assert_eq!(m["c_h"], 0.5);
        assert_eq!(m["solver"]["tol"], 1e-8);
        assert_eq!(m["threshold_rule"], "soft");
        assert!(parse_config_text("no separator here").is_err());
        assert!(parse_config_text("[1, 2]").is_err());
        assert!(parse_config_text("{\"a\": 1}").unwrap().contains_key("a"));
    }

    #[test]
    fn layers_take_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.txt");
        fs::write(&path, "c_h = 0.5\nc_varpi = 0.125\n").unwrap();
        let mut flags = Map::new();
        flags.insert("c_h".into(), Value::from(2.0));
        let (cfg, _) = resolve_layers(&EstimatorConfig::default(), Some(&path), &flags).unwrap();
        assert_eq!(cfg.c_h, 2.0);
        assert_eq!(cfg.c_varpi, 0.125);
        assert_eq!(cfg.c_tau, 16.0);
    }

    #[test]
    fn schema_violation_is_usage_error() {
        let mut flags = Map::new();
        flags.insert("c_h".into(), Value::from("abc"));
        let err = resolve_layers(&EstimatorConfig::default(), None, &flags).unwrap_err();
        assert_eq!(err.code, EXIT_USAGE);
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::InvalidInput("x".into())).code, EXIT_DATA);
        assert_eq!(CliError::from(Error::Numerical("x".into())).code, EXIT_NUMERICAL);
        assert_eq!(CliError::from(Error::InvalidConfig("x".into())).code, EXIT_USAGE);
        assert_eq!(parse_and_dispatch(["betaflow", "frobnicate"]), EXIT_USAGE);
    }
}
