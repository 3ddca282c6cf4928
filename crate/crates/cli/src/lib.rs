//! Batch interface: `check`, `simulate` and `decompose` driven by a TOML
//! configuration, with CSV paths and JSON reports.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use semimart_core::criteria::{verdict, Verdict, VerdictReport};
use semimart_core::simulation::{
    build_paths, check_window, path_seed, rng_from_seed, sample_series, PathBundle, SimulationError, TruncationBounds,
};

pub use config::{parse, ConfigError, Loaded};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Io { .. } => 3,
        }
    }

    fn config(message: impl Into<String>) -> Self {
        CliError::Config(ConfigError { line: None, message: message.into() })
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::Levy(_) | SimulationError::Quadrature(_) | SimulationError::StateMismatch(_) => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::config(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

pub fn read_config(path: &Path) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse(&text)?)
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Runs the criteria; deterministic, no randomness involved.
pub fn cmd_check(cfg: &Loaded) -> Result<VerdictReport, CliError> {
    verdict(&cfg.model, &cfg.kernel, &cfg.criteria()).map_err(|e| CliError::Numeric(e.to_string()))
}

pub fn report_json(report: &VerdictReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub paths: usize,
    pub path_seeds: Vec<u64>,
    pub truncation_bounds: TruncationBounds,
    /// The configuration document as given.
    pub config: String,
}

/// CSV with header `t,X,M,A[,G]`; floats use the shortest round-trip form.
pub fn path_csv(b: &PathBundle) -> String {
    let mut s = String::from(if b.gaussian.is_some() { "t,X,M,A,G\n" } else { "t,X,M,A\n" });
    for i in 0..b.grid.len() {
        let _ = write!(s, "{},{},{},{}", b.grid[i], b.x[i], b.m[i], b.a[i]);
        if let Some(g) = &b.gaussian {
            let _ = write!(s, ",{}", g[i]);
        }
        s.push('\n');
    }
    s
}

pub fn jumps_csv(b: &PathBundle, cfg: &Loaded) -> String {
    let mut s = String::from("time,size,v\n");
    for j in &b.jumps {
        let _ = writeln!(s, "{},{},{}", j.time, j.size, cfg.model.components()[j.v].label);
    }
    s
}

fn simulate_one(cfg: &Loaded, master: u64, seed: u64) -> Result<PathBundle, CliError> {
    let series = cfg.series(master);
    let state = sample_series(&series, &mut rng_from_seed(seed))?;
    Ok(build_paths(&state, &series)?)
}

/// Writes `path_<k>.csv` and `jumps_<k>.csv` for each path, then `manifest.json`.
pub fn cmd_simulate(cfg: &Loaded, seed: u64, paths: usize, jobs: Option<usize>, out: &Path) -> Result<Manifest, CliError> {
    let bounds = check_window(&cfg.series(seed))?;
    ensure_dir(out)?;
    let path_seeds: Vec<u64> = (0..paths as u64).map(|k| path_seed(seed, k)).collect();
    let csv = cfg.raw.output.wants("csv");
    let job = |k: usize| -> Result<(), CliError> {
        let b = simulate_one(cfg, seed, path_seeds[k])?;
        if csv {
            write(&out.join(format!("path_{k}.csv")), &path_csv(&b))?;
            write(&out.join(format!("jumps_{k}.csv")), &jumps_csv(&b, cfg))?;
        }
        Ok(())
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::config(format!("--jobs: {e}")))?;
    pool.install(|| (0..paths).into_par_iter().try_for_each(job))?;
    let manifest = Manifest {
        command: "simulate".into(),
        seed,
        paths,
        path_seeds,
        truncation_bounds: bounds,
        config: cfg.source.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write(&out.join("manifest.json"), &text)?;
    Ok(manifest)
}

/// Reruns a simulation from its manifest into `out`.
pub fn rerun_manifest(manifest: &Path, jobs: Option<usize>, out: &Path) -> Result<Manifest, CliError> {
    let text = fs::read_to_string(manifest).map_err(|e| CliError::config(format!("cannot read {}: {e}", manifest.display())))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| CliError::config(format!("manifest: {e}")))?;
    let cfg = parse(&m.config)?;
    let again = cmd_simulate(&cfg, m.seed, m.paths, jobs, out)?;
    if again.path_seeds != m.path_seeds {
        return Err(CliError::Numeric("derived path seeds differ from the manifest".into()));
    }
    Ok(again)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecomposeReport {
    pub max_decomposition_residual: f64,
    #[serde(rename = "A_route_disagreement")]
    pub a_route_disagreement: f64,
    pub truncation_bound: f64,
    pub path_scale: f64,
    pub seed: u64,
    pub verdict: Option<Verdict>,
    pub warnings: Vec<String>,
}

/// One path with both routes to `A`: writes `decompose.csv` and `decompose.json`.
pub fn cmd_decompose(cfg: &Loaded, seed: u64, out: &Path) -> Result<(DecomposeReport, PathBundle), CliError> {
    let series = cfg.series(seed);
    let bounds = check_window(&series)?;
    let s = path_seed(seed, 0);
    let b = simulate_one(cfg, seed, s)?;
    let check = b.decomposition_check();
    let mut warnings = Vec::new();
    let v = match cmd_check(cfg) {
        Ok(r) => Some(r.verdict),
        Err(e) => {
            warnings.push(format!("criteria could not be evaluated: {e}"));
            None
        }
    };
    match v {
        Some(Verdict::NotSemimartingale) => {
            warnings.push("X is not a semimartingale; M and A are the formal series split and A need not have finite variation".into())
        }
        Some(Verdict::Inconclusive) => warnings.push("the criteria are inconclusive for this model".into()),
        _ => {}
    }
    let report = DecomposeReport {
        max_decomposition_residual: check.max_decomposition_residual,
        a_route_disagreement: check.a_route_disagreement,
        truncation_bound: bounds.total(),
        path_scale: check.path_scale,
        seed: s,
        verdict: v,
        warnings,
    };
    ensure_dir(out)?;
    if cfg.raw.output.wants("csv") {
        let mut csv = String::from(if b.gaussian.is_some() { "t,X,M,A,A_direct,G\n" } else { "t,X,M,A,A_direct\n" });
        for i in 0..b.grid.len() {
            let _ = write!(csv, "{},{},{},{},{}", b.grid[i], b.x[i], b.m[i], b.a[i], b.a_direct[i]);
            if let Some(g) = &b.gaussian {
                let _ = write!(csv, ",{}", g[i]);
            }
            csv.push('\n');
        }
        write(&out.join("decompose.csv"), &csv)?;
    }
    if cfg.raw.output.wants("json") {
        write(&out.join("decompose.json"), &decompose_json(&report))?;
    }
    Ok((report, b))
}

pub fn decompose_json(r: &DecomposeReport) -> String {
    let mut s = serde_json::to_string_pretty(r).expect("report serializes");
    s.push('\n');
    s
}
