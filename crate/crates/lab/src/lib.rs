// `!(x > 0.0)` is how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Config-driven experiment runner for `hemivar`.
//!
//! A run reads a TOML [`ExperimentConfig`], validates it, dispatches to the
//! solver, Tykhonov or control experiments, and writes CSV tables,
//! plot-data files, a `summary.txt` of `key=value` lines and a
//! `manifest.txt` with SHA-256 hashes of every artifact.

pub mod config;
pub mod experiments;
pub mod expr;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{validate, Diagnostic, Diagnostics, ExperimentConfig, ExperimentKind};
pub use output::Summary;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration: {0}")]
    Parse(String),
    #[error("invalid configuration:\n{0}")]
    Invalid(Diagnostics),
    #[error("{experiment}: {source}")]
    Experiment {
        experiment: &'static str,
        #[source]
        source: hemivar::Error,
    },
    #[error("{key}: {message}")]
    Expression { key: String, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] hemivar::Error),
}

impl LabError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for configuration problems, 1 for everything that went wrong later.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Read { .. } | LabError::Parse(_) | LabError::Invalid(_) => 2,
            _ => 1,
        }
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub struct RunResult {
    pub out_dir: PathBuf,
    pub summary: Summary,
    /// Artifacts in write order, relative to `out_dir` (manifest excluded).
    pub files: Vec<PathBuf>,
}

/// Validates a config file; parse failures come back as errors, everything
/// else as diagnostics. `seed` overrides the config's seed.
pub fn validate_path(path: &Path, seed: Option<u64>) -> Result<Diagnostics, LabError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    Ok(validate(&cfg).0)
}

pub fn run(path: &Path, opts: &RunOptions) -> Result<RunResult, LabError> {
    run_config(&ExperimentConfig::load(path)?, opts)
}

pub fn run_config(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunResult, LabError> {
    let mut config = config.clone();
    if opts.seed.is_some() {
        config.seed = opts.seed;
    }
    let (diag, setup) = validate(&config);
    let setup = setup.ok_or(LabError::Invalid(diag))?;
    let out_dir = opts
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(config.experiment.as_str()));

    let started = Instant::now();
    let mut dir = output::RunDir::create(&out_dir)?;
    dir.text("config.toml", &setup.config.to_toml())?;
    let summary = experiments::dispatch(&setup, &mut dir)?;
    dir.text(output::SUMMARY, &summary.render())?;
    let header = [
        ("experiment", config.experiment.as_str().to_string()),
        ("seed", config.seed.map_or("none".into(), |s| s.to_string())),
        (
            "created",
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        ),
        ("elapsed_s", format!("{:.3}", started.elapsed().as_secs_f64())),
        ("threads", rayon::current_num_threads().to_string()),
    ];
    let files = dir.finish(&header)?;
    Ok(RunResult {
        out_dir,
        summary,
        files,
    })
}
