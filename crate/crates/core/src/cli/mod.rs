//! Command-line front end: configuration files, presets, CSV output and the
//! detector benchmark.

pub mod bench;
pub mod config;
pub mod csv;
pub mod presets;

use std::fs;
use std::path::PathBuf;

use thiserror::Error;

use crate::sim::{run_sweep, SimConfig, SimError};

pub use bench::{bench_detectors, BenchConfig, BenchRow};
pub use config::{config_to_text, parse_config};
pub use csv::{emit_csv, parse_csv, parse_reference_csv, ReferencePoint, HEADER};
pub use presets::preset;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl CliError {
    /// Process exit code: 1 for configuration problems, 2 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 2,
            CliError::Config(_) | CliError::Sim(_) => 1,
        }
    }
}

/// What a `run` invocation asked for.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunManifest {
    pub config: Option<PathBuf>,
    pub preset: Option<String>,
    pub series: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub ebn0_db: Option<String>,
    pub max_frames: Option<u64>,
}

impl RunManifest {
    /// Resolves the manifest into a validated configuration. A config file
    /// and a preset are mutually exclusive; command-line overrides apply
    /// last.
    pub fn resolve(&self) -> Result<SimConfig, CliError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "--config and --preset are mutually exclusive".into(),
                ))
            }
            (Some(path), None) => {
                if self.series.is_some() {
                    return Err(CliError::Config("--series requires --preset".into()));
                }
                let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                    path: path.clone(),
                    source,
                })?;
                parse_config(&text)?
            }
            (None, Some(name)) => preset(name, self.series.as_deref())?,
            (None, None) => {
                return Err(CliError::Config(
                    "one of --config or --preset is required".into(),
                ))
            }
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(list) = &self.ebn0_db {
            cfg.ebn0_db = config::parse_ebn0_list(list)?;
        }
        if let Some(m) = self.max_frames {
            cfg.max_frames = Some(m);
        }
        cfg.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

/// Runs the sweep described by `manifest` and writes the CSV (to stdout
/// when no output path is given).
pub fn run(manifest: &RunManifest) -> Result<(), CliError> {
    let cfg = manifest.resolve()?;
    let rows = run_sweep(&cfg)?;
    match &manifest.out {
        Some(path) => emit_csv(&rows, path),
        None => {
            print!("{}", csv::to_csv_string(&rows));
            Ok(())
        }
    }
}
