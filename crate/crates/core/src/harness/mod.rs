//! Experiment harness: presets, config files, output files and the CLI.

pub mod cli;
pub mod config;
pub mod report;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{self, EngineError, MetricsLog};
use crate::trace::TraceError;

pub use cli::run_cli;
pub use config::{RunConfig, TraceSource, TraceSpec};
pub use report::{summarize, write_metrics, write_plots, write_summary, SummaryReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("unknown preset {0:?} (expected one of exp1, exp2, exp3, day, day-vanilla)")]
    UnknownPreset(String),
    #[error(transparent)]
    Trace(TraceError),
    #[error(transparent)]
    Config(EngineError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl HarnessError {
    /// Usage and parse problems exit with 2, everything else with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::UnknownPreset(_) | Self::Trace(_) => 2,
            Self::Config(_) | Self::Invariant(_) | Self::Io { .. } => 1,
        }
    }
}

pub const PRESET_NAMES: [&str; 5] = ["exp1", "exp2", "exp3", "day", "day-vanilla"];

fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "exp1" => include_str!("../../presets/exp1.conf"),
        "exp2" => include_str!("../../presets/exp2.conf"),
        "exp3" => include_str!("../../presets/exp3.conf"),
        "day" => include_str!("../../presets/day.conf"),
        "day-vanilla" => include_str!("../../presets/day-vanilla.conf"),
        _ => return None,
    })
}

/// Shipped config file for a preset, verbatim.
pub fn preset_source(name: &str) -> Result<&'static str, HarnessError> {
    preset_text(name).ok_or_else(|| HarnessError::UnknownPreset(name.to_string()))
}

pub fn preset(name: &str) -> Result<RunConfig, HarnessError> {
    RunConfig::parse(preset_source(name)?, None)
}

/// Everything one run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: MetricsLog,
    pub summary: SummaryReport,
}

/// Runs a simulation without touching the filesystem.
pub fn simulate(cfg: &RunConfig) -> Result<RunOutput, HarnessError> {
    let (engine_cfg, rate) = cfg.resolve()?;
    let log = engine::run(engine_cfg, rate).map_err(HarnessError::Config)?;
    let c = log.conservation;
    if !c.holds() {
        return Err(HarnessError::Invariant(format!("record conservation failed: {c:?}")));
    }
    let summary = summarize(&log);
    Ok(RunOutput { log, summary })
}

/// Runs a simulation and writes `metrics.csv`, `summary.json` and the plot
/// series into `out`.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<RunOutput, HarnessError> {
    let output = simulate(cfg)?;
    write_metrics(&output.log, out)?;
    write_summary(&output.summary, out)?;
    write_plots(&output.log, out)?;
    Ok(output)
}
