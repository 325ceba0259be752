//! Micro-batch stream processing simulator with an adaptive batch interval.
//!
//! A grey-model forecaster predicts the arrival rate one resampling window
//! ahead, an exponentially smoothed workload monitor tracks how close the
//! engine runs to saturation, and a fuzzy controller retimes the batch timer
//! from both signals.

pub mod engine;
pub mod fuzzy;
pub mod grey;
pub mod harness;
pub mod monitor;
pub mod trace;
pub mod tracker;

/// Simulated time in milliseconds.
pub type Millis = u64;

pub use engine::{run, Engine, EngineConfig, EngineError, JobCostModel, MetricsLog, Mode};
pub use fuzzy::{ControllerConfig, FuzzyController, FuzzyLabel, RuleTable};
pub use grey::{GreyModel, RawSeries};
pub use monitor::{BatchStats, MonitorConfig, WorkloadMonitor};
pub use trace::{RateFunction, TraceFile, TraceMode};
pub use tracker::{TrackerConfig, TrafficTracker};
