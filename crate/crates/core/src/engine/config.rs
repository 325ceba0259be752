use crate::fuzzy::{ControllerConfig, RuleTable};
use crate::monitor::MonitorConfig;
use crate::tracker::TrackerConfig;
use crate::Millis;

use super::EngineError;

/// Affine job cost standing in for the executor: `c0 + c1 * records + c2 * blocks`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JobCostModel {
    pub fixed_overhead: f64,
    pub per_record_cost: f64,
    pub per_block_cost: f64,
}

impl JobCostModel {
    /// Cost in milliseconds, rounded to the simulation's 1 ms resolution and
    /// never below 1 ms.
    pub fn cost(&self, records: u64, blocks: u64) -> Millis {
        let raw = self.fixed_overhead
            + self.per_record_cost * records as f64
            + self.per_block_cost * blocks as f64;
        (raw.round() as Millis).max(1)
    }

    /// Steady-state workload of a fixed interval at a constant rate, when no
    /// queue has built up.
    pub fn steady_workload(&self, rate: f64, interval: Millis, block_interval: Millis) -> f64 {
        let records = (rate * interval as f64 / 1000.0).round() as u64;
        let blocks = interval / block_interval;
        self.cost(records, blocks) as f64 / interval as f64
    }

    /// Smallest block-multiple interval in `[floor, ceiling]` whose job cost at
    /// `rate` does not exceed the interval itself.
    pub fn min_stable_interval(
        &self,
        rate: f64,
        block_interval: Millis,
        floor: Millis,
        ceiling: Millis,
    ) -> Option<Millis> {
        let start = floor.div_ceil(block_interval).max(1) * block_interval;
        (start..=ceiling)
            .step_by(block_interval as usize)
            .find(|&i| self.steady_workload(rate, i, block_interval) <= 1.0)
    }

    fn validate(&self) -> Result<(), EngineError> {
        for (name, v) in [
            ("fixed_overhead", self.fixed_overhead),
            ("per_record_cost", self.per_record_cost),
            ("per_block_cost", self.per_block_cost),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(EngineError::Config(format!("cost model {name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for JobCostModel {
    fn default() -> Self {
        Self { fixed_overhead: 1400.0, per_record_cost: 0.002, per_block_cost: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch interval retimed by the fuzzy controller.
    Adaptive,
    /// Fixed batch interval for the whole run.
    Vanilla,
}

impl std::str::FromStr for Mode {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adaptive" => Ok(Self::Adaptive),
            "vanilla" => Ok(Self::Vanilla),
            other => Err(EngineError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Adaptive => "adaptive",
            Self::Vanilla => "vanilla",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub block_interval: Millis,
    pub initial_batch_interval: Millis,
    pub controller: ControllerConfig,
    pub rules: RuleTable,
    pub monitor: MonitorConfig,
    pub tracker: TrackerConfig,
    pub cost_model: JobCostModel,
    pub mode: Mode,
    /// Time of the first interval adjustment.
    pub control_start: Millis,
    pub seed: u64,
    /// Relative amplitude of per-block arrival jitter; 0 disables it.
    pub jitter: f64,
    pub workers: usize,
    pub duration: Millis,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            block_interval: 200,
            initial_batch_interval: 2000,
            controller: ControllerConfig::default(),
            rules: RuleTable::default(),
            monitor: MonitorConfig::default(),
            tracker: TrackerConfig::default(),
            cost_model: JobCostModel::default(),
            mode: Mode::Adaptive,
            control_start: 30_000,
            seed: 0,
            jitter: 0.0,
            workers: 1,
            duration: 300_000,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let b = self.block_interval;
        if b == 0 {
            return Err(EngineError::Config("block_interval must be positive".into()));
        }
        if self.controller.block_interval != b {
            return Err(EngineError::Config(format!(
                "controller block interval {} differs from engine block interval {b}",
                self.controller.block_interval
            )));
        }
        self.controller.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        self.monitor.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        self.tracker.validate().map_err(|e| EngineError::Config(e.to_string()))?;
        self.cost_model.validate()?;
        let init = self.initial_batch_interval;
        if init == 0 || !init.is_multiple_of(b) {
            return Err(EngineError::Config(format!(
                "initial batch interval {init} is not a positive multiple of block interval {b}"
            )));
        }
        if self.mode == Mode::Adaptive
            && !(self.controller.min_interval..=self.controller.max_interval).contains(&init)
        {
            return Err(EngineError::Config(format!(
                "initial batch interval {init} outside [{}, {}]",
                self.controller.min_interval, self.controller.max_interval
            )));
        }
        if self.duration == 0 {
            return Err(EngineError::Config("duration must be positive".into()));
        }
        if !(self.jitter.is_finite() && (0.0..1.0).contains(&self.jitter)) {
            return Err(EngineError::Config(format!("jitter {} outside [0, 1)", self.jitter)));
        }
        if self.workers == 0 {
            return Err(EngineError::Config("at least one worker is required".into()));
        }
        Ok(())
    }
}
