//! Workload monitor: per-batch workload samples smoothed into a system
//! workload estimate.

use thiserror::Error;

use crate::Millis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonitorError {
    #[error("invalid batch stats: {0}")]
    Domain(String),
    #[error("invalid monitor config: {0}")]
    Config(String),
}

/// Timing record for one completed batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchStats {
    pub batch_id: u64,
    pub submitted_at: Millis,
    pub started_at: Millis,
    pub completed_at: Millis,
    pub interval_used: Millis,
    pub record_count: u64,
    pub block_count: u64,
}

impl BatchStats {
    pub fn processing_delay(&self) -> Millis {
        self.completed_at - self.started_at
    }

    pub fn scheduling_delay(&self) -> Millis {
        self.started_at - self.submitted_at
    }

    pub fn total_delay(&self) -> Millis {
        self.completed_at - self.submitted_at
    }

    /// Total delay over batch interval. Above 1 the queue is growing.
    pub fn workload(&self) -> Result<f64, MonitorError> {
        if self.interval_used == 0 {
            return Err(MonitorError::Domain("interval_used must be positive".into()));
        }
        if !(self.submitted_at <= self.started_at && self.started_at <= self.completed_at) {
            return Err(MonitorError::Domain(format!(
                "timestamps out of order: submitted {} started {} completed {}",
                self.submitted_at, self.started_at, self.completed_at
            )));
        }
        if self.total_delay() == 0 {
            return Err(MonitorError::Domain("total delay must be positive".into()));
        }
        Ok(self.total_delay() as f64 / self.interval_used as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorConfig {
    pub smoothing_coefficient: f64,
    pub initial_estimate: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self { smoothing_coefficient: 0.3, initial_estimate: 1.0 }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<(), MonitorError> {
        let a = self.smoothing_coefficient;
        if !(a > 0.0 && a < 1.0) {
            return Err(MonitorError::Config(format!("smoothing coefficient {a} outside (0, 1)")));
        }
        if !(self.initial_estimate.is_finite() && self.initial_estimate > 0.0) {
            return Err(MonitorError::Config("initial estimate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadEstimate {
    pub value: f64,
    pub as_of: Millis,
    pub samples_absorbed: u64,
}

#[derive(Debug, Clone)]
pub struct WorkloadMonitor {
    config: MonitorConfig,
    pending: Vec<f64>,
    estimate: WorkloadEstimate,
}

impl WorkloadMonitor {
    pub fn new(config: MonitorConfig) -> Result<Self, MonitorError> {
        config.validate()?;
        Ok(Self {
            config,
            pending: Vec::new(),
            estimate: WorkloadEstimate { value: config.initial_estimate, as_of: 0, samples_absorbed: 0 },
        })
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    /// Buffers the batch's workload sample until the next update.
    pub fn on_batch_completed(&mut self, stats: &BatchStats) -> Result<f64, MonitorError> {
        let eta = stats.workload()?;
        self.pending.push(eta);
        Ok(eta)
    }

    /// Folds the mean of the pending samples into the estimate. With nothing
    /// pending the estimate is carried over unchanged.
    pub fn update_estimate(&mut self, now: Millis) -> WorkloadEstimate {
        if !self.pending.is_empty() {
            let k = self.pending.len();
            let mean = self.pending.iter().sum::<f64>() / k as f64;
            let a = self.config.smoothing_coefficient;
            self.estimate.value = a * mean + (1.0 - a) * self.estimate.value;
            self.estimate.samples_absorbed += k as u64;
            self.pending.clear();
        }
        self.estimate.as_of = now;
        self.estimate
    }

    pub fn current(&self) -> WorkloadEstimate {
        self.estimate
    }

    pub fn pending_samples(&self) -> usize {
        self.pending.len()
    }
}
