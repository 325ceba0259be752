use crate::monitor::BatchStats;
use crate::tracker::{PredictionOutcome, ResampledRecord};
use crate::Millis;

use super::config::Mode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchRow {
    pub stats: BatchStats,
    pub eta: f64,
}

/// One control tick. Before the controller engages (or in vanilla mode) only
/// the monitor and tracker columns are filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRow {
    pub time: Millis,
    pub interval: Millis,
    pub workload: f64,
    pub rate_measured: Option<f64>,
    pub rate_predicted: Option<f64>,
    pub traffic_change: Option<f64>,
    pub workload_deviation: Option<f64>,
    pub level: Option<i32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricsRow {
    Batch(BatchRow),
    Tick(TickRow),
}

impl MetricsRow {
    pub fn time(&self) -> Millis {
        match self {
            Self::Batch(b) => b.stats.completed_at,
            Self::Tick(t) => t.time,
        }
    }
}

/// Record counts at each stage of the pipeline when the trace ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Conservation {
    pub generated: u64,
    pub in_blocks: u64,
    pub in_batches: u64,
    /// Blocks created after the last timer fire.
    pub unbatched: u64,
    pub completed: u64,
    /// Batches generated but not finished by the end of the run.
    pub pending: u64,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        self.generated == self.in_blocks
            && self.in_blocks == self.in_batches + self.unbatched
            && self.in_batches == self.completed + self.pending
    }
}

/// Everything a run produced, in event order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
    pub windows: Vec<ResampledRecord>,
    pub predictions: Vec<PredictionOutcome>,
    pub conservation: Conservation,
    pub batches_generated: u64,
    pub pending_batches: u64,
    pub block_interval: Millis,
    pub resample_interval: Millis,
    pub control_start: Millis,
    pub duration: Millis,
    pub mode: Option<Mode>,
}

impl MetricsLog {
    pub fn batches(&self) -> impl Iterator<Item = &BatchRow> {
        self.rows.iter().filter_map(|r| match r {
            MetricsRow::Batch(b) => Some(b),
            MetricsRow::Tick(_) => None,
        })
    }

    pub fn ticks(&self) -> impl Iterator<Item = &TickRow> {
        self.rows.iter().filter_map(|r| match r {
            MetricsRow::Tick(t) => Some(t),
            MetricsRow::Batch(_) => None,
        })
    }
}
