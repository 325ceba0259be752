//! Deterministic discrete-event simulation of the micro-batch data path.
//!
//! The receiver cuts arriving records into blocks every block interval; the
//! batch timer drains the block queue into a batch; batches wait in a FIFO
//! batch queue for a worker, which holds each job for a modeled cost. With
//! the adaptive mode the batch timer is retimed by the fuzzy controller from
//! grey-model traffic forecasts and the smoothed workload.

mod config;
mod event;
mod metrics;

use std::collections::VecDeque;

use log::trace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fuzzy::{FuzzyController, FuzzyError};
use crate::monitor::{BatchStats, WorkloadMonitor};
use crate::trace::RateFunction;
use crate::tracker::{TrafficReport, TrafficTracker};
use crate::Millis;

pub use config::{EngineConfig, JobCostModel, Mode};
pub use event::{EngineEvent, EventKind, EventQueue};
pub use metrics::{BatchRow, Conservation, MetricsLog, MetricsRow, TickRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    Config(String),
    #[error("interval {0} ms rejected: {1}")]
    Domain(Millis, String),
    #[error("operation unavailable in {0} mode")]
    Mode(Mode),
}

impl From<FuzzyError> for EngineError {
    fn from(e: FuzzyError) -> Self {
        Self::Config(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub block_id: u64,
    pub record_count: u64,
    pub created_at: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub batch_id: u64,
    pub blocks: Vec<Block>,
    pub generated_at: Millis,
    pub interval_used: Millis,
}

impl Batch {
    pub fn record_count(&self) -> u64 {
        self.blocks.iter().map(|b| b.record_count).sum()
    }
}

#[derive(Debug, Clone)]
struct RunningJob {
    batch: Batch,
    started_at: Millis,
    completes_at: Millis,
}

/// Dynamic batch timer: a new period applies from the next fire on.
#[derive(Debug, Clone, Copy)]
struct DynamicTimer {
    interval: Millis,
    period_in_force: Millis,
    next_fire: Millis,
}

pub struct Engine {
    config: EngineConfig,
    trace: RateFunction,
    tracker: TrafficTracker,
    monitor: WorkloadMonitor,
    controller: FuzzyController,
    events: EventQueue,
    now: Millis,
    rng: ChaCha8Rng,

    next_block_id: u64,
    last_boundary: Millis,
    emitted_cumulative: u64,
    block_queue: Vec<Block>,

    next_batch_id: u64,
    batch_queue: VecDeque<Batch>,
    workers: Vec<Option<RunningJob>>,
    timer: DynamicTimer,

    log: MetricsLog,
    finished: bool,
}

impl Engine {
    pub fn new(config: EngineConfig, trace: RateFunction) -> Result<Self, EngineError> {
        config.validate()?;
        if let Some(end) = trace.domain_end_ms() {
            if (config.duration as f64) > end {
                return Err(EngineError::Config(format!(
                    "duration {} ms exceeds the trace, which ends at {end} ms",
                    config.duration
                )));
            }
        }
        let mut tracker =
            TrafficTracker::new(config.tracker.clone()).map_err(|e| EngineError::Config(e.to_string()))?;
        tracker.start();
        let monitor = WorkloadMonitor::new(config.monitor).map_err(|e| EngineError::Config(e.to_string()))?;
        let controller = FuzzyController::new(config.controller.clone(), config.rules)?;

        let mut events = EventQueue::new();
        let b = config.block_interval;
        events.schedule(b.min(config.duration), EventKind::BlockBoundary);
        events.schedule(config.initial_batch_interval, EventKind::BatchTimerFire);
        events.schedule(config.tracker.resample_interval, EventKind::RateWindowClose);
        events.schedule(config.controller.control_period, EventKind::ControlTick);
        events.schedule(config.duration, EventKind::TraceEnd);

        let log = MetricsLog {
            block_interval: b,
            resample_interval: config.tracker.resample_interval,
            control_start: config.control_start,
            duration: config.duration,
            mode: Some(config.mode),
            ..MetricsLog::default()
        };

        Ok(Self {
            timer: DynamicTimer {
                interval: config.initial_batch_interval,
                period_in_force: config.initial_batch_interval,
                next_fire: config.initial_batch_interval,
            },
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            workers: vec![None; config.workers],
            trace,
            tracker,
            monitor,
            controller,
            events,
            now: 0,
            next_block_id: 0,
            last_boundary: 0,
            emitted_cumulative: 0,
            block_queue: Vec::new(),
            next_batch_id: 0,
            batch_queue: VecDeque::new(),
            log,
            finished: false,
            config,
        })
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn current_interval(&self) -> Millis {
        self.timer.interval
    }

    pub fn next_fire(&self) -> Millis {
        self.timer.next_fire
    }

    pub fn tracker(&self) -> &TrafficTracker {
        &self.tracker
    }

    pub fn monitor(&self) -> &WorkloadMonitor {
        &self.monitor
    }

    pub fn batch_queue_len(&self) -> usize {
        self.batch_queue.len()
    }

    pub fn block_queue_len(&self) -> usize {
        self.block_queue.len()
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Requests a new batch period, applied from the next timer fire.
    pub fn set_interval(&mut self, new_interval: Millis) -> Result<(), EngineError> {
        if self.config.mode == Mode::Vanilla {
            return Err(EngineError::Mode(Mode::Vanilla));
        }
        let c = &self.config.controller;
        if new_interval == 0 || !new_interval.is_multiple_of(self.config.block_interval) {
            return Err(EngineError::Domain(
                new_interval,
                format!("not a multiple of block interval {}", self.config.block_interval),
            ));
        }
        if !(c.min_interval..=c.max_interval).contains(&new_interval) {
            return Err(EngineError::Domain(
                new_interval,
                format!("outside [{}, {}]", c.min_interval, c.max_interval),
            ));
        }
        self.timer.interval = new_interval;
        Ok(())
    }

    /// Processes the next event. Returns it, or `None` once the trace has ended.
    pub fn step(&mut self) -> Option<EngineEvent> {
        if self.finished {
            return None;
        }
        let event = self.events.pop()?;
        debug_assert!(event.fire_at >= self.now);
        self.now = event.fire_at;
        trace!("{:>9} ms {:?}", self.now, event.kind);
        match event.kind {
            EventKind::BlockBoundary => self.on_block_boundary(),
            EventKind::RateWindowClose => self.on_window_close(),
            EventKind::ControlTick => self.on_control_tick(),
            EventKind::BatchTimerFire => {
                self.timer_fire(self.now);
            }
            EventKind::JobStart => {
                self.execute_next(self.now);
            }
            EventKind::JobComplete => self.on_job_complete(),
            EventKind::TraceEnd => self.on_trace_end(),
        }
        Some(event)
    }

    /// Runs until the trace ends and returns the metrics.
    pub fn run_to_end(mut self) -> MetricsLog {
        while self.step().is_some() {}
        self.log
    }

    fn on_block_boundary(&mut self) {
        let now = self.now;
        let start = self.last_boundary;
        let expected_cum = self.trace.cumulative(now as f64).round().max(0.0) as u64;
        let records = if self.config.jitter > 0.0 {
            let expected = self.trace.integral(start as f64, now as f64);
            let noise: f64 = self.rng.random_range(-1.0..=1.0);
            (expected * (1.0 + self.config.jitter * noise)).round().max(0.0) as u64
        } else {
            expected_cum.saturating_sub(self.emitted_cumulative)
        };
        self.emitted_cumulative = self.emitted_cumulative.max(expected_cum);
        self.log.conservation.generated += records;
        self.log.conservation.in_blocks += records;

        let block = Block { block_id: self.next_block_id, record_count: records, created_at: now };
        self.next_block_id += 1;
        self.block_queue.push(block);
        self.last_boundary = now;
        self.tracker
            .report_info(TrafficReport { timestamp: start, record_count: records })
            .expect("tracker is started with the engine");

        if now < self.config.duration {
            let next = (now + self.config.block_interval).min(self.config.duration);
            self.events.schedule(next, EventKind::BlockBoundary);
        }
    }

    fn on_window_close(&mut self) {
        self.tracker.close_until(self.now);
        if let Ok(latest) = self.tracker.get_latest_record() {
            self.log.windows.push(latest);
        }
        self.events
            .schedule(self.now + self.config.tracker.resample_interval, EventKind::RateWindowClose);
    }

    fn on_control_tick(&mut self) {
        let now = self.now;
        let active = self.config.mode == Mode::Adaptive && now >= self.config.control_start;
        let row = if active {
            let decision =
                self.controller.control_step(now, self.timer.interval, &self.tracker, &mut self.monitor);
            self.set_interval(decision.interval)
                .expect("controller output is a clamped block multiple");
            TickRow {
                time: now,
                interval: decision.interval,
                workload: decision.workload.value,
                rate_measured: decision.rate_measured,
                rate_predicted: decision.rate_predicted,
                traffic_change: Some(decision.traffic_change),
                workload_deviation: Some(decision.workload_deviation),
                level: Some(decision.level),
            }
        } else {
            let estimate = self.monitor.update_estimate(now);
            let rate_measured = self.tracker.get_latest_record().ok().map(|r| r.rate);
            let rate_predicted = if self.config.controller.prediction_enabled {
                self.tracker.predict_rate(1).ok()
            } else {
                rate_measured
            };
            TickRow {
                time: now,
                interval: self.timer.interval,
                workload: estimate.value,
                rate_measured,
                rate_predicted,
                traffic_change: None,
                workload_deviation: None,
                level: None,
            }
        };
        self.log.rows.push(MetricsRow::Tick(row));
        self.events.schedule(now + self.config.controller.control_period, EventKind::ControlTick);
    }

    /// Drains the block queue into a new batch and arms the next fire.
    pub fn timer_fire(&mut self, now: Millis) -> Batch {
        let blocks = std::mem::take(&mut self.block_queue);
        let batch = Batch {
            batch_id: self.next_batch_id,
            blocks,
            generated_at: now,
            interval_used: self.timer.period_in_force,
        };
        self.next_batch_id += 1;
        self.log.batches_generated += 1;
        self.log.conservation.in_batches += batch.record_count();
        self.batch_queue.push_back(batch.clone());

        self.timer.period_in_force = self.timer.interval;
        self.timer.next_fire = now + self.timer.interval;
        self.events.schedule(self.timer.next_fire, EventKind::BatchTimerFire);
        if self.workers.iter().any(Option::is_none) {
            self.events.schedule(now, EventKind::JobStart);
        }
        batch
    }

    /// Starts the oldest queued batch on an idle worker. Returns the stats the
    /// job will report on completion.
    pub fn execute_next(&mut self, now: Millis) -> Option<BatchStats> {
        let slot = self.workers.iter().position(Option::is_none)?;
        let batch = self.batch_queue.pop_front()?;
        let blocks = batch.blocks.len() as u64;
        let records = batch.record_count();
        let completes_at = now + self.config.cost_model.cost(records, blocks);
        let stats = BatchStats {
            batch_id: batch.batch_id,
            submitted_at: batch.generated_at,
            started_at: now,
            completed_at: completes_at,
            interval_used: batch.interval_used,
            record_count: records,
            block_count: blocks,
        };
        self.workers[slot] = Some(RunningJob { batch, started_at: now, completes_at });
        self.events.schedule(completes_at, EventKind::JobComplete);
        Some(stats)
    }

    fn on_job_complete(&mut self) {
        let now = self.now;
        let Some(slot) = self
            .workers
            .iter()
            .enumerate()
            .filter_map(|(i, w)| w.as_ref().filter(|j| j.completes_at == now).map(|j| (i, j.batch.batch_id)))
            .min_by_key(|(_, id)| *id)
            .map(|(i, _)| i)
        else {
            return;
        };
        let job = self.workers[slot].take().expect("slot was found busy");
        let stats = BatchStats {
            batch_id: job.batch.batch_id,
            submitted_at: job.batch.generated_at,
            started_at: job.started_at,
            completed_at: now,
            interval_used: job.batch.interval_used,
            record_count: job.batch.record_count(),
            block_count: job.batch.blocks.len() as u64,
        };
        let eta = self
            .monitor
            .on_batch_completed(&stats)
            .expect("job cost is at least 1 ms and interval is positive");
        self.log.conservation.completed += stats.record_count;
        self.log.rows.push(MetricsRow::Batch(BatchRow { stats, eta }));
        if !self.batch_queue.is_empty() {
            self.events.schedule(now, EventKind::JobStart);
        }
    }

    fn on_trace_end(&mut self) {
        self.finished = true;
        self.tracker.stop();
        let running: u64 = self.workers.iter().flatten().map(|j| j.batch.record_count()).sum();
        let queued: u64 = self.batch_queue.iter().map(Batch::record_count).sum();
        let c = &mut self.log.conservation;
        c.pending = running + queued;
        c.unbatched = self.block_queue.iter().map(|b| b.record_count).sum();
        self.log.pending_batches =
            self.batch_queue.len() as u64 + self.workers.iter().flatten().count() as u64;
        self.log.predictions = self.tracker.prediction_outcomes().to_vec();
    }
}

/// Simulates the full pipeline for `config` over `trace`.
pub fn run(config: EngineConfig, trace: RateFunction) -> Result<MetricsLog, EngineError> {
    Ok(Engine::new(config, trace)?.run_to_end())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(initial: Millis, mode: Mode, duration: Millis) -> EngineConfig {
        EngineConfig {
            initial_batch_interval: initial,
            mode,
            duration,
            // Keeps the controller out of the way unless a test wants it.
            control_start: Millis::MAX,
            ..EngineConfig::default()
        }
    }

    fn step_until(engine: &mut Engine, t: Millis, kind: EventKind) {
        while let Some(e) = engine.step() {
            if e.fire_at == t && e.kind == kind {
                return;
            }
        }
        panic!("no {kind:?} at {t}");
    }

    #[test]
    fn timer_fire_drains_queued_blocks() {
        let mut engine =
            Engine::new(config(1600, Mode::Vanilla, 10_000), RateFunction::constant(1000.0).unwrap()).unwrap();
        step_until(&mut engine, 1600, EventKind::BlockBoundary);
        assert_eq!(engine.block_queue_len(), 8);
        let batch = engine.timer_fire(1600);
        assert_eq!(batch.blocks.len(), 8);
        assert_eq!(batch.record_count(), 1600);
        assert_eq!(batch.interval_used, 1600);
        assert_eq!(engine.block_queue_len(), 0);
        assert_eq!(engine.batch_queue_len(), 1);
        assert_eq!(engine.next_fire(), 3200);
    }

    #[test]
    fn empty_queue_yields_empty_batch() {
        let mut engine =
            Engine::new(config(1000, Mode::Vanilla, 10_000), RateFunction::constant(0.0).unwrap()).unwrap();
        let batch = engine.timer_fire(0);
        assert!(batch.blocks.is_empty());
        assert_eq!(batch.record_count(), 0);
    }

    #[test]
    fn execute_next_charges_the_cost_model() {
        let mut cfg = config(1600, Mode::Vanilla, 4000);
        cfg.cost_model = JobCostModel { fixed_overhead: 100.0, per_record_cost: 0.4, per_block_cost: 10.0 };
        let mut engine = Engine::new(cfg, RateFunction::constant(2000.0).unwrap()).unwrap();
        step_until(&mut engine, 1600, EventKind::BlockBoundary);
        engine.timer_fire(1600);
        let stats = engine.execute_next(1600).unwrap();
        assert_eq!((stats.record_count, stats.block_count), (3200, 8));
        assert_eq!(stats.processing_delay(), 1460);
        assert_eq!(stats.scheduling_delay(), 0);
        // One worker, now busy.
        assert_eq!(engine.execute_next(1600), None);
    }

    #[test]
    fn busy_worker_delays_the_next_batch() {
        let mut cfg = config(1600, Mode::Vanilla, 6000);
        cfg.cost_model = JobCostModel { fixed_overhead: 500.0, per_record_cost: 0.4, per_block_cost: 10.0 };
        let log = run(cfg, RateFunction::constant(2000.0).unwrap()).unwrap();
        let b: Vec<BatchStats> = log.batches().map(|b| b.stats).collect();
        assert_eq!(b[0].processing_delay(), 1860);
        assert_eq!(b[1].submitted_at, 3200);
        assert_eq!(b[1].scheduling_delay(), 1600 + 1860 - 3200);
        for s in &b {
            assert_eq!(s.total_delay(), s.scheduling_delay() + s.processing_delay());
        }
    }

    #[test]
    fn new_interval_applies_from_the_next_fire() {
        let mut engine =
            Engine::new(config(2000, Mode::Adaptive, 100_000), RateFunction::constant(100.0).unwrap()).unwrap();
        step_until(&mut engine, 95_000, EventKind::BlockBoundary);
        assert_eq!(engine.next_fire(), 96_000);
        engine.set_interval(1600).unwrap();
        assert_eq!(engine.next_fire(), 96_000);
        let log = engine.run_to_end();
        let b: Vec<BatchStats> = log.batches().map(|b| b.stats).collect();
        let at = |t| b.iter().find(|s| s.submitted_at == t).unwrap();
        assert_eq!(at(96_000).interval_used, 2000);
        assert_eq!(at(97_600).interval_used, 1600);
        assert_eq!(at(97_600).block_count, 8);
    }

    #[test]
    fn set_interval_validates_its_argument() {
        let trace = RateFunction::constant(100.0).unwrap();
        let mut engine = Engine::new(config(2000, Mode::Adaptive, 10_000), trace.clone()).unwrap();
        engine.set_interval(2000).unwrap();
        assert_eq!((engine.current_interval(), engine.next_fire()), (2000, 2000));
        assert!(matches!(engine.set_interval(1700), Err(EngineError::Domain(1700, _))));
        assert!(matches!(engine.set_interval(200), Err(EngineError::Domain(200, _))));
        assert!(matches!(engine.set_interval(12_200), Err(EngineError::Domain(..))));
        assert_eq!(engine.current_interval(), 2000);

        let mut vanilla = Engine::new(config(2000, Mode::Vanilla, 10_000), trace).unwrap();
        assert_eq!(vanilla.set_interval(1600), Err(EngineError::Mode(Mode::Vanilla)));
    }

    #[test]
    fn duration_past_trace_end_is_rejected() {
        let file = crate::trace::TraceFile::parse("timestamp_s,value\n0,1\n10,1\n", crate::trace::TraceMode::Rate)
            .unwrap();
        let trace = RateFunction::from_csv(&file, 1.0, 1.0).unwrap();
        assert!(matches!(
            Engine::new(config(2000, Mode::Vanilla, 20_000), trace),
            Err(EngineError::Config(_))
        ));
    }
}
