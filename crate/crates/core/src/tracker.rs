//! Traffic tracking: receiver reports are folded into fixed resampling windows,
//! and a grey model is retrained on the trailing windows to forecast the rate.

use std::collections::VecDeque;

use log::{debug, warn};
use thiserror::Error;

use crate::grey::{GreyError, GreyModel};
use crate::Millis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("traffic tracker is not running")]
    NotStarted,
    #[error("not ready: {0}")]
    NotReady(&'static str),
    #[error("invalid tracker config: {0}")]
    Config(String),
    #[error(transparent)]
    Grey(#[from] GreyError),
}

pub type Result<T> = std::result::Result<T, TrackerError>;

/// Records received by a receiver slice, stamped with the slice start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrafficReport {
    pub timestamp: Millis,
    pub record_count: u64,
}

/// One closed resampling window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampledRecord {
    pub window_start: Millis,
    pub window_len: Millis,
    /// Mean arrival rate over the window, records per second.
    pub rate: f64,
    pub record_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub resample_interval: Millis,
    pub train_num: usize,
    pub retain_windows: usize,
    pub retrain_every: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { resample_interval: 30_000, train_num: 5, retain_windows: 240, retrain_every: 1 }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resample_interval == 0 {
            return Err(TrackerError::Config("resample_interval must be positive".into()));
        }
        if self.train_num < crate::grey::MIN_POINTS {
            return Err(TrackerError::Config(format!(
                "train_num must be at least {}",
                crate::grey::MIN_POINTS
            )));
        }
        if self.retain_windows < self.train_num {
            return Err(TrackerError::Config("retain_windows must be >= train_num".into()));
        }
        if self.retrain_every == 0 {
            return Err(TrackerError::Config("retrain_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TrackerState {
    Initialized,
    Running,
    Stopped,
}

/// A forecast made for a window before it closed, paired with what arrived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionOutcome {
    pub window_start: Millis,
    pub predicted: f64,
    pub measured: f64,
}

#[derive(Debug, Clone)]
pub struct TrafficTracker {
    config: TrackerConfig,
    state: TrackerState,
    /// Raw reports for the open window and the one before it.
    raw: VecDeque<TrafficReport>,
    open_start: Millis,
    open_count: u64,
    records: VecDeque<ResampledRecord>,
    windows_closed: u64,
    model: Option<GreyModel>,
    last_train_time: Option<Millis>,
    /// Forecast for the currently open window, made at the last retrain.
    pending_forecast: Option<f64>,
    outcomes: Vec<PredictionOutcome>,
    dropped: u64,
}

impl TrafficTracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            state: TrackerState::Initialized,
            raw: VecDeque::new(),
            open_start: 0,
            open_count: 0,
            records: VecDeque::new(),
            windows_closed: 0,
            model: None,
            last_train_time: None,
            pending_forecast: None,
            outcomes: Vec::new(),
            dropped: 0,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn start(&mut self) {
        self.state = TrackerState::Running;
    }

    pub fn stop(&mut self) {
        self.state = TrackerState::Stopped;
    }

    pub fn is_running(&self) -> bool {
        self.state == TrackerState::Running
    }

    /// Adds a receiver report. Reports for windows that already closed are dropped.
    pub fn report_info(&mut self, report: TrafficReport) -> Result<()> {
        if !self.is_running() {
            return Err(TrackerError::NotStarted);
        }
        if report.timestamp < self.open_start {
            debug!(
                "dropping report at {} ms: window starting {} ms is already closed",
                report.timestamp, self.open_start
            );
            self.dropped += 1;
            return Ok(());
        }
        let window_end = self.open_start + self.config.resample_interval;
        if report.timestamp >= window_end {
            self.close_until(report.timestamp - report.timestamp % self.config.resample_interval);
        }
        self.open_count += report.record_count;
        self.raw.push_back(report);
        Ok(())
    }

    /// Closes every window ending at or before `now`. Returns how many closed.
    pub fn close_until(&mut self, now: Millis) -> usize {
        let len = self.config.resample_interval;
        let mut closed = 0;
        while self.open_start + len <= now {
            let record = ResampledRecord {
                window_start: self.open_start,
                window_len: len,
                rate: self.open_count as f64 * 1000.0 / len as f64,
                record_count: self.open_count,
            };
            if let Some(predicted) = self.pending_forecast.take() {
                self.outcomes.push(PredictionOutcome {
                    window_start: record.window_start,
                    predicted,
                    measured: record.rate,
                });
            }
            self.records.push_back(record);
            self.windows_closed += 1;
            self.open_start += len;
            self.open_count = 0;
            closed += 1;

            // Keep raw reports for the open window plus one.
            let horizon = self.open_start.saturating_sub(len);
            while self.raw.front().is_some_and(|r| r.timestamp < horizon) {
                self.raw.pop_front();
            }

            if self.records.len() >= self.config.train_num
                && self.windows_closed.is_multiple_of(self.config.retrain_every as u64)
            {
                if let Err(e) = self.train_at(self.open_start) {
                    warn!("grey model retrain failed at {} ms: {e}", self.open_start);
                }
            }
            self.cleanup();
        }
        closed
    }

    /// Closed windows, oldest first.
    pub fn resample(&self) -> Vec<ResampledRecord> {
        self.records.iter().copied().collect()
    }

    pub fn get_records(&self) -> Vec<ResampledRecord> {
        self.resample()
    }

    pub fn get_latest_record(&self) -> Result<ResampledRecord> {
        self.records.back().copied().ok_or(TrackerError::NotReady("no closed window yet"))
    }

    /// Raw reports whose timestamp falls in `[from, to)`.
    pub fn get_info(&self, from: Millis, to: Millis) -> Vec<TrafficReport> {
        self.raw.iter().filter(|r| r.timestamp >= from && r.timestamp < to).copied().collect()
    }

    /// Drops resampled windows beyond `retain_windows`, oldest first.
    pub fn cleanup(&mut self) {
        while self.records.len() > self.config.retain_windows {
            self.records.pop_front();
        }
    }

    /// Fits the grey model on the trailing `train_num` windows.
    pub fn train(&mut self) -> Result<GreyModel> {
        self.train_at(self.open_start)
    }

    fn train_at(&mut self, now: Millis) -> Result<GreyModel> {
        let n = self.config.train_num;
        if self.records.len() < n {
            return Err(TrackerError::NotReady("not enough closed windows to train"));
        }
        let rates: Vec<f64> = self.records.iter().skip(self.records.len() - n).map(|r| r.rate).collect();
        let model = GreyModel::fit_shifted(&rates)?;
        self.model = Some(model);
        self.last_train_time = Some(now);
        self.pending_forecast = Some(Self::forecast(&model, n, 1)?);
        Ok(model)
    }

    fn forecast(model: &GreyModel, train_num: usize, windows_ahead: usize) -> Result<f64> {
        Ok(model.predict(train_num + windows_ahead)?.max(0.0))
    }

    /// Forecast rate `windows_ahead` windows after the last trained one.
    pub fn predict_rate(&self, windows_ahead: usize) -> Result<f64> {
        if windows_ahead == 0 {
            return Err(TrackerError::NotReady("windows_ahead must be >= 1"));
        }
        let model = self.model.as_ref().ok_or(TrackerError::NotReady("no trained model"))?;
        Self::forecast(model, self.config.train_num, windows_ahead)
    }

    pub fn get_model(&self) -> Option<&GreyModel> {
        self.model.as_ref()
    }

    pub fn last_train_time(&self) -> Option<Millis> {
        self.last_train_time
    }

    /// Records received in the still-open window.
    pub fn open_window_count(&self) -> u64 {
        self.open_count
    }

    pub fn open_window_start(&self) -> Millis {
        self.open_start
    }

    /// Every forecast that has been checked against its realized window.
    pub fn prediction_outcomes(&self) -> &[PredictionOutcome] {
        &self.outcomes
    }

    pub fn dropped_reports(&self) -> u64 {
        self.dropped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tracker(len: Millis) -> TrafficTracker {
        let mut t = TrafficTracker::new(TrackerConfig {
            resample_interval: len,
            ..TrackerConfig::default()
        })
        .unwrap();
        t.start();
        t
    }

    fn feed_uniform(t: &mut TrafficTracker, from: Millis, to: Millis, per_second: u64) {
        let mut ts = from;
        while ts < to {
            t.report_info(TrafficReport { timestamp: ts, record_count: per_second }).unwrap();
            ts += 1000;
        }
    }

    #[test]
    fn reports_accumulate_into_window() {
        let mut t = tracker(30_000);
        t.report_info(TrafficReport { timestamp: 1000, record_count: 500 }).unwrap();
        t.report_info(TrafficReport { timestamp: 2000, record_count: 500 }).unwrap();
        assert_eq!(t.open_window_count(), 1000);
        t.close_until(30_000);
        assert_eq!(t.get_latest_record().unwrap().record_count, 1000);
    }

    #[test]
    fn empty_window_has_zero_rate() {
        let mut t = tracker(30_000);
        t.close_until(30_000);
        assert_eq!(t.get_latest_record().unwrap().rate, 0.0);
    }

    #[test]
    fn thirty_reports_average_to_rate() {
        let mut t = tracker(30_000);
        feed_uniform(&mut t, 0, 30_000, 100);
        t.close_until(30_000);
        assert_relative_eq!(t.get_latest_record().unwrap().rate, 100.0);
    }

    #[test]
    fn uniform_and_step_resample() {
        let mut t = tracker(30_000);
        feed_uniform(&mut t, 0, 90_000, 1000);
        // still open until explicitly closed
        assert_eq!(t.resample().len(), 2);
        t.close_until(90_000);
        let rates: Vec<f64> = t.resample().iter().map(|r| r.rate).collect();
        assert_eq!(rates, vec![1000.0; 3]);

        let mut t = tracker(30_000);
        feed_uniform(&mut t, 0, 30_000, 500);
        feed_uniform(&mut t, 30_000, 60_000, 1000);
        t.close_until(60_000);
        let rates: Vec<f64> = t.resample().iter().map(|r| r.rate).collect();
        assert_eq!(rates, vec![500.0, 1000.0]);
    }

    #[test]
    fn late_reports_are_dropped() {
        let mut t = tracker(10_000);
        t.close_until(20_000);
        t.report_info(TrafficReport { timestamp: 5_000, record_count: 9 }).unwrap();
        assert_eq!(t.dropped_reports(), 1);
        assert_eq!(t.open_window_count(), 0);
    }

    #[test]
    fn requires_start() {
        let mut t = TrafficTracker::new(TrackerConfig::default()).unwrap();
        assert_eq!(
            t.report_info(TrafficReport { timestamp: 0, record_count: 1 }),
            Err(TrackerError::NotStarted)
        );
        t.start();
        t.stop();
        assert!(t.report_info(TrafficReport { timestamp: 0, record_count: 1 }).is_err());
    }

    #[test]
    fn not_ready_before_enough_history() {
        let mut t = tracker(1000);
        assert!(matches!(t.get_latest_record(), Err(TrackerError::NotReady(_))));
        assert!(matches!(t.predict_rate(1), Err(TrackerError::NotReady(_))));
        feed_uniform(&mut t, 0, 4000, 10);
        t.close_until(4000);
        assert!(matches!(t.train(), Err(TrackerError::NotReady(_))));
    }

    #[test]
    fn constant_history_predicts_constant() {
        let mut t = tracker(1000);
        feed_uniform(&mut t, 0, 5000, 250);
        t.close_until(5000);
        let m = t.train().unwrap();
        assert!(m.is_degenerate());
        assert_eq!(t.predict_rate(1).unwrap(), 250.0);
        assert_eq!(t.last_train_time(), Some(5000));
    }

    #[test]
    fn geometric_windows_match_grey_fit() {
        let mut t = tracker(1000);
        for (i, c) in [1u64, 2, 4, 8, 16].iter().enumerate() {
            t.report_info(TrafficReport { timestamp: i as u64 * 1000, record_count: *c }).unwrap();
        }
        t.close_until(5000);
        let m = t.train().unwrap();
        let direct = GreyModel::fit(&crate::grey::RawSeries::new(vec![1.0, 2.0, 4.0, 8.0, 16.0]).unwrap())
            .unwrap();
        assert_eq!(m, direct);
        assert_relative_eq!(t.predict_rate(1).unwrap(), direct.predict(6).unwrap());
    }

    #[test]
    fn step_history_predicts_plateau() {
        let mut t = tracker(1000);
        feed_uniform(&mut t, 0, 3000, 1000);
        feed_uniform(&mut t, 3000, 10_000, 2000);
        t.close_until(10_000);
        let p = t.predict_rate(1).unwrap();
        assert!((p - 2000.0).abs() <= 0.05 * 2000.0, "{p}");
    }

    #[test]
    fn rolling_retrain_uses_trailing_windows() {
        let mut t = tracker(1000);
        feed_uniform(&mut t, 0, 6000, 100);
        t.close_until(6000);
        let before = *t.get_model().unwrap();
        // sentinel window
        feed_uniform(&mut t, 6000, 7000, 400);
        t.close_until(7000);
        let after = *t.get_model().unwrap();
        assert_ne!(before, after);
        // Once the sentinel leaves the trailing slice the model returns to the constant fit.
        feed_uniform(&mut t, 7000, 12_000, 100);
        t.close_until(12_000);
        assert_eq!(*t.get_model().unwrap(), before);
    }

    #[test]
    fn cleanup_keeps_newest() {
        let mut t = TrafficTracker::new(TrackerConfig {
            resample_interval: 1000,
            train_num: 4,
            retain_windows: 4,
            retrain_every: 1,
        })
        .unwrap();
        t.start();
        for i in 0..6u64 {
            t.report_info(TrafficReport { timestamp: i * 1000, record_count: i }).unwrap();
        }
        t.close_until(6000);
        let recs = t.get_records();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[0].window_start, 2000);
        assert_eq!(t.get_latest_record().unwrap(), *recs.last().unwrap());
    }

    #[test]
    fn raw_reports_are_bounded() {
        let mut t = tracker(1000);
        feed_uniform(&mut t, 0, 10_000, 1);
        assert!(t.get_info(0, 8000).is_empty());
        assert_eq!(t.get_info(8000, 10_000).len(), 2);
    }

    #[test]
    fn config_validation() {
        let bad = TrackerConfig { train_num: 3, ..TrackerConfig::default() };
        assert!(TrafficTracker::new(bad).is_err());
        let bad = TrackerConfig { resample_interval: 0, ..TrackerConfig::default() };
        assert!(TrafficTracker::new(bad).is_err());
    }
}
