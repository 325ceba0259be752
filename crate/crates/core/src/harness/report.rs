//! Metrics files, plot series and the run summary.
//!
//! Every summary statistic is a function of the rows written to
//! `metrics.csv` plus the three timing constants echoed in `summary.json`,
//! so the summary can be rebuilt from the files alone.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{MetricsLog, MetricsRow, TickRow};
use crate::Millis;

use super::HarnessError;

pub const METRICS_HEADER: [&str; 15] = [
    "time_ms",
    "batch_id",
    "interval_ms",
    "records",
    "blocks",
    "sched_delay_ms",
    "proc_delay_ms",
    "total_delay_ms",
    "eta",
    "workload_S",
    "rate_measured",
    "rate_predicted",
    "C",
    "D",
    "fuzzy_level",
];

/// Ticks the interval must hold still for to count as converged.
pub const CONVERGENCE_TICKS: usize = 20;

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io { path: path.to_path_buf(), source: e.into() }
}

/// One `metrics.csv` line per batch completion and per control tick, in
/// event order.
pub fn metrics_records(log: &MetricsLog) -> Vec<[String; 15]> {
    log.rows
        .iter()
        .map(|row| match row {
            MetricsRow::Batch(b) => {
                let s = &b.stats;
                [
                    s.completed_at.to_string(),
                    s.batch_id.to_string(),
                    s.interval_used.to_string(),
                    s.record_count.to_string(),
                    s.block_count.to_string(),
                    s.scheduling_delay().to_string(),
                    s.processing_delay().to_string(),
                    s.total_delay().to_string(),
                    b.eta.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]
            }
            MetricsRow::Tick(t) => [
                t.time.to_string(),
                String::new(),
                t.interval.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                t.workload.to_string(),
                opt(t.rate_measured),
                opt(t.rate_predicted),
                opt(t.traffic_change),
                opt(t.workload_deviation),
                opt(t.level),
            ],
        })
        .collect()
}

pub fn write_metrics(log: &MetricsLog, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("metrics.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(METRICS_HEADER).map_err(csv_err(&path))?;
    for rec in metrics_records(log) {
        w.write_record(&rec).map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))
}

/// File name, header and rows of one plot series.
type PlotSeries<'a> = (&'a str, &'a [&'a str], Vec<Vec<String>>);

/// Writes one small CSV per plotted series under `dir/plots`.
pub fn write_plots(log: &MetricsLog, dir: &Path) -> Result<(), HarnessError> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(io_err(&plots))?;
    let ticks: Vec<&TickRow> = log.ticks().collect();

    let series: [PlotSeries; 5] = [
        (
            "interval.csv",
            &["time_ms", "interval_ms"],
            ticks.iter().map(|t| vec![t.time.to_string(), t.interval.to_string()]).collect(),
        ),
        (
            "workload.csv",
            &["time_ms", "workload_S"],
            ticks.iter().map(|t| vec![t.time.to_string(), t.workload.to_string()]).collect(),
        ),
        (
            "rate.csv",
            &["time_ms", "rate_measured", "rate_predicted"],
            ticks
                .iter()
                .filter(|t| t.rate_measured.is_some())
                .map(|t| vec![t.time.to_string(), opt(t.rate_measured), opt(t.rate_predicted)])
                .collect(),
        ),
        (
            "fuzzy.csv",
            &["time_ms", "C", "D", "fuzzy_level"],
            ticks
                .iter()
                .filter(|t| t.level.is_some())
                .map(|t| {
                    vec![
                        t.time.to_string(),
                        opt(t.traffic_change),
                        opt(t.workload_deviation),
                        opt(t.level),
                    ]
                })
                .collect(),
        ),
        (
            "delay.csv",
            &["time_ms", "batch_id", "sched_delay_ms", "proc_delay_ms", "total_delay_ms"],
            log.batches()
                .map(|b| {
                    let s = &b.stats;
                    vec![
                        s.completed_at.to_string(),
                        s.batch_id.to_string(),
                        s.scheduling_delay().to_string(),
                        s.processing_delay().to_string(),
                        s.total_delay().to_string(),
                    ]
                })
                .collect(),
        ),
    ];

    for (name, header, rows) in series {
        let path = plots.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
        w.write_record(header).map_err(csv_err(&path))?;
        for r in rows {
            w.write_record(&r).map_err(csv_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub mode: String,
    pub block_interval_ms: Millis,
    pub resample_interval_ms: Millis,
    pub control_start_ms: Millis,
    pub batches: usize,
    pub ticks: usize,
    pub records_processed: u64,
    pub prediction_samples: usize,
    pub prediction_error_mean: Option<f64>,
    pub prediction_error_max: Option<f64>,
    pub convergence_time_ms: Option<Millis>,
    pub converged_interval_ms: Option<Millis>,
    pub steady_workload_mean: Option<f64>,
    pub steady_workload_min: Option<f64>,
    pub steady_workload_max: Option<f64>,
    pub time_avg_workload: Option<f64>,
    pub max_workload: Option<f64>,
    pub total_delay_mean_ms: Option<f64>,
    pub total_delay_max_ms: Option<Millis>,
    pub overload_episodes: usize,
    pub overload_recovery_max_ms: Option<Millis>,
    pub overload_unresolved: bool,
    pub mean_abs_interval_change_ms: Option<f64>,
    pub longest_workload_rise_ticks: usize,
}

/// The interval held within one block of its value at `time` for the
/// [`CONVERGENCE_TICKS`] ticks ending at `settled_at`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Convergence {
    pub time: Millis,
    pub settled_at: Millis,
    pub interval: Millis,
}

/// First tick at or after `from` that opens a run of [`CONVERGENCE_TICKS`]
/// ticks all within one block of its own interval. `interval` is the value
/// at the last tick of that run.
pub fn convergence_after(ticks: &[TickRow], from: Millis, block: Millis) -> Option<Convergence> {
    let v: Vec<&TickRow> = ticks.iter().filter(|t| t.time >= from).collect();
    v.windows(CONVERGENCE_TICKS).find_map(|w| {
        let base = w[0].interval;
        w.iter().all(|t| t.interval.abs_diff(base) <= block).then(|| Convergence {
            time: w[0].time,
            settled_at: w[CONVERGENCE_TICKS - 1].time,
            interval: w[CONVERGENCE_TICKS - 1].interval,
        })
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn fmax(xs: impl Iterator<Item = f64>) -> Option<f64> {
    xs.fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
}

fn fmin(xs: impl Iterator<Item = f64>) -> Option<f64> {
    xs.fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))))
}

/// One-step forecasts paired with the measurement of the window they
/// targeted, as `(predicted, measured)`.
///
/// A tick at `t` reads the window closed at `floor(t / R) * R` and forecasts
/// the one closing `R` later; the first tick that reads that later window
/// supplies the realized rate.
pub fn prediction_pairs(ticks: &[TickRow], resample: Millis) -> Vec<(f64, f64)> {
    let mut forecast_for: Vec<(Millis, f64)> = Vec::new();
    let mut measured_at: Vec<(Millis, f64)> = Vec::new();
    for t in ticks {
        let closed = t.time / resample * resample;
        if let Some(m) = t.rate_measured {
            if measured_at.last().is_none_or(|&(w, _)| w != closed) {
                measured_at.push((closed, m));
            }
        }
        if let Some(p) = t.rate_predicted {
            let target = closed + resample;
            if forecast_for.last().is_none_or(|&(w, _)| w != target) {
                forecast_for.push((target, p));
            }
        }
    }
    forecast_for
        .into_iter()
        .filter_map(|(w, p)| {
            let i = measured_at.binary_search_by_key(&w, |&(w, _)| w).ok()?;
            Some((p, measured_at[i].1))
        })
        .collect()
}

/// Longest stretch of consecutive ticks over which `S` strictly increased.
pub fn longest_rise(ticks: &[TickRow]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for w in ticks.windows(2) {
        if w[1].workload > w[0].workload {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

pub fn summarize(log: &MetricsLog) -> SummaryReport {
    let ticks: Vec<TickRow> = log.ticks().copied().collect();
    let controlled: Vec<TickRow> =
        ticks.iter().filter(|t| t.time >= log.control_start).copied().collect();
    let batches: Vec<_> = log.batches().map(|b| b.stats).collect();

    let errors: Vec<f64> = prediction_pairs(&ticks, log.resample_interval)
        .into_iter()
        .filter(|&(_, m)| m > 0.0)
        .map(|(p, m)| (p - m).abs() / m)
        .collect();

    // Steady state starts once the convergence run has been confirmed.
    let conv = convergence_after(&ticks, log.control_start, log.block_interval);
    let steady = || {
        ticks
            .iter()
            .filter(move |t| conv.is_some_and(|c| t.time >= c.settled_at))
            .map(|t| t.workload)
    };

    let mut episodes = 0;
    let mut recovery_max: Option<Millis> = None;
    let mut open: Option<Millis> = None;
    for t in &ticks {
        match open {
            None if t.workload > 1.0 => {
                open = Some(t.time);
                episodes += 1;
            }
            Some(start) if t.workload < 1.0 => {
                let d = t.time - start;
                recovery_max = Some(recovery_max.map_or(d, |m| m.max(d)));
                open = None;
            }
            _ => {}
        }
    }

    SummaryReport {
        mode: log.mode.map(|m| m.to_string()).unwrap_or_default(),
        block_interval_ms: log.block_interval,
        resample_interval_ms: log.resample_interval,
        control_start_ms: log.control_start,
        batches: batches.len(),
        ticks: ticks.len(),
        records_processed: batches.iter().map(|b| b.record_count).sum(),
        prediction_samples: errors.len(),
        prediction_error_mean: mean(errors.iter().copied()),
        prediction_error_max: fmax(errors.iter().copied()),
        convergence_time_ms: conv.map(|c| c.time),
        converged_interval_ms: conv.map(|c| c.interval),
        steady_workload_mean: mean(steady()),
        steady_workload_min: fmin(steady()),
        steady_workload_max: fmax(steady()),
        time_avg_workload: mean(ticks.iter().map(|t| t.workload)),
        max_workload: fmax(ticks.iter().map(|t| t.workload)),
        total_delay_mean_ms: mean(batches.iter().map(|b| b.total_delay() as f64)),
        total_delay_max_ms: batches.iter().map(|b| b.total_delay()).max(),
        overload_episodes: episodes,
        overload_recovery_max_ms: recovery_max,
        overload_unresolved: open.is_some(),
        mean_abs_interval_change_ms: mean(
            controlled.windows(2).map(|w| w[1].interval.abs_diff(w[0].interval) as f64),
        ),
        longest_workload_rise_ticks: longest_rise(&controlled),
    }
}

pub fn write_summary(summary: &SummaryReport, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tick(time: Millis, interval: Millis, workload: f64) -> TickRow {
        TickRow {
            time,
            interval,
            workload,
            rate_measured: None,
            rate_predicted: None,
            traffic_change: None,
            workload_deviation: None,
            level: None,
        }
    }

    #[test]
    fn convergence_needs_twenty_steady_ticks() {
        let mut ticks: Vec<TickRow> = (1..=5).map(|i| tick(i * 10_000, 2000 - 200 * i, 1.0)).collect();
        let settled = (6..=30).map(|i| tick(i * 10_000, 1000, 1.0));
        ticks.extend(settled);
        // Tick 5 sits at 1000 already; tick 4 at 1200 is one block away.
        let c = convergence_after(&ticks, 0, 200).unwrap();
        assert_eq!(c, Convergence { time: 40_000, settled_at: 230_000, interval: 1000 });
        assert_eq!(convergence_after(&ticks[..20], 0, 200), None);
        assert_eq!(convergence_after(&ticks, 0, 100).unwrap().time, 50_000);
    }

    #[test]
    fn forecasts_pair_with_the_following_window() {
        let mut ticks: Vec<TickRow> = (1..=9).map(|i| tick(i * 10_000, 2000, 1.0)).collect();
        for t in ticks.iter_mut() {
            let w = t.time / 30_000;
            if w >= 1 {
                t.rate_measured = Some(100.0 * w as f64);
                t.rate_predicted = Some(100.0 * (w + 1) as f64 + 5.0);
            }
        }
        let pairs = prediction_pairs(&ticks, 30_000);
        assert_eq!(pairs, vec![(205.0, 200.0), (305.0, 300.0)]);
    }

    #[test]
    fn rise_counts_strict_increases_only() {
        let s = [1.0, 1.1, 1.2, 1.2, 1.3, 1.4, 1.5, 1.0];
        let ticks: Vec<TickRow> = s.iter().enumerate().map(|(i, &w)| tick(i as Millis, 1000, w)).collect();
        assert_eq!(longest_rise(&ticks), 3);
    }

    #[test]
    fn empty_log_summarizes_to_nothing() {
        let s = summarize(&MetricsLog::default());
        assert_eq!(s.batches, 0);
        assert_eq!(s.prediction_error_mean, None);
        assert_eq!(s.convergence_time_ms, None);
        assert!(!s.overload_unresolved);
    }
}
