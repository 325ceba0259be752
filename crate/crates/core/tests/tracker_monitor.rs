use edgebatch::monitor::{BatchStats, MonitorConfig, WorkloadMonitor};
use edgebatch::tracker::{TrackerConfig, TrafficReport, TrafficTracker};
use proptest::prelude::*;

const WINDOW: u64 = 30_000;

fn tracker(config: TrackerConfig) -> TrafficTracker {
    let mut t = TrafficTracker::new(config).unwrap();
    t.start();
    t
}

fn feed(t: &mut TrafficTracker, reports: &[(u64, u64)]) {
    for &(timestamp, record_count) in reports {
        t.report_info(TrafficReport { timestamp, record_count }).unwrap();
    }
}

/// Sorted report stream: gaps in ms and counts.
fn reports() -> impl Strategy<Value = Vec<(u64, u64)>> {
    prop::collection::vec((0u64..20_000, 0u64..5_000), 1..200).prop_map(|steps| {
        let mut now = 0;
        steps
            .into_iter()
            .map(|(gap, count)| {
                now += gap;
                (now, count)
            })
            .collect()
    })
}

#[test]
fn reports_before_start_are_refused() {
    let mut t = TrafficTracker::new(TrackerConfig::default()).unwrap();
    assert!(t.report_info(TrafficReport { timestamp: 0, record_count: 1 }).is_err());
}

#[test]
fn first_model_appears_once_enough_windows_close() {
    let mut t = tracker(TrackerConfig::default());
    for w in 0..4 {
        feed(&mut t, &[(w * WINDOW, 1000)]);
    }
    t.close_until(4 * WINDOW);
    assert!(t.get_model().is_none());
    assert!(t.predict_rate(1).is_err());
    t.close_until(5 * WINDOW);
    assert!(t.get_model().is_some());
    assert_eq!(t.last_train_time(), Some(5 * WINDOW));
}

#[test]
fn retrain_cadence_follows_the_config() {
    let mut t = tracker(TrackerConfig { retrain_every: 3, ..TrackerConfig::default() });
    let mut trained = Vec::new();
    for w in 1..=12 {
        feed(&mut t, &[((w - 1) * WINDOW + 5, 900 + 10 * w)]);
        t.close_until(w * WINDOW);
        if t.last_train_time() == Some(w * WINDOW) {
            trained.push(w);
        }
    }
    assert_eq!(trained, vec![6, 9, 12]);
}

#[test]
fn every_forecast_is_scored_against_its_window() {
    let mut t = tracker(TrackerConfig::default());
    for w in 1..=10 {
        feed(&mut t, &[((w - 1) * WINDOW, 30_000)]);
        t.close_until(w * WINDOW);
    }
    let outcomes = t.prediction_outcomes();
    assert_eq!(outcomes.len(), 5);
    for o in outcomes {
        assert!((o.measured - 1000.0).abs() < 1e-9);
        assert!((o.predicted - 1000.0).abs() < 1e-6);
    }
}

fn stats(delay: u64, interval: u64) -> BatchStats {
    BatchStats {
        batch_id: 0,
        submitted_at: 1_000,
        started_at: 1_000,
        completed_at: 1_000 + delay,
        interval_used: interval,
        record_count: 10,
        block_count: 1,
    }
}

#[test]
fn monitor_without_samples_carries_its_estimate() {
    let mut m = WorkloadMonitor::new(MonitorConfig::default()).unwrap();
    let e = m.update_estimate(10_000);
    assert_eq!(e.value, 1.0);
    assert_eq!(e.as_of, 10_000);
    assert_eq!(e.samples_absorbed, 0);
}

#[test]
fn monitor_rejects_malformed_batches() {
    let mut m = WorkloadMonitor::new(MonitorConfig::default()).unwrap();
    assert!(m.on_batch_completed(&stats(100, 0)).is_err());
    assert!(m.on_batch_completed(&stats(0, 100)).is_err());
    assert_eq!(m.pending_samples(), 0);
}

proptest! {
    #[test]
    fn tracker_conserves_records(stream in reports()) {
        let mut t = tracker(TrackerConfig { retain_windows: 10_000, ..TrackerConfig::default() });
        feed(&mut t, &stream);
        let end = stream.last().unwrap().0;
        t.close_until(end - end % WINDOW);
        let closed: u64 = t.get_records().iter().map(|r| r.record_count).sum();
        let total: u64 = stream.iter().map(|r| r.1).sum();
        prop_assert_eq!(closed + t.open_window_count(), total);
        prop_assert_eq!(t.dropped_reports(), 0);
        for (i, r) in t.get_records().iter().enumerate() {
            prop_assert_eq!(r.window_start, i as u64 * WINDOW);
            prop_assert!((r.rate - r.record_count as f64 * 1000.0 / WINDOW as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn tracker_is_deterministic(stream in reports()) {
        let run = || {
            let mut t = tracker(TrackerConfig::default());
            feed(&mut t, &stream);
            (t.get_records(), t.prediction_outcomes().to_vec(), t.get_model().copied())
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn retained_history_is_bounded(stream in reports(), retain in 5usize..12) {
        let mut t = tracker(TrackerConfig { retain_windows: retain, ..TrackerConfig::default() });
        feed(&mut t, &stream);
        prop_assert!(t.get_records().len() <= retain);
    }

    #[test]
    fn estimate_stays_in_the_convex_hull(
        batches in prop::collection::vec(prop::collection::vec((1u64..10_000, 200u64..5_000), 0..6), 1..30),
        a in 0.05f64..1.0,
    ) {
        let mut m = WorkloadMonitor::new(MonitorConfig { smoothing_coefficient: a, initial_estimate: 1.0 }).unwrap();
        for (tick, group) in batches.iter().enumerate() {
            let before = m.current().value;
            let mut lo = before;
            let mut hi = before;
            for &(delay, interval) in group {
                let eta = m.on_batch_completed(&stats(delay, interval)).unwrap();
                lo = lo.min(eta);
                hi = hi.max(eta);
            }
            let after = m.update_estimate(tick as u64 * 10_000).value;
            prop_assert!(after >= lo - 1e-12 && after <= hi + 1e-12, "{after} not in [{lo}, {hi}]");
            if group.is_empty() {
                prop_assert_eq!(after, before);
            }
        }
    }

    #[test]
    fn monitor_is_deterministic(samples in prop::collection::vec((1u64..10_000, 200u64..5_000), 1..50)) {
        let run = || {
            let mut m = WorkloadMonitor::new(MonitorConfig::default()).unwrap();
            samples
                .chunks(3)
                .enumerate()
                .map(|(i, chunk)| {
                    for &(d, iv) in chunk {
                        m.on_batch_completed(&stats(d, iv)).unwrap();
                    }
                    m.update_estimate(i as u64).value.to_bits()
                })
                .collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }
}
