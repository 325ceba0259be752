use edgebatch::engine::{run, Engine, EngineConfig, MetricsLog, Mode};
use edgebatch::fuzzy::ControllerConfig;
use edgebatch::trace::RateFunction;
use edgebatch::Millis;
use proptest::prelude::*;

fn config(mode: Mode, interval: Millis, duration: Millis) -> EngineConfig {
    EngineConfig {
        initial_batch_interval: interval,
        controller: ControllerConfig { min_interval: 400, max_interval: 12_000, ..ControllerConfig::default() },
        mode,
        duration,
        ..EngineConfig::default()
    }
}

fn constant(rate: f64) -> RateFunction {
    RateFunction::constant(rate).unwrap()
}

#[test]
fn zero_rate_produces_empty_batches() {
    let log = run(config(Mode::Adaptive, 2000, 120_000), constant(0.0)).unwrap();
    assert_eq!(log.conservation.generated, 0);
    assert!(log.batches().count() > 10);
    for b in log.batches() {
        assert_eq!(b.stats.record_count, 0);
        let cost = 1400 + 2 * b.stats.block_count;
        assert_eq!(b.stats.processing_delay(), cost);
    }
}

#[test]
fn underloaded_fixed_interval_settles_immediately() {
    // 2000 records per 2 s batch cost 1400 + 4 + 20 = 1424 ms.
    let log = run(config(Mode::Vanilla, 2000, 200_000), constant(1000.0)).unwrap();
    let batches: Vec<_> = log.batches().collect();
    assert!(batches.len() > 50);
    for b in &batches {
        assert_eq!(b.stats.scheduling_delay(), 0);
        assert_eq!(b.stats.processing_delay(), 1424);
        assert!((b.eta - 0.712).abs() < 1e-12);
    }
    // The estimate starts at 1 and closes 30% of the remaining gap per tick.
    let ticks: Vec<_> = log.ticks().collect();
    let gap = 0.7f64.powi(ticks.len() as i32 - 1) * (1.0 - 0.712);
    assert!((ticks.last().unwrap().workload - 0.712).abs() <= gap + 1e-9);
}

#[test]
fn overloaded_fixed_interval_queues_without_bound() {
    // A 1 s batch at 10k rec/s costs 1400 + 20 + 10 = 1430 ms.
    let log = run(config(Mode::Vanilla, 1000, 120_000), constant(10_000.0)).unwrap();
    let delays: Vec<Millis> = log.batches().map(|b| b.stats.scheduling_delay()).collect();
    assert!(delays.len() > 20);
    assert!(delays.windows(2).skip(1).all(|w| w[1] > w[0]), "{delays:?}");
    assert!(log.pending_batches > 10);
    let s: Vec<f64> = log.ticks().map(|t| t.workload).collect();
    assert!(s.windows(2).skip(1).all(|w| w[1] > w[0]));
}

#[test]
fn block_sums_track_the_rate_integral() {
    let trace = RateFunction::sinusoid(8000.0, 5000.0, 90_000).unwrap();
    let log = run(config(Mode::Adaptive, 2000, 300_000), trace.clone()).unwrap();
    let mut batches: Vec<_> = log.batches().map(|b| b.stats).collect();
    batches.sort_by_key(|s| s.batch_id);
    let mut cumulative = 0u64;
    let mut prev_fire = 0;
    for s in batches {
        cumulative += s.record_count;
        let expected = trace.cumulative(s.submitted_at as f64);
        assert!((cumulative as f64 - expected).abs() <= 0.5 + 1e-9, "at {}", s.submitted_at);
        let window = trace.integral(prev_fire as f64, s.submitted_at as f64);
        assert!((s.record_count as f64 - window).abs() <= 1.0 + 1e-9);
        assert_eq!(s.block_count, (s.submitted_at - prev_fire) / 200);
        prev_fire = s.submitted_at;
    }
}

#[test]
fn events_never_run_backwards() {
    let trace = RateFunction::step(5000.0, 30_000.0, 60_000).unwrap();
    let mut engine = Engine::new(config(Mode::Adaptive, 2000, 200_000), trace).unwrap();
    let mut last = (0, 0);
    while let Some(e) = engine.step() {
        assert!((e.fire_at, e.sequence) > last || last == (0, 0), "{e:?} after {last:?}");
        assert!(e.fire_at >= last.0);
        last = (e.fire_at, e.sequence);
        assert_eq!(engine.now(), e.fire_at);
    }
    assert!(engine.is_finished());
    let log = engine.log();
    assert!(log.rows.windows(2).all(|w| w[0].time() <= w[1].time()));
}

fn check_invariants(log: &MetricsLog, cfg: &EngineConfig) {
    assert!(log.conservation.holds(), "{:?}", log.conservation);
    let b = cfg.block_interval;
    let c = &cfg.controller;
    let step = b * u64::from(c.blocks_per_level);

    let mut batches: Vec<_> = log.batches().map(|r| r.stats).collect();
    let completion_order: Vec<u64> = batches.iter().map(|s| s.batch_id).collect();
    if cfg.workers == 1 {
        assert!(completion_order.windows(2).all(|w| w[1] == w[0] + 1), "FIFO completion");
    }
    batches.sort_by_key(|s| s.batch_id);
    assert!(batches.windows(2).all(|w| w[0].started_at <= w[1].started_at), "FIFO start");
    for s in &batches {
        assert!(s.submitted_at <= s.started_at && s.started_at < s.completed_at);
        assert_eq!(s.interval_used % b, 0);
        assert!(s.interval_used >= c.min_interval.min(cfg.initial_batch_interval));
        assert!(s.interval_used <= c.max_interval.max(cfg.initial_batch_interval));
    }

    let ticks: Vec<_> = log.ticks().collect();
    for t in &ticks {
        assert_eq!(t.interval % b, 0);
        if t.level.is_some() {
            assert!((c.min_interval..=c.max_interval).contains(&t.interval));
        }
    }
    for w in ticks.windows(2) {
        let delta = w[1].interval.abs_diff(w[0].interval);
        assert!(delta <= 2 * step, "interval jumped by {delta}");
        if w[1].level.is_none() {
            assert_eq!(delta, 0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pipeline_invariants_hold(
        base in 0.0f64..40_000.0,
        amplitude_frac in 0.0f64..1.0,
        period in 20_000u64..200_000,
        initial in 2u64..30,
        jitter in prop_oneof![Just(0.0), 0.0f64..0.3],
        workers in 1usize..4,
        seed in any::<u64>(),
        vanilla in any::<bool>(),
    ) {
        let trace = RateFunction::sinusoid(base, base * amplitude_frac, period).unwrap();
        let cfg = EngineConfig {
            jitter,
            workers,
            seed,
            ..config(if vanilla { Mode::Vanilla } else { Mode::Adaptive }, initial * 200, 250_000)
        };
        let log = run(cfg.clone(), trace.clone()).unwrap();
        check_invariants(&log, &cfg);
        prop_assert_eq!(&log, &run(cfg, trace).unwrap());
    }

    #[test]
    fn seeds_only_matter_with_jitter(seed_a in any::<u64>(), seed_b in any::<u64>()) {
        let trace = constant(12_000.0);
        let a = run(EngineConfig { seed: seed_a, ..config(Mode::Adaptive, 2000, 150_000) }, trace.clone()).unwrap();
        let b = run(EngineConfig { seed: seed_b, ..config(Mode::Adaptive, 2000, 150_000) }, trace).unwrap();
        prop_assert_eq!(a, b);
    }
}
