//! Flat `section.key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::engine::{EngineConfig, Mode};
use crate::fuzzy::RuleTable;
use crate::trace::{self, RateFunction, TraceFile, TraceMode};
use crate::Millis;

use super::HarnessError;

/// Name accepted by `trace.file` for the day trace compiled into the binary.
pub const BUNDLED_DAY: &str = "bundled:day";

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    Bundled,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSpec {
    Constant { rate: f64 },
    Step { before: f64, after: f64, switch_ms: Millis },
    Sinusoid { base: f64, amplitude: f64, period_ms: Millis },
    Csv { source: TraceSource, mode: TraceMode, time_scale: f64, rate_scale: f64 },
}

impl TraceSpec {
    pub fn build(&self) -> Result<RateFunction, HarnessError> {
        let f = match self {
            Self::Constant { rate } => RateFunction::constant(*rate),
            Self::Step { before, after, switch_ms } => RateFunction::step(*before, *after, *switch_ms),
            Self::Sinusoid { base, amplitude, period_ms } => {
                RateFunction::sinusoid(*base, *amplitude, *period_ms)
            }
            Self::Csv { source, mode, time_scale, rate_scale } => {
                let file = match source {
                    TraceSource::Bundled => {
                        TraceFile::parse(trace::BUNDLED_DAY_TRACE, *mode).map_err(HarnessError::Trace)?
                    }
                    TraceSource::File(path) => TraceFile::load(path, *mode).map_err(HarnessError::Trace)?,
                };
                RateFunction::from_csv(&file, *time_scale, *rate_scale)
            }
        };
        f.map_err(HarnessError::Trace)
    }
}

/// A fully parsed run: engine settings, input trace and output location.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub engine: EngineConfig,
    pub trace: TraceSpec,
    /// `None` means "run until the trace ends"; only valid for CSV traces.
    pub duration: Option<Millis>,
    pub out_dir: Option<PathBuf>,
    pub preset: Option<String>,
    pub disable_prediction: bool,
    pub vanilla: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    /// Parses config text. Relative file paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, HarnessError> {
        let mut kv = KeyValues::parse(text)?;
        let resolve = |p: String| -> PathBuf {
            let p = PathBuf::from(p);
            match base_dir {
                Some(dir) if p.is_relative() => dir.join(p),
                _ => p,
            }
        };

        let mut engine = EngineConfig::default();
        if let Some(b) = kv.get::<Millis>("engine.block_interval_ms")? {
            engine.block_interval = b;
            engine.controller.block_interval = b;
        }
        kv.set(&mut engine.initial_batch_interval, "engine.initial_interval_ms")?;
        kv.set(&mut engine.control_start, "engine.control_start_ms")?;
        kv.set(&mut engine.seed, "engine.seed")?;
        kv.set(&mut engine.jitter, "engine.jitter")?;
        kv.set(&mut engine.workers, "engine.workers")?;
        let mode = kv.take("engine.mode");
        let duration = kv.get::<Millis>("engine.duration_ms")?;

        let c = &mut engine.controller;
        kv.set(&mut c.min_interval, "controller.min_interval_ms")?;
        kv.set(&mut c.max_interval, "controller.max_interval_ms")?;
        kv.set(&mut c.control_period, "controller.control_period_ms")?;
        kv.set(&mut c.blocks_per_level, "controller.blocks_per_level")?;
        if let Some(v) = kv.take("controller.prediction") {
            c.prediction_enabled = parse_flag("controller.prediction", &v)?;
        }
        if let Some(p) = kv.take("controller.rules") {
            let path = resolve(p);
            engine.rules = RuleTable::load(&path).map_err(|e| HarnessError::Usage(e.to_string()))?;
        }

        kv.set(&mut engine.monitor.smoothing_coefficient, "monitor.smoothing")?;
        kv.set(&mut engine.monitor.initial_estimate, "monitor.initial_estimate")?;

        kv.set(&mut engine.tracker.resample_interval, "tracker.resample_interval_ms")?;
        kv.set(&mut engine.tracker.train_num, "tracker.train_num")?;
        kv.set(&mut engine.tracker.retain_windows, "tracker.retain_windows")?;
        kv.set(&mut engine.tracker.retrain_every, "tracker.retrain_every")?;

        kv.set(&mut engine.cost_model.fixed_overhead, "cost.fixed_ms")?;
        kv.set(&mut engine.cost_model.per_record_cost, "cost.per_record_ms")?;
        kv.set(&mut engine.cost_model.per_block_cost, "cost.per_block_ms")?;

        let kind = kv
            .take("trace.kind")
            .ok_or_else(|| HarnessError::Usage("missing trace.kind".into()))?;
        let trace = match kind.as_str() {
            "constant" => TraceSpec::Constant { rate: kv.require("trace.rate")? },
            "step" => TraceSpec::Step {
                before: kv.require("trace.before")?,
                after: kv.require("trace.after")?,
                switch_ms: kv.require("trace.switch_ms")?,
            },
            "sinusoid" => TraceSpec::Sinusoid {
                base: kv.require("trace.base")?,
                amplitude: kv.require("trace.amplitude")?,
                period_ms: kv.require("trace.period_ms")?,
            },
            "csv" => {
                let file = kv
                    .take("trace.file")
                    .ok_or_else(|| HarnessError::Usage("missing trace.file".into()))?;
                let source = if file == BUNDLED_DAY {
                    TraceSource::Bundled
                } else {
                    TraceSource::File(resolve(file))
                };
                let mode = match kv.take("trace.mode") {
                    Some(m) => m.parse().map_err(|e: trace::TraceError| HarnessError::Usage(e.to_string()))?,
                    None => TraceMode::Rate,
                };
                TraceSpec::Csv {
                    source,
                    mode,
                    time_scale: kv.get("trace.time_scale")?.unwrap_or(1.0),
                    rate_scale: kv.get("trace.rate_scale")?.unwrap_or(1.0),
                }
            }
            other => return Err(HarnessError::Usage(format!("unknown trace.kind {other:?}"))),
        };

        let out_dir = kv.take("output.dir").map(PathBuf::from);
        let preset = kv.take("run.preset");
        let disable_prediction = match kv.take("run.disable_prediction") {
            Some(v) => parse_flag("run.disable_prediction", &v)?,
            None => false,
        };
        let mut vanilla = match kv.take("run.vanilla") {
            Some(v) => parse_flag("run.vanilla", &v)?,
            None => false,
        };
        if let Some(m) = mode {
            let m: Mode = m.parse().map_err(|e: crate::EngineError| HarnessError::Usage(e.to_string()))?;
            vanilla |= m == Mode::Vanilla;
        }
        kv.finish()?;

        let mut cfg = Self { engine, trace, duration, out_dir, preset, disable_prediction, vanilla };
        cfg.apply_flags();
        Ok(cfg)
    }

    /// Pushes the run flags down into the engine config.
    pub fn apply_flags(&mut self) {
        if self.disable_prediction {
            self.engine.controller.prediction_enabled = false;
        }
        self.engine.mode = if self.vanilla { Mode::Vanilla } else { Mode::Adaptive };
    }

    /// Builds the engine config and rate function, checking every invariant
    /// the engine would otherwise trip over mid-run.
    pub fn resolve(&self) -> Result<(EngineConfig, RateFunction), HarnessError> {
        let rate = self.trace.build()?;
        let mut engine = self.engine.clone();
        engine.duration = match (self.duration, rate.domain_end_ms()) {
            (Some(d), _) => d,
            (None, Some(end)) => end.floor() as Millis,
            (None, None) => {
                return Err(HarnessError::Usage(
                    "engine.duration_ms is required for unbounded traces".into(),
                ))
            }
        };
        engine.validate().map_err(HarnessError::Config)?;
        if let Some(end) = rate.domain_end_ms() {
            if engine.duration as f64 > end {
                return Err(HarnessError::Config(crate::EngineError::Config(format!(
                    "duration {} ms runs past the trace end at {end} ms",
                    engine.duration
                ))));
            }
        }
        Ok((engine, rate))
    }
}

fn parse_flag(key: &str, v: &str) -> Result<bool, HarnessError> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(HarnessError::Usage(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

/// Parsed lines, consumed key by key so leftovers can be reported.
struct KeyValues(BTreeMap<String, (usize, String)>);

impl KeyValues {
    fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let line_no = i + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Usage(format!("line {line_no}: expected `key = value`")))?;
            let key = key.trim();
            if !key.contains('.') || key.split('.').any(str::is_empty) {
                return Err(HarnessError::Usage(format!(
                    "line {line_no}: key {key:?} is not of the form section.key"
                )));
            }
            if let Some((first, _)) = map.insert(key.to_string(), (line_no, value.trim().to_string())) {
                return Err(HarnessError::Usage(format!(
                    "line {line_no}: {key} already set on line {first}"
                )));
            }
        }
        Ok(Self(map))
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.0.remove(key).map(|(_, v)| v)
    }

    fn get<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, HarnessError>
    where
        T::Err: std::fmt::Display,
    {
        match self.0.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| HarnessError::Usage(format!("line {line}: {key} = {v:?}: {e}"))),
        }
    }

    fn set<T: std::str::FromStr>(&mut self, slot: &mut T, key: &str) -> Result<(), HarnessError>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn require<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, HarnessError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| HarnessError::Usage(format!("missing {key}")))
    }

    fn finish(self) -> Result<(), HarnessError> {
        match self.0.iter().next() {
            None => Ok(()),
            Some((k, (line, _))) => Err(HarnessError::Usage(format!("line {line}: unknown key {k}"))),
        }
    }
}
