//! Input-rate functions driving the simulator.
//!
//! Every generator maps simulated milliseconds to an arrival rate in records
//! per second and can integrate itself analytically, so the engine never has
//! to sample the rate numerically.

use std::f64::consts::TAU;
use std::path::Path;

use thiserror::Error;

use crate::Millis;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("invalid trace parameter: {0}")]
    Domain(String),
    #[error("trace row {row}: {msg}")]
    Parse { row: u64, msg: String },
    #[error("trace file has no data rows")]
    Empty,
    #[error("cannot read trace file: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TraceError>;

/// How the value column of a trace file is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceMode {
    /// Instantaneous rate at each timestamp; linear in between.
    Rate,
    /// Number of records observed from this row's timestamp to the next.
    Count,
}

impl std::str::FromStr for TraceMode {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rate" => Ok(Self::Rate),
            "count" => Ok(Self::Count),
            other => Err(TraceError::Domain(format!("unknown trace mode {other:?}"))),
        }
    }
}

/// Parsed rows of a `timestamp_s,value` trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub rows: Vec<(f64, f64)>,
    pub mode: TraceMode,
}

impl TraceFile {
    pub fn parse(text: &str, mode: TraceMode) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());

        let mut rows: Vec<(f64, f64)> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| TraceError::Parse {
                row: e.position().map_or(0, |p| p.line()),
                msg: e.to_string(),
            })?;
            let row = record.position().map_or(0, |p| p.line());
            let field = |i: usize| -> Result<f64> {
                let raw = record.get(i).ok_or_else(|| TraceError::Parse {
                    row,
                    msg: format!("expected 2 columns, found {}", record.len()),
                })?;
                raw.parse::<f64>().map_err(|_| TraceError::Parse {
                    row,
                    msg: format!("not a number: {raw:?}"),
                })
            };
            let (ts, value) = (field(0)?, field(1)?);
            if !ts.is_finite() || !value.is_finite() {
                return Err(TraceError::Parse { row, msg: "non-finite value".into() });
            }
            if value < 0.0 {
                return Err(TraceError::Parse { row, msg: format!("negative value {value}") });
            }
            if let Some(&(prev, _)) = rows.last() {
                if ts <= prev {
                    return Err(TraceError::Parse {
                        row,
                        msg: format!("timestamp {ts} does not increase (previous {prev})"),
                    });
                }
            }
            rows.push((ts, value));
        }
        if rows.is_empty() {
            return Err(TraceError::Empty);
        }
        if mode == TraceMode::Count && rows.len() < 2 {
            return Err(TraceError::Parse {
                row: 2,
                msg: "count mode needs at least two rows to know the row interval".into(),
            });
        }
        Ok(Self { rows, mode })
    }

    pub fn load(path: &Path, mode: TraceMode) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, mode)
    }
}

/// Piecewise rate built from a trace file, in simulated milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRate {
    /// Knot times in ms, starting at 0.
    knots: Vec<f64>,
    /// Rate at each knot (linear) or over `[knot_i, knot_{i+1})` (constant).
    rates: Vec<f64>,
    linear: bool,
    /// Cumulative record count at each knot.
    prefix: Vec<f64>,
}

impl TraceRate {
    fn new(file: &TraceFile, time_scale: f64, rate_scale: f64) -> Result<Self> {
        if !(time_scale > 0.0 && time_scale.is_finite()) || !(rate_scale > 0.0 && rate_scale.is_finite()) {
            return Err(TraceError::Domain(format!(
                "scales must be positive (time {time_scale}, rate {rate_scale})"
            )));
        }
        let t0 = file.rows[0].0;
        let mut knots: Vec<f64> = file
            .rows
            .iter()
            .map(|(t, _)| (t - t0) * time_scale * 1000.0)
            .collect();
        let (rates, linear) = match file.mode {
            TraceMode::Rate => (file.rows.iter().map(|(_, v)| v * rate_scale).collect(), true),
            TraceMode::Count => {
                let n = file.rows.len();
                // The last row spans the same width as the one before it.
                let last_width = knots[n - 1] - knots[n - 2];
                knots.push(knots[n - 1] + last_width);
                let rates = (0..n)
                    .map(|i| {
                        let width_s = (knots[i + 1] - knots[i]) / 1000.0;
                        file.rows[i].1 * rate_scale / width_s
                    })
                    .collect::<Vec<f64>>();
                (rates, false)
            }
        };

        let mut prefix = Vec::with_capacity(knots.len());
        prefix.push(0.0);
        for i in 1..knots.len() {
            let width_s = (knots[i] - knots[i - 1]) / 1000.0;
            let area = if linear {
                0.5 * (rates[i - 1] + rates[i]) * width_s
            } else {
                rates[i - 1] * width_s
            };
            prefix.push(prefix[i - 1] + area);
        }
        Ok(Self { knots, rates, linear, prefix })
    }

    /// Largest rate on `[t0, t1]`: attained at an endpoint or a knot inside.
    fn max_between(&self, t0: f64, t1: f64) -> f64 {
        let inside = self.knots.iter().zip(&self.rates).filter(|(k, _)| **k > t0 && **k < t1);
        inside.fold(self.rate(t0).max(self.rate(t1)), |m, (_, r)| m.max(*r))
    }

    fn end(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    /// Index of the segment containing `t`, i.e. the largest `i` with `knots[i] <= t`.
    fn segment(&self, t: f64) -> usize {
        self.knots.partition_point(|k| *k <= t).saturating_sub(1)
    }

    fn rate(&self, t: f64) -> f64 {
        if self.linear {
            if t >= self.end() {
                return *self.rates.last().unwrap();
            }
            let i = self.segment(t);
            let (k0, k1) = (self.knots[i], self.knots[i + 1]);
            let w = (t - k0) / (k1 - k0);
            self.rates[i] + w * (self.rates[i + 1] - self.rates[i])
        } else {
            let i = self.segment(t).min(self.rates.len() - 1);
            self.rates[i]
        }
    }

    fn cumulative(&self, t: f64) -> f64 {
        let end = self.end();
        if t >= end {
            let tail = *self.rates.last().unwrap();
            return self.prefix[self.prefix.len() - 1] + tail * (t - end) / 1000.0;
        }
        let i = self.segment(t);
        let dt_s = (t - self.knots[i]) / 1000.0;
        let part = if self.linear {
            let r_t = self.rate(t);
            0.5 * (self.rates[i] + r_t) * dt_s
        } else {
            self.rates[i] * dt_s
        };
        self.prefix[i] + part
    }
}

/// Arrival rate over simulated time, in records per second.
#[derive(Debug, Clone, PartialEq)]
pub enum RateFunction {
    Constant { rate: f64 },
    Step { before: f64, after: f64, switch_ms: Millis },
    Sinusoid { base: f64, amplitude: f64, period_ms: Millis },
    Trace(TraceRate),
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(TraceError::Domain(format!("{name} must be a non-negative rate, got {v}")))
    }
}

impl RateFunction {
    pub fn constant(rate: f64) -> Result<Self> {
        check_rate("rate", rate)?;
        Ok(Self::Constant { rate })
    }

    pub fn step(before: f64, after: f64, switch_ms: Millis) -> Result<Self> {
        check_rate("rate_before", before)?;
        check_rate("rate_after", after)?;
        Ok(Self::Step { before, after, switch_ms })
    }

    pub fn sinusoid(base: f64, amplitude: f64, period_ms: Millis) -> Result<Self> {
        check_rate("amplitude", amplitude)?;
        if !(base.is_finite() && base >= amplitude) {
            return Err(TraceError::Domain(format!(
                "base {base} below amplitude {amplitude} would produce negative rates"
            )));
        }
        if period_ms == 0 {
            return Err(TraceError::Domain("sinusoid period must be positive".into()));
        }
        Ok(Self::Sinusoid { base, amplitude, period_ms })
    }

    pub fn from_csv(file: &TraceFile, time_scale: f64, rate_scale: f64) -> Result<Self> {
        Ok(Self::Trace(TraceRate::new(file, time_scale, rate_scale)?))
    }

    /// Rate at `t_ms`, records per second.
    pub fn rate_at(&self, t_ms: f64) -> f64 {
        match self {
            Self::Constant { rate } => *rate,
            Self::Step { before, after, switch_ms } => {
                if t_ms < *switch_ms as f64 {
                    *before
                } else {
                    *after
                }
            }
            Self::Sinusoid { base, amplitude, period_ms } => {
                (base + amplitude * (TAU * t_ms / *period_ms as f64).sin()).max(0.0)
            }
            Self::Trace(tr) => tr.rate(t_ms.max(0.0)),
        }
    }

    /// Records arriving in `[0, t_ms)`.
    pub fn cumulative(&self, t_ms: f64) -> f64 {
        let t_ms = t_ms.max(0.0);
        match self {
            Self::Constant { rate } => rate * t_ms / 1000.0,
            Self::Step { before, after, switch_ms } => {
                let sw = *switch_ms as f64;
                if t_ms <= sw {
                    before * t_ms / 1000.0
                } else {
                    (before * sw + after * (t_ms - sw)) / 1000.0
                }
            }
            Self::Sinusoid { base, amplitude, period_ms } => {
                let p = *period_ms as f64;
                (base * t_ms + amplitude * p / TAU * (1.0 - (TAU * t_ms / p).cos())) / 1000.0
            }
            Self::Trace(tr) => tr.cumulative(t_ms),
        }
    }

    /// Records arriving in `[t0_ms, t1_ms)`.
    pub fn integral(&self, t0_ms: f64, t1_ms: f64) -> f64 {
        self.cumulative(t1_ms) - self.cumulative(t0_ms)
    }

    /// Last time at which the function is backed by data, if bounded.
    pub fn domain_end_ms(&self) -> Option<f64> {
        match self {
            Self::Trace(tr) => Some(tr.end()),
            _ => None,
        }
    }

    /// Largest rate over `[t0_ms, t1_ms]`.
    pub fn max_rate(&self, t0_ms: f64, t1_ms: f64) -> f64 {
        match self {
            Self::Constant { rate } => *rate,
            Self::Step { before, after, switch_ms } => {
                let sw = *switch_ms as f64;
                if t1_ms < sw {
                    *before
                } else if t0_ms >= sw {
                    *after
                } else {
                    before.max(*after)
                }
            }
            Self::Trace(tr) => tr.max_between(t0_ms.max(0.0), t1_ms.max(0.0)),
            Self::Sinusoid { .. } => {
                let mut best = self.rate_at(t0_ms).max(self.rate_at(t1_ms));
                let mut t = t0_ms;
                while t < t1_ms {
                    best = best.max(self.rate_at(t));
                    t += 1.0;
                }
                best
            }
        }
    }
}

/// Synthetic 08:00-20:00 day trace bundled with the crate (rate mode, 10-minute rows).
pub const BUNDLED_DAY_TRACE: &str = include_str!("../data/day_trace.csv");

pub fn bundled_day_trace() -> TraceFile {
    TraceFile::parse(BUNDLED_DAY_TRACE, TraceMode::Rate).expect("bundled day trace is valid")
}
