//! Fuzzy batch-interval controller.
//!
//! Two crisp inputs, the relative traffic change `C` and the workload
//! deviation `D = S - 1`, are fuzzified over five triangular labels, every
//! rule of the 5x5 expert table fires with `min` strength, and the
//! strength-weighted mean of the rule levels is rounded to an integer
//! adjustment level in `-2..=2`. A level moves the batch interval by whole
//! block intervals.

use std::fmt;
use std::path::Path;

use log::debug;
use thiserror::Error;

use crate::monitor::{WorkloadEstimate, WorkloadMonitor};
use crate::tracker::TrafficTracker;
use crate::Millis;

/// Inputs are assumed to stay within this relative range and are clamped to it.
pub const INPUT_LIMIT: f64 = 0.20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FuzzyError {
    #[error("rule table line {line}: {msg}")]
    RuleParse { line: usize, msg: String },
    #[error("rule table violates {0}")]
    RuleShape(&'static str),
    #[error("invalid controller config: {0}")]
    Config(String),
    #[error("cannot read rule table: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FuzzyLabel {
    NB,
    NS,
    ZO,
    PS,
    PB,
}

impl FuzzyLabel {
    pub const ALL: [FuzzyLabel; 5] = [Self::NB, Self::NS, Self::ZO, Self::PS, Self::PB];

    pub fn index(self) -> usize {
        self as usize
    }

    /// NB <-> PB, NS <-> PS, ZO fixed.
    pub fn mirror(self) -> Self {
        Self::ALL[4 - self.index()]
    }
}

impl fmt::Display for FuzzyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Membership degree of each label, indexed like [`FuzzyLabel::ALL`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Memberships(pub [f64; 5]);

impl Memberships {
    pub fn degree(&self, label: FuzzyLabel) -> f64 {
        self.0[label.index()]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Labels with a nonzero degree.
    pub fn active(&self) -> impl Iterator<Item = (FuzzyLabel, f64)> + '_ {
        FuzzyLabel::ALL.into_iter().zip(self.0).filter(|(_, d)| *d > 0.0)
    }
}

/// Five symmetric triangles with 50% overlap and saturating shoulders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MembershipPartition {
    pub centers: [f64; 5],
    pub half_width: f64,
}

impl Default for MembershipPartition {
    fn default() -> Self {
        Self { centers: [-0.20, -0.10, 0.0, 0.10, 0.20], half_width: 0.10 }
    }
}

impl MembershipPartition {
    pub fn clamp(&self, x: f64) -> f64 {
        if x.is_nan() {
            return 0.0;
        }
        x.clamp(self.centers[0], self.centers[4])
    }

    pub fn fuzzify(&self, x: f64) -> Memberships {
        let x = self.clamp(x);
        let mut degrees = [0.0; 5];
        for (d, c) in degrees.iter_mut().zip(self.centers) {
            *d = (1.0 - (x - c).abs() / self.half_width).max(0.0);
        }
        Memberships(degrees)
    }
}

/// Expert rule table: `rows[d][c]` is the level for D-label `d`, C-label `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleTable {
    rows: [[i8; 5]; 5],
}

impl Default for RuleTable {
    fn default() -> Self {
        Self {
            rows: [
                [-2, -1, -1, 0, 0],
                [-1, -1, 0, 0, 0],
                [-1, 0, 0, 0, 1],
                [0, 0, 0, 1, 1],
                [0, 0, 1, 1, 2],
            ],
        }
    }
}

impl RuleTable {
    pub fn new(rows: [[i8; 5]; 5]) -> Result<Self, FuzzyError> {
        let table = Self { rows };
        if rows.iter().flatten().any(|v| !(-2..=2).contains(v)) {
            return Err(FuzzyError::RuleShape("level range -2..=2"));
        }
        if !table.is_monotone() {
            return Err(FuzzyError::RuleShape("row/column monotonicity"));
        }
        if !table.is_antisymmetric() {
            return Err(FuzzyError::RuleShape("antisymmetry under label negation"));
        }
        Ok(table)
    }

    /// Parses five lines of five comma-separated levels. Blank lines and
    /// `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, FuzzyError> {
        let mut rows = [[0i8; 5]; 5];
        let mut filled = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let line_no = lineno + 1;
            if filled == 5 {
                return Err(FuzzyError::RuleParse { line: line_no, msg: "more than 5 rows".into() });
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 5 {
                return Err(FuzzyError::RuleParse {
                    line: line_no,
                    msg: format!("expected 5 entries, found {}", cells.len()),
                });
            }
            for (slot, cell) in rows[filled].iter_mut().zip(&cells) {
                let v: i8 = cell.trim_start_matches('+').parse().map_err(|_| FuzzyError::RuleParse {
                    line: line_no,
                    msg: format!("not an integer level: {cell:?}"),
                })?;
                if !(-2..=2).contains(&v) {
                    return Err(FuzzyError::RuleParse {
                        line: line_no,
                        msg: format!("level {v} outside -2..=2"),
                    });
                }
                *slot = v;
            }
            filled += 1;
        }
        if filled != 5 {
            return Err(FuzzyError::RuleParse { line: 0, msg: format!("expected 5 rows, found {filled}") });
        }
        Self::new(rows)
    }

    pub fn load(path: &Path) -> Result<Self, FuzzyError> {
        let text = std::fs::read_to_string(path).map_err(|e| FuzzyError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    pub fn rule(&self, c: FuzzyLabel, d: FuzzyLabel) -> i8 {
        self.rows[d.index()][c.index()]
    }

    pub fn rows(&self) -> &[[i8; 5]; 5] {
        &self.rows
    }

    pub fn is_monotone(&self) -> bool {
        (0..5).all(|i| (0..4).all(|j| self.rows[i][j] <= self.rows[i][j + 1] && self.rows[j][i] <= self.rows[j + 1][i]))
    }

    pub fn is_antisymmetric(&self) -> bool {
        FuzzyLabel::ALL.iter().all(|&c| {
            FuzzyLabel::ALL.iter().all(|&d| self.rule(c, d) == -self.rule(c.mirror(), d.mirror()))
        })
    }

    pub fn to_csv(&self) -> String {
        self.rows
            .iter()
            .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub block_interval: Millis,
    pub min_interval: Millis,
    pub max_interval: Millis,
    pub control_period: Millis,
    pub prediction_enabled: bool,
    /// Block intervals moved per output level.
    pub blocks_per_level: u32,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            block_interval: 200,
            min_interval: 400,
            max_interval: 12_000,
            control_period: 10_000,
            prediction_enabled: true,
            blocks_per_level: 1,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), FuzzyError> {
        let b = self.block_interval;
        if b == 0 {
            return Err(FuzzyError::Config("block_interval must be positive".into()));
        }
        for (name, v) in [("min_interval", self.min_interval), ("max_interval", self.max_interval)] {
            if v == 0 || v % b != 0 {
                return Err(FuzzyError::Config(format!(
                    "{name} {v} is not a positive multiple of block_interval {b}"
                )));
            }
        }
        if self.min_interval > self.max_interval {
            return Err(FuzzyError::Config("min_interval exceeds max_interval".into()));
        }
        if self.control_period == 0 {
            return Err(FuzzyError::Config("control_period must be positive".into()));
        }
        if self.blocks_per_level == 0 {
            return Err(FuzzyError::Config("blocks_per_level must be positive".into()));
        }
        Ok(())
    }
}

/// Everything one control tick observed and decided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlDecision {
    pub time: Millis,
    pub previous_interval: Millis,
    pub interval: Millis,
    pub rate_measured: Option<f64>,
    pub rate_predicted: Option<f64>,
    pub traffic_change: f64,
    pub workload_deviation: f64,
    pub level: i32,
    pub workload: WorkloadEstimate,
}

#[derive(Debug, Clone)]
pub struct FuzzyController {
    config: ControllerConfig,
    rules: RuleTable,
    partition: MembershipPartition,
}

impl FuzzyController {
    pub fn new(config: ControllerConfig, rules: RuleTable) -> Result<Self, FuzzyError> {
        config.validate()?;
        Ok(Self { config, rules, partition: MembershipPartition::default() })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn rules(&self) -> &RuleTable {
        &self.rules
    }

    pub fn partition(&self) -> &MembershipPartition {
        &self.partition
    }

    /// Relative change `(q_next - q_now) / q_now`, clamped to the input range.
    pub fn compute_traffic_change(&self, q_next: f64, q_now: f64) -> f64 {
        if q_now <= 0.0 || !q_now.is_finite() || !q_next.is_finite() {
            debug!("no basis for relative traffic change (q_now={q_now}, q_next={q_next})");
            return 0.0;
        }
        self.partition.clamp((q_next - q_now) / q_now)
    }

    pub fn compute_workload_deviation(&self, s: f64) -> f64 {
        self.partition.clamp(s - 1.0)
    }

    pub fn fuzzify(&self, x: f64) -> Memberships {
        self.partition.fuzzify(x)
    }

    /// Rule firing and defuzzification to an integer level.
    pub fn infer(&self, c: f64, d: f64) -> i32 {
        let mc = self.fuzzify(c);
        let md = self.fuzzify(d);
        let mut weight = 0.0;
        let mut acc = 0.0;
        for (cl, dc) in mc.active() {
            for (dl, dd) in md.active() {
                let strength = dc.min(dd);
                weight += strength;
                acc += strength * f64::from(self.rules.rule(cl, dl));
            }
        }
        if weight == 0.0 {
            return 0;
        }
        // Snap away float noise so exact halves round away from zero.
        let mean = (acc / weight * 1e9).round() / 1e9;
        mean.round() as i32
    }

    /// Moves `current` by `level` steps and clamps to the configured range.
    pub fn adjust_interval(&self, current: Millis, level: i32) -> Millis {
        let step = self.config.block_interval as i64 * i64::from(self.config.blocks_per_level);
        let target = current as i64 + i64::from(level) * step;
        let clamped = target.clamp(self.config.min_interval as i64, self.config.max_interval as i64) as Millis;
        // Snap to the block grid; min and max are both on it.
        clamped - clamped % self.config.block_interval
    }

    /// One full control cycle: refresh inputs, fuzzify, fire rules,
    /// defuzzify and compute the next interval.
    pub fn control_step(
        &self,
        now: Millis,
        current_interval: Millis,
        tracker: &TrafficTracker,
        monitor: &mut WorkloadMonitor,
    ) -> ControlDecision {
        let workload = monitor.update_estimate(now);
        let rate_measured = tracker.get_latest_record().ok().map(|r| r.rate);
        let rate_predicted = if self.config.prediction_enabled {
            match tracker.predict_rate(1) {
                Ok(p) => Some(p),
                Err(e) => {
                    debug!("tracker not ready at {now} ms ({e}); workload-only control");
                    None
                }
            }
        } else {
            rate_measured
        };
        let traffic_change = match (rate_predicted, rate_measured) {
            (Some(next), Some(cur)) if self.config.prediction_enabled => {
                self.compute_traffic_change(next, cur)
            }
            _ => 0.0,
        };
        let workload_deviation = self.compute_workload_deviation(workload.value);
        let level = self.infer(traffic_change, workload_deviation);
        ControlDecision {
            time: now,
            previous_interval: current_interval,
            interval: self.adjust_interval(current_interval, level),
            rate_measured,
            rate_predicted,
            traffic_change,
            workload_deviation,
            level,
            workload,
        }
    }
}
