//! GM(1,1) grey-model forecasting.
//!
//! The model fits the first-order whitening equation
//! `dB1/dt + alpha * B1 = mu` to the accumulated (cumulative-sum) series and
//! recovers fitted and forecast values by differencing the exponential time
//! response. It needs only a handful of points, which is what makes it usable
//! for short-term traffic prediction on a rolling window.

use thiserror::Error;

/// Minimum number of observations a grey model can be fitted on.
pub const MIN_POINTS: usize = 4;

/// Below this magnitude the development coefficient is treated as zero and the
/// time response switches to its linear limit.
pub const EPS_ALPHA: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GreyError {
    #[error("series has {0} points, at least {MIN_POINTS} are required")]
    TooShort(usize),
    #[error("value {value} at index {index} is not a positive finite number")]
    Domain { index: usize, value: f64 },
    #[error("normal equations are singular; the series carries no trend information")]
    Singular,
    #[error("time index must be >= 1")]
    BadIndex,
}

pub type Result<T> = std::result::Result<T, GreyError>;

/// Observed values `B0(1..n)`, validated positive and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries(Vec<f64>);

impl RawSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < MIN_POINTS {
            return Err(GreyError::TooShort(values.len()));
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v <= 0.0)
        {
            return Err(GreyError::Domain { index, value });
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<&[f64]> for RawSeries {
    type Error = GreyError;

    fn try_from(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }
}

/// Cumulative sums `B1(t) = sum_{i<=t} B0(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AccumulatedSeries(Vec<f64>);

impl AccumulatedSeries {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Inverse accumulation: first value, then successive differences.
    pub fn difference(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.0.len());
        let mut prev = 0.0;
        for &v in &self.0 {
            out.push(v - prev);
            prev = v;
        }
        out
    }

    /// Background values `z(t) = (B1(t) + B1(t-1)) / 2` for `t = 2..n`.
    pub fn background(&self) -> Vec<f64> {
        self.0.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

pub fn accumulate(series: &RawSeries) -> AccumulatedSeries {
    let mut sum = 0.0;
    AccumulatedSeries(
        series
            .values()
            .iter()
            .map(|v| {
                sum += v;
                sum
            })
            .collect(),
    )
}

/// Fitted GM(1,1) parameters.
///
/// `offset` is the shift added to every observation before fitting (zero for
/// strictly positive windows). [`GreyModel::predict`] removes it again, while
/// [`GreyModel::response`] stays in the shifted space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreyModel {
    alpha: f64,
    mu: f64,
    first_accumulated: f64,
    train_len: usize,
    offset: f64,
}

impl GreyModel {
    /// Least-squares fit of `B0(t) + alpha * z(t) = mu` for `t = 2..n`.
    pub fn fit(series: &RawSeries) -> Result<Self> {
        let acc = accumulate(series);
        let z = acc.background();
        let y = &series.values()[1..];
        let m = z.len() as f64;

        let sz: f64 = z.iter().sum();
        let sy: f64 = y.iter().sum();
        let szz: f64 = z.iter().map(|v| v * v).sum();
        let szy: f64 = z.iter().zip(y).map(|(a, b)| a * b).sum();

        // Regression of y on -z: slope is alpha, intercept is mu.
        let det = m * szz - sz * sz;
        if det.abs() <= f64::EPSILON * (m * szz).abs() {
            return Err(GreyError::Singular);
        }
        let alpha = -(m * szy - sz * sy) / det;
        let mu = (sy + alpha * sz) / m;
        if !alpha.is_finite() || !mu.is_finite() {
            return Err(GreyError::Singular);
        }

        Ok(Self {
            alpha,
            mu,
            first_accumulated: acc.values()[0],
            train_len: series.len(),
            offset: 0.0,
        })
    }

    /// Fits on arbitrary finite observations, shifting the whole window by
    /// `1 - min` when any value is zero or negative.
    pub fn fit_shifted(values: &[f64]) -> Result<Self> {
        if values.len() < MIN_POINTS {
            return Err(GreyError::TooShort(values.len()));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GreyError::Domain { index, value });
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let offset = if min <= 0.0 { 1.0 - min } else { 0.0 };
        let shifted: Vec<f64> = values.iter().map(|v| v + offset).collect();
        let mut model = Self::fit(&RawSeries::new(shifted)?)?;
        model.offset = offset;
        Ok(model)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn first_accumulated(&self) -> f64 {
        self.first_accumulated
    }

    pub fn train_len(&self) -> usize {
        self.train_len
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn is_degenerate(&self) -> bool {
        self.alpha.abs() < EPS_ALPHA
    }

    /// Time response `B1_hat(t)` of the whitening equation.
    pub fn response(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(GreyError::BadIndex);
        }
        let steps = (t - 1) as f64;
        if self.is_degenerate() {
            return Ok(self.first_accumulated + self.mu * steps);
        }
        let ratio = self.mu / self.alpha;
        Ok((self.first_accumulated - ratio) * (-self.alpha * steps).exp() + ratio)
    }

    /// Fitted value for `t <= train_len`, forecast beyond it.
    pub fn predict(&self, t: usize) -> Result<f64> {
        let value = match t {
            0 => return Err(GreyError::BadIndex),
            1 => self.response(1)?,
            _ => self.response(t)? - self.response(t - 1)?,
        };
        Ok(value - self.offset)
    }
}

/// Fits on `series` and returns forecasts for `n+1 ..= n+horizon`.
pub fn fit_predict(series: &RawSeries, horizon: usize) -> Result<Vec<f64>> {
    let model = GreyModel::fit(series)?;
    let n = series.len();
    (n + 1..=n + horizon).map(|t| model.predict(t)).collect()
}
