//! Time-delay embedding, Kronecker power features and the structured data
//! matrices built from them.

use nalgebra::DMatrix;

use crate::error::{Result, RrcError};

/// Default cap on the number of entries a feature vector may have.
pub const DEFAULT_FEATURE_BUDGET: usize = 10_000_000;

/// An n-variate series sampled at T instants; row `t` holds `x_{t+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: DMatrix<f64>,
    times: Option<Vec<f64>>,
    labels: Option<Vec<String>>,
}

impl TimeSeries {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(RrcError::InvalidInput(format!(
                "time series needs at least one sample and one variable, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (rows, _) = values.shape();
            return Err(RrcError::InvalidInput(format!(
                "non-finite value at sample {}, variable {}",
                pos % rows + 1,
                pos / rows + 1
            )));
        }
        Ok(TimeSeries { values, times: None, labels: None })
    }

    /// Build from rows of equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(RrcError::DimensionMismatch {
                context: "time series row length",
                expected: n,
                found: rows[bad].len(),
            });
        }
        TimeSeries::new(DMatrix::from_fn(rows.len(), n, |t, j| rows[t][j]))
    }

    pub fn scalar(values: &[f64]) -> Result<Self> {
        TimeSeries::new(DMatrix::from_column_slice(values.len(), 1, values))
    }

    pub fn with_times(mut self, times: Vec<f64>) -> Result<Self> {
        if times.len() != self.len() {
            return Err(RrcError::DimensionMismatch {
                context: "timestamps",
                expected: self.len(),
                found: times.len(),
            });
        }
        self.times = Some(times);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.dim() {
            return Err(RrcError::DimensionMismatch {
                context: "variable labels",
                expected: self.dim(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Sample count T.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Variable count n.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn times(&self) -> Option<&[f64]> {
        self.times.as_deref()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Uniform spacing inferred from the first two timestamps.
    pub fn dt(&self) -> Option<f64> {
        match self.times.as_deref() {
            Some([a, b, ..]) => Some(b - a),
            _ => None,
        }
    }

    /// Rows `start..end` (0-based, half open), keeping timestamps and labels.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(RrcError::InvalidInput(format!(
                "invalid row range {start}..{end} for a series of length {}",
                self.len()
            )));
        }
        Ok(TimeSeries {
            values: self.values.rows(start, end - start).clone_owned(),
            times: self.times.as_ref().map(|t| t[start..end].to_vec()),
            labels: self.labels.clone(),
        })
    }
}

/// Lag (window length) and tensor order of the polynomial features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingConfig {
    pub lag: usize,
    pub order: usize,
}

impl EmbeddingConfig {
    pub fn new(lag: usize, order: usize) -> Result<Self> {
        if lag == 0 || order == 0 {
            return Err(RrcError::InvalidInput(format!(
                "lag and order must be positive, got lag = {lag}, order = {order}"
            )));
        }
        Ok(EmbeddingConfig { lag, order })
    }

    /// Length of the feature vector for an n-variate series.
    pub fn feature_dim(&self, n: usize) -> Result<usize> {
        let window = n.checked_mul(self.lag).ok_or_else(|| RrcError::FeatureBudget {
            requested: format!("{n} * {}", self.lag),
            budget: DEFAULT_FEATURE_BUDGET,
        })?;
        feature_dim(window, self.order)
    }
}

/// `d_p(m) = m + m^2 + ... + m^p + 1`, computed with overflow checks.
///
/// This is the sum form of `m (m^p - 1) / (m - 1) + 1`, which stays valid at
/// `m = 1`.
pub fn feature_dim(m: usize, p: usize) -> Result<usize> {
    let overflow = || RrcError::FeatureBudget {
        requested: format!("d_{p}({m})"),
        budget: DEFAULT_FEATURE_BUDGET,
    };
    let mut total: usize = 1;
    let mut power: usize = 1;
    for _ in 0..p {
        power = power.checked_mul(m).ok_or_else(overflow)?;
        total = total.checked_add(power).ok_or_else(overflow)?;
    }
    Ok(total)
}

/// The window `x_L(t)` for 1-based `t` in `[L, T]`: variable blocks laid out
/// one after another, each holding `x_{t-L+1}, ..., x_t` oldest first.
pub fn delay_embed(series: &TimeSeries, lag: usize, t: usize) -> Result<Vec<f64>> {
    if lag == 0 {
        return Err(RrcError::InvalidInput("lag must be positive".into()));
    }
    let total = series.len();
    if t < lag || t > total {
        return Err(RrcError::OutOfRange { t, lo: lag, hi: total });
    }
    Ok(window_at(series.values(), lag, t))
}

pub(crate) fn window_at(values: &DMatrix<f64>, lag: usize, t: usize) -> Vec<f64> {
    let start = t - lag;
    let mut out = Vec::with_capacity(values.ncols() * lag);
    for j in 0..values.ncols() {
        out.extend((start..t).map(|s| values[(s, j)]));
    }
    out
}

/// `x^{(x)p}` with the `x (x) x^{(x)(p-1)}` ordering.
pub fn kron_power(x: &[f64], p: usize) -> Result<Vec<f64>> {
    kron_power_within(x, p, DEFAULT_FEATURE_BUDGET)
}

pub fn kron_power_within(x: &[f64], p: usize, budget: usize) -> Result<Vec<f64>> {
    if p == 0 {
        return Err(RrcError::InvalidInput("tensor order must be at least 1".into()));
    }
    let len = checked_pow(x.len(), p, budget)?;
    let mut acc = x.to_vec();
    for _ in 1..p {
        acc = kron(x, &acc);
    }
    debug_assert_eq!(acc.len(), len);
    Ok(acc)
}

fn kron(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &ai in a {
        out.extend(b.iter().map(|&bj| ai * bj));
    }
    out
}

fn checked_pow(m: usize, p: usize, budget: usize) -> Result<usize> {
    let too_big = || RrcError::FeatureBudget { requested: format!("{m}^{p}"), budget };
    let len = u32::try_from(p)
        .ok()
        .and_then(|e| m.checked_pow(e))
        .ok_or_else(too_big)?;
    if len > budget {
        return Err(too_big());
    }
    Ok(len)
}

/// `eth_p(x) = [x^{(x)1}; ...; x^{(x)p}; 1]`.
pub fn eth_map(x: &[f64], p: usize) -> Result<Vec<f64>> {
    eth_map_within(x, p, DEFAULT_FEATURE_BUDGET)
}

pub fn eth_map_within(x: &[f64], p: usize, budget: usize) -> Result<Vec<f64>> {
    if p == 0 {
        return Err(RrcError::InvalidInput("tensor order must be at least 1".into()));
    }
    let dim = feature_dim(x.len(), p)?;
    if dim > budget {
        return Err(RrcError::FeatureBudget { requested: format!("d_{p}({})", x.len()), budget });
    }
    let mut out = Vec::with_capacity(dim);
    let mut power = x.to_vec();
    out.extend_from_slice(&power);
    for _ in 1..p {
        power = kron(x, &power);
        out.extend_from_slice(&power);
    }
    out.push(1.0);
    Ok(out)
}

/// Feature matrix `H0` (columns `eth_p(x_L(t))`) and target matrix `H1`
/// (columns `y_L(t)`) for `t = L..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrices {
    pub h0: DMatrix<f64>,
    pub h1: DMatrix<f64>,
    /// First and last covered time index (1-based, inclusive).
    pub t_range: (usize, usize),
}

pub fn build_data_matrices(x: &TimeSeries, y: &TimeSeries, cfg: &EmbeddingConfig) -> Result<DataMatrices> {
    if x.len() != y.len() {
        return Err(RrcError::DimensionMismatch {
            context: "input/target series length",
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.dim() != y.dim() {
        return Err(RrcError::DimensionMismatch {
            context: "input/target variable count",
            expected: x.dim(),
            found: y.dim(),
        });
    }
    let total = x.len();
    if total < cfg.lag {
        return Err(RrcError::InvalidInput(format!(
            "series of length {total} is shorter than the lag {}",
            cfg.lag
        )));
    }
    let dim = cfg.feature_dim(x.dim())?;
    let cols = total - cfg.lag + 1;
    if dim.saturating_mul(cols) > DEFAULT_FEATURE_BUDGET * 10 {
        return Err(RrcError::FeatureBudget {
            requested: format!("{dim} x {cols} feature matrix"),
            budget: DEFAULT_FEATURE_BUDGET * 10,
        });
    }
    let window_len = x.dim() * cfg.lag;
    let mut h0 = DMatrix::zeros(dim, cols);
    let mut h1 = DMatrix::zeros(window_len, cols);
    for k in 0..cols {
        let t = cfg.lag + k;
        let features = eth_map(&window_at(x.values(), cfg.lag, t), cfg.order)?;
        h0.column_mut(k).copy_from_slice(&features);
        h1.column_mut(k).copy_from_slice(&window_at(y.values(), cfg.lag, t));
    }
    Ok(DataMatrices { h0, h1, t_range: (cfg.lag, total) })
}
