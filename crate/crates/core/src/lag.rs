//! Autocorrelation-based lag suggestion.

use crate::embedding::TimeSeries;
use crate::error::{Result, RrcError};

/// Per-channel suggestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelLag {
    pub lag: usize,
    /// Zero variance, so the autocorrelation is undefined and the lag is 1.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LagSuggestion {
    pub channels: Vec<ChannelLag>,
    /// Maximum over channels.
    pub suggested: usize,
}

/// Sample autocorrelation `r_k` for `k = 0..=max_lag`, with the biased
/// `1/T` normalization. `None` when the series has zero variance.
pub fn autocorrelation(values: &[f64], max_lag: usize) -> Option<Vec<f64>> {
    let t = values.len();
    if t == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / t as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let c0: f64 = centered.iter().map(|v| v * v).sum();
    if c0 == 0.0 || !c0.is_finite() {
        return None;
    }
    Some(
        (0..=max_lag.min(t - 1))
            .map(|k| centered[..t - k].iter().zip(&centered[k..]).map(|(a, b)| a * b).sum::<f64>() / c0)
            .collect(),
    )
}

/// First lag at which the autocorrelation falls below `1/e`, or `T - 1`
/// if it never does.
pub fn first_decorrelation_lag(values: &[f64]) -> Option<usize> {
    let threshold = (-1.0f64).exp();
    let acf = autocorrelation(values, values.len().saturating_sub(1))?;
    Some(acf.iter().skip(1).position(|r| *r < threshold).map_or(acf.len().max(2) - 1, |k| k + 1))
}

pub fn suggest_lag(series: &TimeSeries) -> Result<LagSuggestion> {
    if series.len() < 3 {
        return Err(RrcError::InvalidInput(format!(
            "lag suggestion needs at least 3 samples, got {}",
            series.len()
        )));
    }
    let channels: Vec<ChannelLag> = series
        .values()
        .column_iter()
        .map(|col| {
            let values: Vec<f64> = col.iter().copied().collect();
            match first_decorrelation_lag(&values) {
                Some(lag) => ChannelLag { lag, degenerate: false },
                None => ChannelLag { lag: 1, degenerate: true },
            }
        })
        .collect();
    let suggested = channels.iter().map(|c| c.lag).max().unwrap_or(1);
    Ok(LagSuggestion { channels, suggested })
}
