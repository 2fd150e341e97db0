//! Forecast quality metrics.

use crate::error::{Error, Result};

/// Forecasts aligned with actuals, plus `lag` extra leading actuals so that
/// the persistence value `x_{t-L}` exists for every scored point.
///
/// `actuals.len() == forecasts.len() + lag`; forecast `k` is scored against
/// `actuals[lag + k]` and its persistence baseline is `actuals[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSeries {
    pub forecasts: Vec<f64>,
    pub actuals: Vec<f64>,
    pub lag: usize,
}

impl ForecastSeries {
    pub fn new(forecasts: Vec<f64>, actuals: Vec<f64>, lag: usize) -> Result<Self> {
        if forecasts.is_empty() {
            return Err(Error::Empty("forecast series"));
        }
        if lag == 0 {
            return Err(Error::invalid("MASE lag must be at least 1"));
        }
        if actuals.len() != forecasts.len() + lag {
            return Err(Error::invalid(format!(
                "expected {} actuals ({} forecasts + lag {}), got {}",
                forecasts.len() + lag,
                forecasts.len(),
                lag,
                actuals.len()
            )));
        }
        Ok(ForecastSeries {
            forecasts,
            actuals,
            lag,
        })
    }

    /// Actuals at the scored positions.
    pub fn scored_actuals(&self) -> &[f64] {
        &self.actuals[self.lag..]
    }

    /// The lag-`L` persistence forecast for each scored position.
    pub fn persistence(&self) -> &[f64] {
        &self.actuals[..self.forecasts.len()]
    }
}

/// Mean absolute scaled error against the lag-`L` persistence forecast:
/// `Σ|x̂_t − x_t| / Σ|x_{t−L} − x_t|` over the same scored positions.
pub fn mase(fs: &ForecastSeries) -> Result<f64> {
    let scored = fs.scored_actuals();
    let num: f64 = fs
        .forecasts
        .iter()
        .zip(scored)
        .map(|(f, a)| (f - a).abs())
        .sum();
    let den: f64 = fs
        .persistence()
        .iter()
        .zip(scored)
        .map(|(p, a)| (p - a).abs())
        .sum();
    if den == 0.0 {
        return Err(Error::DegenerateDenominator { lag: fs.lag });
    }
    Ok(num / den)
}

pub fn mse(forecasts: &[f64], actuals: &[f64]) -> Result<f64> {
    if forecasts.is_empty() {
        return Err(Error::Empty("mse input"));
    }
    if forecasts.len() != actuals.len() {
        return Err(Error::invalid(format!(
            "mse length mismatch: {} vs {}",
            forecasts.len(),
            actuals.len()
        )));
    }
    let s: f64 = forecasts
        .iter()
        .zip(actuals)
        .map(|(f, a)| (f - a) * (f - a))
        .sum();
    Ok(s / forecasts.len() as f64)
}

/// Unweighted mean of per-client values.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}
