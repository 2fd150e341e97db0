use std::f64::consts::PI;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{ClientSeries, CADENCE_MINUTES, STEPS_PER_DAY, STEPS_PER_WEEK};
use crate::error::{Error, Result};
use crate::numerics::SimRng;

/// How strongly clients differ from one another. All zero gives clients that
/// are identical apart from their noise draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Heterogeneity {
    /// Log-normal spread of each client's overall scale and of its
    /// daily/weekly/noise amplitude mix.
    pub scale_spread: f64,
    /// Relative spread of the base load around the scaled mean.
    pub offset_spread: f64,
    /// Daily phase offsets are drawn from `±phase_spread · π`.
    pub phase_spread: f64,
}

impl Default for Heterogeneity {
    fn default() -> Self {
        Heterogeneity {
            scale_spread: 0.8,
            offset_spread: 0.3,
            phase_spread: 0.5,
        }
    }
}

impl Heterogeneity {
    pub fn homogeneous() -> Self {
        Heterogeneity {
            scale_spread: 0.0,
            offset_spread: 0.0,
            phase_spread: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("scale_spread", self.scale_spread),
            ("offset_spread", self.offset_spread),
            ("phase_spread", self.phase_spread),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.phase_spread > 1.0 {
            return Err(Error::invalid("phase_spread is a fraction of π and must be ≤ 1"));
        }
        Ok(())
    }
}

/// Generator settings as they appear in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub clients: usize,
    /// Points per client; the default is four weeks at 15 minutes.
    pub length: usize,
    #[serde(flatten)]
    pub heterogeneity: Heterogeneity,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            clients: 12,
            length: 4 * STEPS_PER_WEEK,
            heterogeneity: Heterogeneity::default(),
        }
    }
}

const BASE_LOAD: f64 = 50.0;
const DAILY_AMP: f64 = 20.0;
const WEEKLY_AMP: f64 = 8.0;
const NOISE: f64 = 2.0;

/// Synthetic heterogeneous clients. For client `c`,
///
/// `y_t = a_c + b_c·sin(2πt/96 + φ_c) + e_c·sin(2πt/672) + σ_c·ε_t`
///
/// with `ε_t` standard normal. Temperature and windspeed follow the client's
/// daily harmonic; building areas are constant per client.
pub fn generate_synthetic(
    n: usize,
    length: usize,
    het: &Heterogeneity,
    rng: &mut SimRng,
) -> Result<Vec<ClientSeries>> {
    het.validate()?;
    if n == 0 {
        return Err(Error::invalid("need at least one client"));
    }
    if length < 2 * STEPS_PER_WEEK {
        return Err(Error::invalid(format!(
            "length {length} is shorter than two weeks ({} points)",
            2 * STEPS_PER_WEEK
        )));
    }
    let start = NaiveDate::from_ymd_opt(2023, 1, 2)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start date");
    let timestamps: Vec<_> = (0..length)
        .map(|k| start + Duration::minutes(CADENCE_MINUTES * k as i64))
        .collect();

    let mut out = Vec::with_capacity(n);
    for c in 0..n {
        // draw order is fixed: scale, mix x3, offset, phase, statics, then series noise
        let scale = (het.scale_spread * rng.normal()).exp();
        let b = scale * DAILY_AMP * (het.scale_spread * rng.normal()).exp();
        let e = scale * WEEKLY_AMP * (het.scale_spread * rng.normal()).exp();
        let sigma = scale * NOISE * (0.5 * het.scale_spread * rng.normal()).exp();
        let a = (scale * BASE_LOAD * (1.0 + het.offset_spread * rng.normal())).max(b + e);
        let phase = het.phase_spread * PI * (2.0 * rng.unit() - 1.0);
        let floor_area = 1000.0 * scale * (0.2 * het.scale_spread * rng.normal()).exp();
        let wall_area = 0.6 * floor_area;
        let window_area = 0.15 * wall_area;

        let mut load = Vec::with_capacity(length);
        let mut physical = Vec::with_capacity(length);
        for t in 0..length {
            let daily = (2.0 * PI * t as f64 / STEPS_PER_DAY as f64 + phase).sin();
            let weekly = (2.0 * PI * t as f64 / STEPS_PER_WEEK as f64).sin();
            load.push(a + b * daily + e * weekly + sigma * rng.normal());
            let temperature = 15.0 + 6.0 * daily + rng.normal();
            let windspeed = (4.0 + 1.5 * daily + 0.5 * rng.normal()).max(0.0);
            physical.push([temperature, windspeed, floor_area, wall_area, window_area]);
        }
        out.push(ClientSeries::from_parts(
            format!("client_{c:02}"),
            timestamps.clone(),
            load,
            physical,
        )?);
    }
    Ok(out)
}
