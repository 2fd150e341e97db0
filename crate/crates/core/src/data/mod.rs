//! Load series ingestion, windowing, splits and synthetic clients.

mod csv_io;
mod synthetic;
mod window;

use chrono::{Datelike, NaiveDateTime, Timelike};

pub use csv_io::{load_csv, load_csv_dir, write_csv, CSV_HEADER};
pub use synthetic::{generate_synthetic, Heterogeneity, SyntheticSpec};
pub use window::{split_and_window, ClientSplits, Normalizer, SplitSpec, WindowedDataset, STD_FLOOR};

use crate::error::{Error, Result};

/// Exogenous feature count `d`.
pub const FEATURES: usize = 7;
/// Sampling interval in minutes.
pub const CADENCE_MINUTES: i64 = 15;
/// Points per day and per week at the 15-minute cadence.
pub const STEPS_PER_DAY: usize = 96;
pub const STEPS_PER_WEEK: usize = 7 * STEPS_PER_DAY;

/// Feature channel names, in the order they appear in `z_t`.
pub const FEATURE_NAMES: [&str; FEATURES] = [
    "hour_of_day",
    "day_of_week",
    "temperature",
    "windspeed",
    "floor_area",
    "wall_area",
    "window_area",
];

/// Channels of `z_t` that are already scaled to `[0, 1]` and are not z-scored.
pub const CALENDAR_CHANNELS: usize = 2;

/// One client's time series at a uniform 15-minute cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientSeries {
    pub name: String,
    pub timestamps: Vec<NaiveDateTime>,
    /// Load in kW.
    pub load: Vec<f64>,
    /// `z_t`, see [`FEATURE_NAMES`].
    pub features: Vec<[f64; FEATURES]>,
}

impl ClientSeries {
    /// Assemble from timestamps, loads and the five physical channels
    /// (temperature, windspeed, floor, wall and window area), deriving the
    /// calendar channels from the timestamps and checking cadence.
    pub fn from_parts(
        name: impl Into<String>,
        timestamps: Vec<NaiveDateTime>,
        load: Vec<f64>,
        physical: Vec<[f64; FEATURES - CALENDAR_CHANNELS]>,
    ) -> Result<Self> {
        let name = name.into();
        if timestamps.len() != load.len() || load.len() != physical.len() {
            return Err(Error::data(&name, "timestamp, load and feature columns differ in length"));
        }
        check_cadence(&name, &timestamps)?;
        for (row, v) in load.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::data(&name, format!("row {}: load is not a finite number", row + 1)));
            }
        }
        let features = timestamps
            .iter()
            .zip(&physical)
            .map(|(ts, p)| {
                let mut z = [0.0; FEATURES];
                z[0] = calendar_hour(ts);
                z[1] = calendar_day(ts);
                z[CALENDAR_CHANNELS..].copy_from_slice(p);
                z
            })
            .collect();
        Ok(ClientSeries {
            name,
            timestamps,
            load,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }

    pub fn physical(&self, t: usize) -> [f64; FEATURES - CALENDAR_CHANNELS] {
        let mut p = [0.0; FEATURES - CALENDAR_CHANNELS];
        p.copy_from_slice(&self.features[t][CALENDAR_CHANNELS..]);
        p
    }

    pub fn mean_std(&self) -> (f64, f64) {
        let n = self.load.len().max(1) as f64;
        let mean = self.load.iter().sum::<f64>() / n;
        let var = self.load.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

/// Hour of day as an integer scaled to `[0, 1]`.
pub fn calendar_hour(ts: &NaiveDateTime) -> f64 {
    ts.hour() as f64 / 23.0
}

/// Day of week (Monday = 0) scaled to `[0, 1]`.
pub fn calendar_day(ts: &NaiveDateTime) -> f64 {
    ts.weekday().num_days_from_monday() as f64 / 6.0
}

fn check_cadence(name: &str, ts: &[NaiveDateTime]) -> Result<()> {
    for (k, pair) in ts.windows(2).enumerate() {
        let gap = (pair[1] - pair[0]).num_minutes();
        if gap != CADENCE_MINUTES {
            return Err(Error::data(
                name,
                format!(
                    "non-uniform cadence between rows {} and {} ({} -> {}): gap of {} minutes, expected {}",
                    k + 1,
                    k + 2,
                    pair[0],
                    pair[1],
                    gap,
                    CADENCE_MINUTES
                ),
            ));
        }
    }
    Ok(())
}
