use serde::{Deserialize, Serialize};

use super::{ClientSeries, CALENDAR_CHANNELS, FEATURES};
use crate::error::{Error, Result};
use crate::model::ForecastInput;

/// Lower bound on a channel's standard deviation during z-scoring.
pub const STD_FLOOR: f64 = 1e-8;

/// Fractions of the time axis used for train, validation and test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
            return Err(Error::invalid(format!("split fractions must be positive: {self:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split fractions must sum to 1: {self:?}")));
        }
        Ok(())
    }

    /// `[0, b1)`, `[b1, b2)`, `[b2, n)` boundaries for a series of length `n`.
    pub fn boundaries(&self, n: usize) -> (usize, usize) {
        let b1 = (n as f64 * self.train).round() as usize;
        let b2 = (n as f64 * (self.train + self.val)).round() as usize;
        (b1.min(n), b2.clamp(b1.min(n), n))
    }
}

/// Per-channel z-score statistics over `[y; z]`, fitted on the train split.
/// Calendar channels pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(rows: &[[f64; 1 + FEATURES]]) -> Self {
        let width = 1 + FEATURES;
        let mut mean = vec![0.0; width];
        let mut std = vec![1.0; width];
        let n = rows.len() as f64;
        for ch in 0..width {
            if (1..1 + CALENDAR_CHANNELS).contains(&ch) {
                continue;
            }
            let first = rows[0][ch];
            if rows.iter().all(|r| r[ch] == first) {
                mean[ch] = first;
                std[ch] = STD_FLOOR;
                continue;
            }
            let m = rows.iter().map(|r| r[ch]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[ch] - m) * (r[ch] - m)).sum::<f64>() / n;
            mean[ch] = m;
            std[ch] = var.sqrt().max(STD_FLOOR);
        }
        Normalizer { mean, std }
    }

    pub fn normalize_row(&self, row: &[f64; 1 + FEATURES]) -> [f64; 1 + FEATURES] {
        let mut out = [0.0; 1 + FEATURES];
        for ch in 0..out.len() {
            out[ch] = (row[ch] - self.mean[ch]) / self.std[ch];
        }
        out
    }

    pub fn normalize_load(&self, y: f64) -> f64 {
        (y - self.mean[0]) / self.std[0]
    }

    pub fn denormalize_load(&self, y: f64) -> f64 {
        y * self.std[0] + self.mean[0]
    }
}

/// Supervised windows over one contiguous split of a client's series.
///
/// Window `i` takes inputs at split positions `i..i+T` and its label at
/// `i + T + L - 1`. Windows never cross the split boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    lookback: usize,
    horizon: usize,
    /// Index of the split's first point within the full series.
    offset: usize,
    /// Normalized `[y; z]` rows, row-major.
    rows: Vec<f64>,
    /// Original-unit loads for the split.
    raw_load: Vec<f64>,
    norm: Normalizer,
}

pub const WIDTH: usize = 1 + FEATURES;

impl WindowedDataset {
    fn build(series: &ClientSeries, range: std::ops::Range<usize>, t: usize, l: usize, norm: &Normalizer) -> Self {
        let mut rows = Vec::with_capacity(range.len() * WIDTH);
        for k in range.clone() {
            rows.extend_from_slice(&norm.normalize_row(&raw_row(series, k)));
        }
        WindowedDataset {
            lookback: t,
            horizon: l,
            offset: range.start,
            rows,
            raw_load: series.load[range].to_vec(),
            norm: norm.clone(),
        }
    }

    /// Number of windows: `split_len - (T + L) + 1`, or 0.
    pub fn len(&self) -> usize {
        (self.raw_load.len() + 1).saturating_sub(self.lookback + self.horizon)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn split_len(&self) -> usize {
        self.raw_load.len()
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn width(&self) -> usize {
        WIDTH
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.norm
    }

    pub fn input(&self, i: usize) -> ForecastInput<'_> {
        let s = i * WIDTH;
        ForecastInput::new(&self.rows[s..s + self.lookback * WIDTH], WIDTH)
            .expect("window slice is a whole number of rows")
    }

    /// Normalized label of window `i`.
    pub fn target(&self, i: usize) -> f64 {
        self.rows[(i + self.lookback + self.horizon - 1) * WIDTH]
    }

    /// Label of window `i` in original units.
    pub fn raw_target(&self, i: usize) -> f64 {
        self.raw_load[i + self.lookback + self.horizon - 1]
    }

    /// Series index of window `i`'s first input.
    pub fn first_input_index(&self, i: usize) -> usize {
        self.offset + i
    }

    /// Series index of window `i`'s label.
    pub fn label_index(&self, i: usize) -> usize {
        self.offset + i + self.lookback + self.horizon - 1
    }

    pub fn series_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.raw_load.len()
    }

    /// Original-unit actuals from `L` steps before the first label through
    /// the last label: `len() + L` values, the persistence history for MASE.
    pub fn persistence_actuals(&self) -> &[f64] {
        &self.raw_load[self.lookback - 1..]
    }
}

fn raw_row(series: &ClientSeries, k: usize) -> [f64; WIDTH] {
    let mut r = [0.0; WIDTH];
    r[0] = series.load[k];
    r[1..].copy_from_slice(&series.features[k]);
    r
}

/// Train/validation/test windows for one client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientSplits {
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
}

/// Cut `series` into contiguous splits, fit normalization on the train split,
/// and window each split independently with look-back `t` and look-ahead `l`.
///
/// The train split must be longer than `t + l`; validation and test splits
/// may be shorter, in which case they hold zero windows.
pub fn split_and_window(series: &ClientSeries, spec: &SplitSpec, t: usize, l: usize) -> Result<ClientSplits> {
    spec.validate()?;
    if t == 0 || l == 0 {
        return Err(Error::invalid("look-back and look-ahead must be at least 1"));
    }
    let n = series.len();
    let (b1, b2) = spec.boundaries(n);
    if b1 <= t + l {
        return Err(Error::data(
            &series.name,
            format!("train split has {b1} points, needs more than T + L = {}", t + l),
        ));
    }
    let train_rows: Vec<[f64; WIDTH]> = (0..b1).map(|k| raw_row(series, k)).collect();
    let norm = Normalizer::fit(&train_rows);
    Ok(ClientSplits {
        train: WindowedDataset::build(series, 0..b1, t, l, &norm),
        val: WindowedDataset::build(series, b1..b2, t, l, &norm),
        test: WindowedDataset::build(series, b2..n, t, l, &norm),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, NaiveDate};
    use proptest::prelude::*;

    fn series(load: Vec<f64>) -> ClientSeries {
        let start = NaiveDate::from_ymd_opt(2023, 1, 2).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let ts = (0..load.len()).map(|k| start + Duration::minutes(15 * k as i64)).collect();
        let phys = (0..load.len()).map(|k| [k as f64 * 0.1, 2.0, 500.0, 300.0, 40.0]).collect();
        ClientSeries::from_parts("t", ts, load, phys).unwrap()
    }

    #[test]
    fn default_split_window_counts() {
        let s = series((0..100).map(|k| (k as f64 * 0.3).sin()).collect());
        let (b1, b2) = SplitSpec::default().boundaries(100);
        assert_eq!((b1, b2), (80, 90));
        let sp = split_and_window(&s, &SplitSpec::default(), 12, 4).unwrap();
        assert_eq!(sp.train.len(), 80 - 16 + 1);
        assert_eq!(sp.train.len(), 65);
        // 10-point splits are too short for a 16-point window
        assert_eq!(sp.val.len(), 0);
        assert_eq!(sp.test.len(), 0);
    }

    #[test]
    fn too_short_train_split_is_an_error() {
        // train split = 16 = T + L
        let s = series(vec![1.0; 20]);
        assert!(split_and_window(&s, &SplitSpec::default(), 12, 4).is_err());
    }

    #[test]
    fn constant_series_normalizes_to_zero() {
        let s = series(vec![7.3; 60]);
        let sp = split_and_window(&s, &SplitSpec::default(), 4, 2).unwrap();
        assert_eq!(sp.train.normalizer().std[0], STD_FLOOR);
        for ds in [&sp.train, &sp.val, &sp.test] {
            for i in 0..ds.len() {
                assert_eq!(ds.target(i), 0.0);
                assert!(ds.input(i).step(0)[0] == 0.0);
            }
        }
    }

    #[test]
    fn splits_do_not_leak() {
        let s = series((0..300).map(|k| k as f64).collect());
        let sp = split_and_window(&s, &SplitSpec::default(), 6, 3).unwrap();
        let tr = sp.train.series_range();
        let va = sp.val.series_range();
        let te = sp.test.series_range();
        assert!(tr.end <= va.start && va.end <= te.start);
        assert!(s.timestamps[tr.end - 1] < s.timestamps[va.start]);
        assert!(s.timestamps[va.end - 1] < s.timestamps[te.start]);
        for ds in [&sp.train, &sp.val, &sp.test] {
            let r = ds.series_range();
            for i in 0..ds.len() {
                assert!(r.contains(&ds.first_input_index(i)));
                assert!(r.contains(&ds.label_index(i)));
            }
        }
    }

    #[test]
    fn normalization_uses_train_statistics_only() {
        let mut load: Vec<f64> = (0..100).map(|k| (k % 7) as f64).collect();
        // huge values in the test split must not move the statistics
        for v in &mut load[90..] {
            *v = 1e6;
        }
        let sp = split_and_window(&series(load.clone()), &SplitSpec::default(), 3, 1).unwrap();
        let m = load[..80].iter().sum::<f64>() / 80.0;
        assert!((sp.train.normalizer().mean[0] - m).abs() < 1e-12);
        assert_eq!(sp.test.normalizer(), sp.train.normalizer());
    }

    #[test]
    fn persistence_history_lines_up_with_labels() {
        let s = series((0..120).map(|k| k as f64 * 2.0).collect());
        let sp = split_and_window(&s, &SplitSpec::default(), 5, 3).unwrap();
        let ds = &sp.val;
        let hist = ds.persistence_actuals();
        assert_eq!(hist.len(), ds.len() + ds.horizon());
        for i in 0..ds.len() {
            assert_eq!(hist[i + ds.horizon()], ds.raw_target(i));
            assert_eq!(hist[i], s.load[ds.label_index(i) - ds.horizon()]);
        }
    }

    #[test]
    fn split_spec_validation() {
        assert!(SplitSpec { train: 0.5, val: 0.5, test: 0.0 }.validate().is_err());
        assert!(SplitSpec { train: 0.8, val: 0.1, test: 0.2 }.validate().is_err());
        assert!(SplitSpec::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn window_alignment_and_count(n in 40usize..200, t in 1usize..8, l in 1usize..6) {
            let s = series((0..n).map(|k| (k as f64).sqrt()).collect());
            let spec = SplitSpec::default();
            let (b1, _) = spec.boundaries(n);
            prop_assume!(b1 > t + l);
            let sp = split_and_window(&s, &spec, t, l).unwrap();
            for ds in [&sp.train, &sp.val, &sp.test] {
                prop_assert_eq!(ds.len(), (ds.split_len() + 1).saturating_sub(t + l));
                for i in 0..ds.len() {
                    prop_assert_eq!(ds.label_index(i), ds.first_input_index(i) + t + l - 1);
                    prop_assert_eq!(ds.raw_target(i), s.load[ds.label_index(i)]);
                }
            }
        }

        #[test]
        fn denormalize_inverts_normalize(vals in prop::collection::vec(-1e4..1e4f64, 30..60), y in -1e4..1e4f64) {
            let s = series(vals);
            let sp = split_and_window(&s, &SplitSpec::default(), 2, 1).unwrap();
            let nz = sp.train.normalizer();
            let back = nz.denormalize_load(nz.normalize_load(y));
            prop_assert!((back - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }
}
