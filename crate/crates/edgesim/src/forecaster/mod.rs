//! Time-series preprocessing and pluggable request-rate forecasting.
//!
//! Raw bucket rates are noise-reduced with a centered moving average and
//! min-max normalized before they reach a model; the normalization bounds
//! come from the training split only, so validation data never leaks into
//! the scaling. Two forecasters are provided: a from-scratch single-layer
//! LSTM trained with truncated backpropagation through time ([`lstm`]) and
//! an additive Holt-Winters baseline ([`holt_winters`]).

pub mod holt_winters;
pub mod lstm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Actual values closer to zero than this are excluded from MAPE.
pub const MAPE_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("series is empty")]
    EmptySeries,
    #[error("smoothing window must be odd and >= 1, got {0}")]
    BadSmoothingWindow(usize),
    #[error("train fraction {0} outside (0, 1]")]
    BadTrainFraction(f64),
}

/// Min-max scaling bounds taken from a training split.
///
/// A constant series (max == min) maps every value to 0.0 and denormalizes
/// back to the constant, keeping the round trip exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

impl Normalization {
    pub fn fit(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { min, max }
    }

    pub fn is_constant(&self) -> bool {
        self.max <= self.min
    }

    pub fn normalize(&self, x: f64) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        if self.is_constant() {
            self.min
        } else {
            self.min + y * (self.max - self.min)
        }
    }
}

/// A smoothed, normalized rate series ready for training or prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesWindow {
    /// Normalized values; in [0, 1] wherever the raw value lay inside the
    /// training-split range.
    pub values: Vec<f64>,
    pub bucket_width_s: f64,
    pub normalization: Normalization,
}

/// Centered moving average with shrinking windows at the edges: index `i`
/// averages `series[max(0, i-h) ..= min(n-1, i+h)]` for `h = window / 2`.
pub fn smooth_centered(series: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let n = series.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let span = &series[lo..=hi];
            span.iter().sum::<f64>() / span.len() as f64
        })
        .collect()
}

/// Noise reduction followed by min-max normalization, with the bounds fit on
/// the leading `train_fraction` of the smoothed series.
pub fn preprocess(
    raw: &[f64],
    bucket_width_s: f64,
    smoothing_window: usize,
    train_fraction: f64,
) -> Result<SeriesWindow, PreprocessError> {
    if raw.is_empty() {
        return Err(PreprocessError::EmptySeries);
    }
    if smoothing_window == 0 || smoothing_window % 2 == 0 {
        return Err(PreprocessError::BadSmoothingWindow(smoothing_window));
    }
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(PreprocessError::BadTrainFraction(train_fraction));
    }
    let smoothed = smooth_centered(raw, smoothing_window);
    let split = ((smoothed.len() as f64 * train_fraction) as usize).max(1);
    let normalization = Normalization::fit(&smoothed[..split]);
    let values = smoothed.iter().map(|&x| normalization.normalize(x)).collect();
    Ok(SeriesWindow {
        values,
        bucket_width_s,
        normalization,
    })
}

/// Mean absolute percentage error, in percent. Actuals with magnitude below
/// [`MAPE_EPSILON`] are excluded; returns `None` when nothing remains.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Option<f64> {
    assert_eq!(actual.len(), predicted.len(), "mape requires equal lengths");
    let mut sum = 0.0;
    let mut n = 0usize;
    for (a, p) in actual.iter().zip(predicted) {
        if a.abs() < MAPE_EPSILON {
            continue;
        }
        sum += ((a - p) / a).abs();
        n += 1;
    }
    if n == 0 {
        None
    } else {
        Some(100.0 * sum / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_series_maps_to_zero_and_round_trips() {
        let sw = preprocess(&[5.0, 5.0, 5.0, 5.0], 60.0, 3, 5.0 / 6.0).unwrap();
        assert_eq!(sw.values, vec![0.0; 4]);
        assert_eq!(sw.normalization.denormalize(0.0), 5.0);
    }

    #[test]
    fn window_one_is_identity_smoothing() {
        let sw = preprocess(&[0.0, 10.0, 0.0, 10.0], 60.0, 1, 1.0).unwrap();
        assert_eq!(sw.values, vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn smoothing_matches_windowed_mean_oracle() {
        let series: Vec<f64> = (0..57).map(|i| ((i * 31 + 7) % 13) as f64).collect();
        for window in [1usize, 3, 5, 9] {
            let got = smooth_centered(&series, window);
            let half = window / 2;
            for i in 0..series.len() {
                // Brute-force mean over the clipped window.
                let mut sum = 0.0;
                let mut count = 0.0;
                for j in 0..series.len() {
                    let dist = i.abs_diff(j);
                    if dist <= half {
                        sum += series[j];
                        count += 1.0;
                    }
                }
                assert!((got[i] - sum / count).abs() < 1e-12, "window {window} idx {i}");
            }
        }
    }

    #[test]
    fn preprocess_rejects_bad_inputs() {
        assert_eq!(preprocess(&[], 60.0, 3, 0.8), Err(PreprocessError::EmptySeries));
        assert_eq!(
            preprocess(&[1.0], 60.0, 2, 0.8),
            Err(PreprocessError::BadSmoothingWindow(2))
        );
        assert_eq!(
            preprocess(&[1.0], 60.0, 3, 0.0),
            Err(PreprocessError::BadTrainFraction(0.0))
        );
    }

    #[test]
    fn mape_reference_values() {
        assert_eq!(mape(&[10.0, 20.0], &[10.0, 20.0]), Some(0.0));
        let v = mape(&[10.0], &[11.0]).unwrap();
        assert!((v - 10.0).abs() < 1e-9);
        assert_eq!(mape(&[0.0, 0.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn mape_matches_brute_force() {
        let actual = [3.0, -7.0, 0.0, 12.5, 1e-12];
        let predicted = [2.5, -8.0, 4.0, 12.0, 9.0];
        let got = mape(&actual, &predicted).unwrap();
        let expected = 100.0
            * (((3.0 - 2.5f64) / 3.0).abs() + ((-7.0 + 8.0f64) / 7.0).abs() + ((12.5 - 12.0f64) / 12.5).abs())
            / 3.0;
        assert!((got - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn normalization_round_trips(
            values in proptest::collection::vec(-1e6_f64..1e6, 2..100),
        ) {
            let norm = Normalization::fit(&values);
            for &v in &values {
                let rt = norm.denormalize(norm.normalize(v));
                prop_assert!((rt - v).abs() < 1e-9 * v.abs().max(1.0));
            }
        }

        #[test]
        fn smoothing_preserves_bounds(
            values in proptest::collection::vec(0.0_f64..1e3, 1..80),
            window in prop::sample::select(vec![1usize, 3, 5, 7]),
        ) {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for s in smooth_centered(&values, window) {
                prop_assert!(s >= lo - 1e-9 && s <= hi + 1e-9);
            }
        }
    }
}
