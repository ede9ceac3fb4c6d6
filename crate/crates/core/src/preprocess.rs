//! Cleaning, scaling and windowing of hourly traces.

use serde::{Deserialize, Serialize};

use crate::trace_model::{TraceError, TraceSeries};

/// Gaussian consistency constant for the median absolute deviation.
pub const MAD_SCALE: f64 = 1.4826;
pub const DEFAULT_HAMPEL_WINDOW: usize = 7;
pub const DEFAULT_HAMPEL_K: f64 = 3.0;
pub const DEFAULT_WINDOW_LENGTH: usize = 24;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("hampel window must be odd and >= 3, got {0}")]
    BadHampelWindow(usize),
    #[error("hampel threshold k must be positive and finite, got {0}")]
    BadHampelK(f64),
    #[error("series of length {len} is shorter than the filter window {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("cannot fit a normalizer on an empty series")]
    Empty,
    #[error("sequence of length {len} is too short for window length {window_length}")]
    TooShortForWindow { len: usize, window_length: usize },
    #[error("window length must be at least 1")]
    ZeroWindow,
    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("split of {n} pairs at fraction {fraction} leaves an empty side")]
    EmptySplit { n: usize, fraction: f64 },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Hampel filter over a centered window (truncated at the edges): a point
/// further than `k * 1.4826 * MAD` from its window median is replaced by
/// that median. With MAD = 0 any point off the median is replaced.
pub fn hampel(values: &[f64], window: usize, k: f64) -> Result<Vec<f64>, PreprocessError> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(PreprocessError::BadHampelWindow(window));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(PreprocessError::BadHampelK(k));
    }
    if values.len() < window {
        return Err(PreprocessError::SeriesTooShort {
            len: values.len(),
            window,
        });
    }
    let half = window / 2;
    let mut scratch = Vec::with_capacity(window);
    let mut out = Vec::with_capacity(values.len());
    for (i, &x) in values.iter().enumerate() {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(values.len());
        scratch.clear();
        scratch.extend_from_slice(&values[lo..hi]);
        let m = median(&mut scratch);
        for v in scratch.iter_mut() {
            *v = (*v - m).abs();
        }
        let mad = median(&mut scratch);
        out.push(if (x - m).abs() > k * MAD_SCALE * mad { m } else { x });
    }
    Ok(out)
}

pub fn filter_outliers(
    series: &TraceSeries,
    window: usize,
    k: f64,
) -> Result<TraceSeries, PreprocessError> {
    let cleaned = hampel(series.samples(), window, k)?;
    Ok(series.with_samples(cleaned)?)
}

/// Min/max scaling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min_value: f64,
    pub max_value: f64,
}

impl NormalizationParams {
    pub fn fit(values: &[f64]) -> Result<Self, PreprocessError> {
        if values.is_empty() {
            return Err(PreprocessError::Empty);
        }
        let (min_value, max_value) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        Ok(Self {
            min_value,
            max_value,
        })
    }

    pub fn range(&self) -> f64 {
        self.max_value - self.min_value
    }

    /// Maps to `[0, 1]`; a degenerate (constant) range maps everything to 0.5.
    pub fn normalize_value(&self, x: f64) -> f64 {
        let range = self.range();
        if range > 0.0 {
            (x - self.min_value) / range
        } else {
            0.5
        }
    }

    pub fn denormalize_value(&self, y: f64) -> f64 {
        self.min_value + y * self.range()
    }

    pub fn normalize(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&x| self.normalize_value(x)).collect()
    }

    pub fn denormalize(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&y| self.denormalize_value(y)).collect()
    }
}

pub fn fit_normalizer(series: &TraceSeries) -> Result<NormalizationParams, PreprocessError> {
    NormalizationParams::fit(series.samples())
}

/// Supervised next-hour pairs: window `i` covers hours `[i, i+L)` and its
/// target is hour `i+L`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedDataset {
    window_length: usize,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl SupervisedDataset {
    pub fn from_pairs(
        window_length: usize,
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
    ) -> Result<Self, PreprocessError> {
        if window_length == 0 {
            return Err(PreprocessError::ZeroWindow);
        }
        assert_eq!(inputs.len(), targets.len(), "inputs and targets must align");
        for w in &inputs {
            assert_eq!(w.len(), window_length, "window has wrong length");
        }
        Ok(Self {
            window_length,
            inputs,
            targets,
        })
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.inputs
            .iter()
            .map(Vec::as_slice)
            .zip(self.targets.iter().copied())
    }
}

pub fn make_windows(sequence: &[f64], window_length: usize) -> Result<SupervisedDataset, PreprocessError> {
    if window_length == 0 {
        return Err(PreprocessError::ZeroWindow);
    }
    if sequence.len() <= window_length {
        return Err(PreprocessError::TooShortForWindow {
            len: sequence.len(),
            window_length,
        });
    }
    if let Some((index, &value)) = sequence
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(PreprocessError::OutOfRange { index, value });
    }
    let n = sequence.len() - window_length;
    let inputs = (0..n)
        .map(|i| sequence[i..i + window_length].to_vec())
        .collect();
    let targets = sequence[window_length..].to_vec();
    Ok(SupervisedDataset {
        window_length,
        inputs,
        targets,
    })
}

/// Chronological split: the first `floor(fraction * N)` pairs train.
pub fn split_train_test(
    dataset: &SupervisedDataset,
    train_fraction: f64,
) -> Result<(SupervisedDataset, SupervisedDataset), PreprocessError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(PreprocessError::BadFraction(train_fraction));
    }
    let n = dataset.len();
    let n_train = (train_fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(PreprocessError::EmptySplit {
            n,
            fraction: train_fraction,
        });
    }
    let take = |range: std::ops::Range<usize>| SupervisedDataset {
        window_length: dataset.window_length,
        inputs: dataset.inputs[range.clone()].to_vec(),
        targets: dataset.targets[range].to_vec(),
    };
    Ok((take(0..n_train), take(n_train..n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hampel_constant_unchanged() {
        let xs = vec![10.0; 20];
        assert_eq!(hampel(&xs, 7, 3.0).unwrap(), xs);
    }

    #[test]
    fn hampel_replaces_spike() {
        let xs = [10.0, 10.0, 10.0, 1000.0, 10.0, 10.0, 10.0];
        // Centered window at index 3 is the whole series: median 10, MAD 0.
        let mut w = xs.to_vec();
        let m = median(&mut w);
        assert_eq!(m, 10.0);
        let out = hampel(&xs, 7, 3.0).unwrap();
        assert_eq!(out, vec![10.0; 7]);
    }

    #[test]
    fn hampel_mad_zero_replaces_any_deviant() {
        let xs = [5.0, 5.0, 5.0, 5.1, 5.0, 5.0, 5.0, 5.0];
        let out = hampel(&xs, 5, 3.0).unwrap();
        assert_eq!(out, vec![5.0; 8]);
    }

    #[test]
    fn hampel_keeps_points_inside_threshold() {
        // window [1,2,3,4,5] at index 2: median 3, MAD 1; 3 is kept trivially,
        // and no point of a linear ramp exceeds 3*1.4826 deviations.
        let xs: Vec<f64> = (1..=9).map(f64::from).collect();
        assert_eq!(hampel(&xs, 5, 3.0).unwrap(), xs);
    }

    #[test]
    fn hampel_argument_errors() {
        let xs = vec![1.0; 5];
        assert!(matches!(hampel(&xs, 4, 3.0), Err(PreprocessError::BadHampelWindow(4))));
        assert!(matches!(hampel(&xs, 1, 3.0), Err(PreprocessError::BadHampelWindow(1))));
        assert!(matches!(hampel(&xs, 7, 3.0), Err(PreprocessError::SeriesTooShort { .. })));
        assert!(matches!(hampel(&xs, 3, 0.0), Err(PreprocessError::BadHampelK(_))));
    }

    #[test]
    fn normalizer_extrema() {
        let p = NormalizationParams::fit(&[5.0, 10.0, 15.0]).unwrap();
        assert_eq!((p.min_value, p.max_value), (5.0, 15.0));
        assert_eq!(p.normalize(&[5.0, 10.0, 15.0]), vec![0.0, 0.5, 1.0]);
        let p = NormalizationParams::fit(&[7.0]).unwrap();
        assert_eq!((p.min_value, p.max_value), (7.0, 7.0));
        assert_eq!(p.normalize(&[7.0, 7.0]), vec![0.5, 0.5]);
        assert!(matches!(NormalizationParams::fit(&[]), Err(PreprocessError::Empty)));
    }

    #[test]
    fn windows_layout() {
        let seq: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let ds = make_windows(&seq, 3).unwrap();
        assert_eq!(ds.len(), 7);
        assert_eq!(ds.inputs()[0], vec![0.0, 0.1, 0.2]);
        assert_eq!(ds.targets()[0], 0.3);
        assert_eq!(ds.targets(), &seq[3..]);
        assert_eq!(make_windows(&vec![0.5; 336], 24).unwrap().len(), 312);
        assert!(matches!(
            make_windows(&[0.1, 0.2, 0.3, 0.4], 4),
            Err(PreprocessError::TooShortForWindow { .. })
        ));
        assert!(matches!(make_windows(&[0.1, 1.2, 0.3], 1), Err(PreprocessError::OutOfRange { index: 1, .. })));
    }

    #[test]
    fn split_counts() {
        let ds = make_windows(&vec![0.5; 336], 24).unwrap();
        let (train, test) = split_train_test(&ds, 0.8).unwrap();
        assert_eq!((train.len(), test.len()), (249, 63));
        let ds = make_windows(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], 1).unwrap();
        let (train, test) = split_train_test(&ds, 0.8).unwrap();
        assert_eq!((train.len(), test.len()), (4, 1));
        assert_eq!(test.targets(), &[0.6]);
        let ds = make_windows(&[0.1, 0.2], 1).unwrap();
        assert!(matches!(split_train_test(&ds, 0.8), Err(PreprocessError::EmptySplit { .. })));
        assert!(split_train_test(&ds, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_denormalize(xs in prop::collection::vec(0.0f64..1e6, 2..50)) {
            let p = NormalizationParams::fit(&xs).unwrap();
            prop_assume!(p.range() > 0.0);
            let back = p.denormalize(&p.normalize(&xs));
            for (a, b) in xs.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(p.range()));
            }
            for y in p.normalize(&xs) {
                prop_assert!((0.0..=1.0).contains(&y));
            }
        }

        #[test]
        fn split_partitions_chronologically(n in 2usize..400, frac in 0.05f64..0.95) {
            let seq: Vec<f64> = (0..n + 3).map(|i| i as f64 / (n + 3) as f64).collect();
            let ds = make_windows(&seq, 3).unwrap();
            if let Ok((train, test)) = split_train_test(&ds, frac) {
                prop_assert_eq!(train.len() + test.len(), ds.len());
                prop_assert_eq!(train.len(), (frac * n as f64).floor() as usize);
                let last_train = train.targets().last().unwrap();
                prop_assert!(test.targets().iter().all(|t| t > last_train));
            }
        }

        #[test]
        fn hampel_preserves_length(xs in prop::collection::vec(0.0f64..500.0, 7..80)) {
            let out = hampel(&xs, 7, 3.0).unwrap();
            prop_assert_eq!(out.len(), xs.len());
        }
    }
}
