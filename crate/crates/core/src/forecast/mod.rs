//! From-scratch LSTM bandwidth forecaster.
//!
//! One recurrent layer over a scalar input, a dense head with ReLU output,
//! Huber loss and Adam with global-norm clipping. Models are trained per
//! provider in normalized space and forecast one hour ahead; multi-hour
//! forecasts feed each prediction back into the window.

mod adam;
mod io;
mod network;
mod params;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamMoments};
pub use io::{load_model, save_model, MODEL_FORMAT_VERSION};
pub use network::{backward_window, cell_forward, forward_window, huber_loss};
pub use params::{init_params, Gate, LstmParams};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::preprocess::{
    filter_outliers, make_windows, split_train_test, NormalizationParams, PreprocessError,
    SupervisedDataset, DEFAULT_HAMPEL_K, DEFAULT_HAMPEL_WINDOW, DEFAULT_TRAIN_FRACTION,
    DEFAULT_WINDOW_LENGTH,
};
use crate::seed::derive_seed;
use crate::trace_model::TraceSeries;

#[derive(Debug, thiserror::Error)]
pub enum ForecastError {
    #[error("expected a window of {expected} samples, got {got}")]
    WindowLength { expected: usize, got: usize },
    #[error("state vectors must have length {expected}, got {got}")]
    StateSize { expected: usize, got: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("horizon must be at least one hour")]
    ZeroHorizon,
    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupted model file: {0}")]
    Corrupted(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

/// Training hyperparameters. Every field has a default and can be
/// overridden from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub window_length: usize,
    pub hidden_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub huber_delta: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub gradient_clip_norm: f64,
    /// Stop when train loss improves by less than 1e-4 (relative) over 5 epochs.
    pub early_stop: bool,
    pub hampel_window: usize,
    pub hampel_k: f64,
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            window_length: DEFAULT_WINDOW_LENGTH,
            hidden_size: 32,
            epochs: 50,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            huber_delta: 1.0,
            batch_size: 32,
            seed: 0,
            gradient_clip_norm: 5.0,
            early_stop: false,
            hampel_window: DEFAULT_HAMPEL_WINDOW,
            hampel_k: DEFAULT_HAMPEL_K,
            train_fraction: DEFAULT_TRAIN_FRACTION,
        }
    }
}

const EARLY_STOP_PATIENCE: usize = 5;
const EARLY_STOP_MIN_IMPROVEMENT: f64 = 1e-4;

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let fail = |msg: String| Err(ForecastError::Config(msg));
        if self.window_length == 0 || self.hidden_size == 0 || self.epochs == 0 || self.batch_size == 0 {
            return fail("window_length, hidden_size, epochs and batch_size must be positive".into());
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("adam_epsilon", self.adam_epsilon),
            ("huber_delta", self.huber_delta),
            ("gradient_clip_norm", self.gradient_clip_norm),
            ("hampel_k", self.hampel_k),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
            ("train_fraction", self.train_fraction),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return fail(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
            clip_norm: self.gradient_clip_norm,
        }
    }
}

/// A series after cleaning, scaling, windowing and the chronological split.
#[derive(Debug, Clone)]
pub struct PreparedSeries {
    pub cleaned: TraceSeries,
    pub norm: NormalizationParams,
    pub train: SupervisedDataset,
    pub test: SupervisedDataset,
}

/// Hampel filter, min/max fit, windows of `window_length`, chronological split.
pub fn prepare_series(series: &TraceSeries, cfg: &TrainConfig) -> Result<PreparedSeries, ForecastError> {
    let cleaned = filter_outliers(series, cfg.hampel_window, cfg.hampel_k)?;
    let norm = NormalizationParams::fit(cleaned.samples())?;
    prepare_with_norm(cleaned, norm, cfg)
}

/// Like [`prepare_series`] but reuses a stored normalizer (evaluation of a
/// saved model). Values outside the stored range are clamped into `[0, 1]`.
pub fn prepare_series_with(
    series: &TraceSeries,
    norm: NormalizationParams,
    cfg: &TrainConfig,
) -> Result<PreparedSeries, ForecastError> {
    let cleaned = filter_outliers(series, cfg.hampel_window, cfg.hampel_k)?;
    prepare_with_norm(cleaned, norm, cfg)
}

fn prepare_with_norm(
    cleaned: TraceSeries,
    norm: NormalizationParams,
    cfg: &TrainConfig,
) -> Result<PreparedSeries, ForecastError> {
    let scaled: Vec<f64> = norm
        .normalize(cleaned.samples())
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    let windows = make_windows(&scaled, cfg.window_length)?;
    let (train, test) = split_train_test(&windows, cfg.train_fraction)?;
    Ok(PreparedSeries {
        cleaned,
        norm,
        train,
        test,
    })
}

/// A trained per-provider forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastModel {
    pub provider_id: String,
    pub params: LstmParams,
    pub norm: NormalizationParams,
    pub config: TrainConfig,
    /// Mean per-sample Huber loss of each epoch, in normalized units.
    pub training_loss_history: Vec<f64>,
}

impl ForecastModel {
    /// Model with fixed parameters and no training history.
    pub fn from_parts(
        provider_id: impl Into<String>,
        params: LstmParams,
        norm: NormalizationParams,
        config: TrainConfig,
    ) -> Self {
        Self {
            provider_id: provider_id.into(),
            params,
            norm,
            config,
            training_loss_history: Vec::new(),
        }
    }

    pub fn window_length(&self) -> usize {
        self.config.window_length
    }

    /// One-step prediction on an already normalized window.
    pub fn predict_normalized(&self, window: &[f64]) -> Result<f64, ForecastError> {
        forward_window(&self.params, window, self.config.window_length)
    }

    /// Next-hour forecast (Mbps) from the last `L` observed hours.
    pub fn predict_next(&self, recent: &[f64]) -> Result<f64, ForecastError> {
        let window = self.norm.normalize(recent);
        let y = self.predict_normalized(&window)?;
        Ok(self.norm.denormalize_value(y))
    }

    /// Iterated forecast: each normalized prediction is appended to the
    /// window for the following hour.
    pub fn predict_horizon(&self, recent: &[f64], horizon: usize) -> Result<Vec<f64>, ForecastError> {
        if horizon == 0 {
            return Err(ForecastError::ZeroHorizon);
        }
        let mut window = self.norm.normalize(recent);
        if window.len() != self.window_length() {
            return Err(ForecastError::WindowLength {
                expected: self.window_length(),
                got: window.len(),
            });
        }
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let y = self.predict_normalized(&window)?;
            out.push(self.norm.denormalize_value(y));
            window.remove(0);
            window.push(y);
        }
        Ok(out)
    }
}

/// Mean loss and mean gradient of a batch of `(window, target)` pairs.
fn batch_gradient(
    params: &LstmParams,
    batch: &[(&[f64], f64)],
    cfg: &TrainConfig,
) -> Result<(LstmParams, f64), ForecastError> {
    let mut total = LstmParams::zeros(params.hidden_size());
    let mut loss = 0.0;
    for &(window, target) in batch {
        let (g, l) = backward_window(params, window, target, cfg.window_length, cfg.huber_delta)?;
        for (acc, v) in total.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *acc += v;
        }
        loss += l;
    }
    let n = batch.len() as f64;
    for v in total.as_mut_slice() {
        *v /= n;
    }
    Ok((total, loss))
}

/// Trains a forecaster on `series`: clean, scale, window, split, then
/// minibatch Adam over the training pairs for `cfg.epochs` epochs.
pub fn train(series: &TraceSeries, cfg: &TrainConfig) -> Result<ForecastModel, ForecastError> {
    cfg.validate()?;
    let prepared = prepare_series(series, cfg)?;
    let pairs: Vec<(&[f64], f64)> = prepared.train.pairs().collect();

    let mut params = init_params(cfg.hidden_size, derive_seed(cfg.seed, 0));
    // Start the head at the mean training target so the ReLU output is live.
    let mean_target = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    params.set_head_bias(mean_target);

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 1));
    let adam_cfg = cfg.adam();
    let mut moments = AdamMoments::zeros(params.as_slice().len());
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], f64)> = chunk.iter().map(|&i| pairs[i]).collect();
            let (mut grads, loss) = match batch_gradient(&params, &batch, cfg) {
                Ok(v) => v,
                Err(ForecastError::NonFinite(_)) => {
                    return Err(ForecastError::Diverged {
                        epoch,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
            epoch_loss += loss;
            step += 1;
            adam_step(params.as_mut_slice(), grads.as_mut_slice(), &mut moments, step, &adam_cfg);
        }
        let mean = epoch_loss / pairs.len() as f64;
        if !mean.is_finite() || !params.is_finite() {
            return Err(ForecastError::Diverged { epoch, loss: mean });
        }
        history.push(mean);
        if cfg.early_stop && history.len() > EARLY_STOP_PATIENCE {
            let before = history[history.len() - 1 - EARLY_STOP_PATIENCE];
            if before > 0.0 && (before - mean) / before < EARLY_STOP_MIN_IMPROVEMENT {
                break;
            }
        }
    }

    Ok(ForecastModel {
        provider_id: series.provider_id().to_string(),
        params,
        norm: prepared.norm,
        config: cfg.clone(),
        training_loss_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace_model::{default_start, generate_synthetic_traces, SynthConfig};

    fn flat_model(head_bias: f64, norm: NormalizationParams, window_length: usize) -> ForecastModel {
        let mut params = LstmParams::zeros(4);
        params.set_head_bias(head_bias);
        let config = TrainConfig {
            window_length,
            hidden_size: 4,
            ..TrainConfig::default()
        };
        ForecastModel::from_parts("p", params, norm, config)
    }

    #[test]
    fn predict_next_denormalizes() {
        let m = flat_model(0.5, NormalizationParams { min_value: 0.0, max_value: 200.0 }, 3);
        assert_eq!(m.predict_next(&[10.0, 20.0, 30.0]).unwrap(), 100.0);
        let m = flat_model(0.0, NormalizationParams { min_value: 50.0, max_value: 150.0 }, 3);
        assert_eq!(m.predict_next(&[60.0, 70.0, 80.0]).unwrap(), 50.0);
        assert!(matches!(
            m.predict_next(&[1.0, 2.0]),
            Err(ForecastError::WindowLength { .. })
        ));
    }

    #[test]
    fn horizon_of_state_free_model_is_constant() {
        let norm = NormalizationParams { min_value: 0.0, max_value: 10.0 };
        let m = flat_model(0.3, norm, 2);
        assert_eq!(m.predict_horizon(&[1.0, 2.0], 4).unwrap(), vec![3.0; 4]);
        let m = flat_model(-0.3, norm, 2);
        assert_eq!(m.predict_horizon(&[1.0, 2.0], 2).unwrap(), vec![0.0; 2]);
        assert!(matches!(m.predict_horizon(&[1.0, 2.0], 0), Err(ForecastError::ZeroHorizon)));
    }

    #[test]
    fn horizon_matches_manual_unrolling() {
        let mut params = init_params(5, 9);
        params.set_head_bias(0.4);
        let config = TrainConfig {
            window_length: 4,
            hidden_size: 5,
            ..TrainConfig::default()
        };
        let norm = NormalizationParams { min_value: 20.0, max_value: 120.0 };
        let m = ForecastModel::from_parts("p", params, norm, config);
        let recent = [30.0, 80.0, 110.0, 60.0];
        let horizon = m.predict_horizon(&recent, 3).unwrap();
        assert_eq!(horizon[0], m.predict_next(&recent).unwrap());

        let w0 = norm.normalize(&recent);
        let y1 = forward_window(&m.params, &w0, 4).unwrap();
        let w1 = [w0[1], w0[2], w0[3], y1];
        let y2 = forward_window(&m.params, &w1, 4).unwrap();
        let w2 = [w0[2], w0[3], y1, y2];
        let y3 = forward_window(&m.params, &w2, 4).unwrap();
        assert_eq!(horizon, norm.denormalize(&[y1, y2, y3]));
    }

    #[test]
    fn constant_series_learns_midpoint() {
        let series = TraceSeries::new("flat", default_start(), vec![42.0; 200]).unwrap();
        let cfg = TrainConfig {
            hidden_size: 8,
            window_length: 12,
            epochs: 200,
            seed: 3,
            ..TrainConfig::default()
        };
        let model = train(&series, &cfg).unwrap();
        let prepared = prepare_series(&series, &cfg).unwrap();
        for (window, target) in prepared.test.pairs() {
            assert_eq!(target, 0.5);
            let y = model.predict_normalized(window).unwrap();
            assert!((y - 0.5).abs() < 1e-3, "{y}");
        }
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let synth = SynthConfig {
            provider_count: 1,
            noise_std: 0.0,
            ..SynthConfig::default()
        };
        let series = &generate_synthetic_traces(&synth).unwrap()[0];
        let cfg = TrainConfig {
            hidden_size: 8,
            epochs: 10,
            seed: 5,
            ..TrainConfig::default()
        };
        let a = train(series, &cfg).unwrap();
        let b = train(series, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.training_loss_history.len(), 10);
        assert!(a.training_loss_history.last() < a.training_loss_history.first());
    }

    #[test]
    fn early_stop_truncates_history() {
        let series = TraceSeries::new("flat", default_start(), vec![5.0; 120]).unwrap();
        let cfg = TrainConfig {
            hidden_size: 2,
            window_length: 6,
            epochs: 400,
            early_stop: true,
            ..TrainConfig::default()
        };
        let model = train(&series, &cfg).unwrap();
        assert!(model.training_loss_history.len() < 400);
    }

    #[test]
    fn short_series_is_rejected() {
        let series = TraceSeries::new("short", default_start(), vec![1.0; 20]).unwrap();
        let err = train(&series, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, ForecastError::Preprocess(PreprocessError::TooShortForWindow { .. })));
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
            TrainConfig { adam_beta1: 1.0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(ForecastError::Config(_))));
        }
    }
}
