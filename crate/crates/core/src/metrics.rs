//! Forecast-quality metrics over held-out pairs.
//!
//! All metrics are computed in normalized units unless converted with
//! [`EvalReport::denormalized`]. `rmse` is always exactly `sqrt(mse)`; a
//! separately rounded rmse (as some published tables show) is not
//! reproduced here.

use crate::forecast::{ForecastError, ForecastModel};
use crate::preprocess::{NormalizationParams, SupervisedDataset};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("length mismatch: {actual} actual vs {predicted} predicted values")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("metrics need at least one value")]
    Empty,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("model window length {model} does not match dataset window length {dataset}")]
    WindowMismatch { model: usize, dataset: usize },
    #[error(transparent)]
    Forecast(#[from] ForecastError),
}

fn residuals(actual: &[f64], predicted: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if actual.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(MetricsError::Empty);
    }
    actual
        .iter()
        .zip(predicted)
        .enumerate()
        .map(|(i, (a, p))| {
            if a.is_finite() && p.is_finite() {
                Ok(p - a)
            } else {
                Err(MetricsError::NonFinite(i))
            }
        })
        .collect()
}

pub fn mse(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    let r = residuals(actual, predicted)?;
    Ok(r.iter().map(|e| e * e).sum::<f64>() / r.len() as f64)
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    mse(actual, predicted).map(f64::sqrt)
}

pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    let r = residuals(actual, predicted)?;
    Ok(r.iter().map(|e| e.abs()).sum::<f64>() / r.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub provider_id: String,
    pub n_test: usize,
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
    /// `predicted - actual`, one per test hour.
    pub residuals: Vec<f64>,
}

impl EvalReport {
    pub fn from_predictions(
        provider_id: impl Into<String>,
        actual: Vec<f64>,
        predicted: Vec<f64>,
    ) -> Result<Self, MetricsError> {
        let residuals = residuals(&actual, &predicted)?;
        let mse = mse(&actual, &predicted)?;
        Ok(Self {
            provider_id: provider_id.into(),
            n_test: actual.len(),
            mse,
            rmse: mse.sqrt(),
            mae: mae(&actual, &predicted)?,
            actual,
            predicted,
            residuals,
        })
    }

    /// The same report in Mbps.
    pub fn denormalized(&self, norm: &NormalizationParams) -> Self {
        let actual = norm.denormalize(&self.actual);
        let predicted = norm.denormalize(&self.predicted);
        let range = norm.range();
        Self {
            provider_id: self.provider_id.clone(),
            n_test: self.n_test,
            mse: self.mse * range * range,
            rmse: self.rmse * range,
            mae: self.mae * range,
            residuals: self.residuals.iter().map(|r| r * range).collect(),
            actual,
            predicted,
        }
    }
}

/// One-step predictions of `model` on every pair of `test`.
pub fn evaluate(model: &ForecastModel, test: &SupervisedDataset) -> Result<EvalReport, MetricsError> {
    if test.is_empty() {
        return Err(MetricsError::Empty);
    }
    if model.window_length() != test.window_length() {
        return Err(MetricsError::WindowMismatch {
            model: model.window_length(),
            dataset: test.window_length(),
        });
    }
    let predicted = test
        .inputs()
        .iter()
        .map(|w| model.predict_normalized(w))
        .collect::<Result<Vec<_>, _>>()?;
    EvalReport::from_predictions(model.provider_id.clone(), test.targets().to_vec(), predicted)
}

/// Last value of each input window as the forecast.
pub fn persistence_baseline(
    provider_id: impl Into<String>,
    test: &SupervisedDataset,
) -> Result<EvalReport, MetricsError> {
    if test.is_empty() {
        return Err(MetricsError::Empty);
    }
    let predicted = test
        .inputs()
        .iter()
        .map(|w| *w.last().expect("windows are non-empty"))
        .collect();
    EvalReport::from_predictions(provider_id, test.targets().to_vec(), predicted)
}

pub const EVAL_HEADER: &str = "provider_id,n_test,mse,rmse,mae,method";
pub const RESIDUAL_HEADER: &str = "provider_id,method,index,actual,predicted,residual";

/// Eval table; each row is `(report, method label)`.
pub fn emit_eval_csv(rows: &[(&EvalReport, &str)]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(EVAL_HEADER.split(',')).expect("in-memory write");
    for (r, method) in rows {
        wtr.write_record([
            r.provider_id.clone(),
            r.n_test.to_string(),
            r.mse.to_string(),
            r.rmse.to_string(),
            r.mae.to_string(),
            method.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory")).expect("utf-8")
}

/// Per-hour residuals for plotting.
pub fn emit_residual_csv(rows: &[(&EvalReport, &str)]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(RESIDUAL_HEADER.split(',')).expect("in-memory write");
    for (r, method) in rows {
        for i in 0..r.n_test {
            wtr.write_record([
                r.provider_id.clone(),
                method.to_string(),
                i.to_string(),
                r.actual[i].to_string(),
                r.predicted[i].to_string(),
                r.residuals[i].to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(wtr.into_inner().expect("in-memory")).expect("utf-8")
}
