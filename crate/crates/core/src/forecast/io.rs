//! Versioned JSON model files.

use serde::{Deserialize, Serialize};

use super::params::{Gate, LstmParams};
use super::{ForecastError, ForecastModel, TrainConfig};
use crate::preprocess::NormalizationParams;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GateDoc {
    gate: String,
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeadDoc {
    weights: Vec<f64>,
    bias: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    hidden_size: usize,
    input_size: usize,
    gates: Vec<GateDoc>,
    head: HeadDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format_version: u32,
    provider_id: String,
    config: TrainConfig,
    normalization: NormalizationParams,
    parameters: ParamsDoc,
    training_loss_history: Vec<f64>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

/// Serializes a model as pretty-printed JSON. Floats use the shortest
/// representation that parses back to the same bits.
pub fn save_model(model: &ForecastModel) -> Vec<u8> {
    let p = &model.params;
    let gates = Gate::ALL
        .iter()
        .map(|&g| GateDoc {
            gate: g.name().to_string(),
            rows: p.hidden_size(),
            cols: p.cols(),
            weights: p.weights(g).to_vec(),
            bias: p.bias(g).to_vec(),
        })
        .collect();
    let doc = ModelDoc {
        format_version: MODEL_FORMAT_VERSION,
        provider_id: model.provider_id.clone(),
        config: model.config.clone(),
        normalization: model.norm,
        parameters: ParamsDoc {
            hidden_size: p.hidden_size(),
            input_size: 1,
            gates,
            head: HeadDoc {
                weights: p.head_weights().to_vec(),
                bias: p.head_bias(),
            },
        },
        training_loss_history: model.training_loss_history.clone(),
    };
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("model document serializes");
    bytes.push(b'\n');
    bytes
}

pub fn load_model(bytes: &[u8]) -> Result<ForecastModel, ForecastError> {
    let corrupted = |msg: String| ForecastError::Corrupted(msg);
    let probe: VersionProbe = serde_json::from_slice(bytes).map_err(|e| corrupted(e.to_string()))?;
    if probe.format_version != MODEL_FORMAT_VERSION {
        return Err(ForecastError::Version {
            found: probe.format_version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let doc: ModelDoc = serde_json::from_slice(bytes).map_err(|e| corrupted(e.to_string()))?;
    let pd = &doc.parameters;
    let hidden = pd.hidden_size;
    if hidden == 0 || pd.input_size != 1 {
        return Err(corrupted(format!(
            "unsupported dimensions hidden={hidden} input={}",
            pd.input_size
        )));
    }
    if pd.gates.len() != 4 {
        return Err(corrupted(format!("expected 4 gates, found {}", pd.gates.len())));
    }
    let mut params = LstmParams::zeros(hidden);
    for (gate, gd) in Gate::ALL.iter().zip(&pd.gates) {
        if gd.gate != gate.name() || gd.rows != hidden || gd.cols != hidden + 1 {
            return Err(corrupted(format!("gate {} has unexpected name or shape", gd.gate)));
        }
        if gd.weights.len() != hidden * (hidden + 1) || gd.bias.len() != hidden {
            return Err(corrupted(format!("gate {} has wrong array lengths", gd.gate)));
        }
        params.weights_mut(*gate).copy_from_slice(&gd.weights);
        params.bias_mut(*gate).copy_from_slice(&gd.bias);
    }
    if pd.head.weights.len() != hidden {
        return Err(corrupted("head weights have wrong length".into()));
    }
    params.head_weights_mut().copy_from_slice(&pd.head.weights);
    params.set_head_bias(pd.head.bias);
    if doc.config.hidden_size != hidden {
        return Err(corrupted("config hidden_size disagrees with parameters".into()));
    }
    doc.config
        .validate()
        .map_err(|e| corrupted(e.to_string()))?;
    Ok(ForecastModel {
        provider_id: doc.provider_id,
        params,
        norm: doc.normalization,
        config: doc.config,
        training_loss_history: doc.training_loss_history,
    })
}
