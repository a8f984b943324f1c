//! JSON model checkpoints (`goldcorrect-model/1`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Activation, MlpModel};
use crate::error::{Error, Result};

pub const MODEL_VERSION: &str = "goldcorrect-model/1";

#[derive(Debug, Serialize, Deserialize)]
struct LayerRecord {
    rows: usize,
    cols: usize,
    /// Row-major `rows × cols` weights (`rows` = fan-in).
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    version: String,
    input_dim: usize,
    hidden_dims: Vec<usize>,
    output_dim: usize,
    activation: Activation,
    layers: Vec<LayerRecord>,
}

impl MlpModel {
    pub fn to_checkpoint_json(&self) -> serde_json::Value {
        let layers = self
            .layer_shapes()
            .iter()
            .enumerate()
            .map(|(l, s)| LayerRecord {
                rows: s.fan_in,
                cols: s.fan_out,
                weights: self.layer_weights(l).to_vec(),
                bias: self.layer_bias(l).to_vec(),
            })
            .collect();
        serde_json::to_value(Checkpoint {
            version: MODEL_VERSION.to_string(),
            input_dim: self.input_dim(),
            hidden_dims: self.hidden_dims().to_vec(),
            output_dim: self.output_dim(),
            activation: self.activation(),
            layers,
        })
        .expect("checkpoint serializes")
    }

    pub fn from_checkpoint_json(value: serde_json::Value) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_value(value)?;
        if ck.version != MODEL_VERSION {
            return Err(Error::invalid(format!("unsupported model version {:?}", ck.version)));
        }
        let mut model = MlpModel::zeros(ck.input_dim, ck.hidden_dims, ck.output_dim, ck.activation)?;
        if ck.layers.len() != model.num_layers() {
            return Err(Error::invalid(format!(
                "checkpoint has {} layers, architecture implies {}",
                ck.layers.len(),
                model.num_layers()
            )));
        }
        for (l, rec) in ck.layers.iter().enumerate() {
            let shape = model.layer_shapes()[l];
            if rec.rows != shape.fan_in || rec.cols != shape.fan_out {
                return Err(Error::invalid(format!(
                    "layer {l} is {}x{} but the architecture needs {}x{}",
                    rec.rows, rec.cols, shape.fan_in, shape.fan_out
                )));
            }
            model.set_layer(l, &rec.weights, &rec.bias)?;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint_json())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value = serde_json::from_str(&text).map_err(|e| Error::format(path, format!("line {}", e.line()), e.to_string()))?;
        Self::from_checkpoint_json(value).map_err(|e| match e {
            Error::InvalidInput(msg) => Error::format(path, "document", msg),
            Error::Json(j) => Error::format(path, "document", j.to_string()),
            other => other,
        })
    }
}
