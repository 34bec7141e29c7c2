//! PNNC binary checkpoints.
//!
//! Layout:
//!
//! ```text
//! bytes 0..4   magic "PNNC"
//! bytes 4..8   format version, little-endian u32 (currently 1)
//! bytes 8..16  header length N, little-endian u64
//! N bytes      UTF-8 JSON: {"input_dim": ..., "layers": [...]}
//! rest         every parameter tensor as little-endian f32,
//!              in declaration order
//! ```
//!
//! Layer kind codes: 0 dense, 1 conv1d, 2 maxpool1d, 3 gru, 4 flatten.
//! Codes 5 (lstm) and 6 (parallel branch group) are reserved for layer
//! kinds the format anticipates but this crate does not implement;
//! loading them fails with [`CheckpointError::ReservedLayerKind`].

use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use thiserror::Error;

use crate::nn::params::{LayerParams, Parameters};
use crate::nn::tensor::TensorBuffer;
use crate::nn::{Activation, LayerSpec, ModelConfig, NnError};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"PNNC";
pub const VERSION: u32 = 1;

pub const KIND_DENSE: u64 = 0;
pub const KIND_CONV1D: u64 = 1;
pub const KIND_MAXPOOL1D: u64 = 2;
pub const KIND_GRU: u64 = 3;
pub const KIND_FLATTEN: u64 = 4;
pub const KIND_LSTM_RESERVED: u64 = 5;
pub const KIND_PARALLEL_RESERVED: u64 = 6;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a PNNC file (bad magic)")]
    BadMagic,
    #[error("unsupported PNNC version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("layer kind {0} is reserved but not supported by this build")]
    ReservedLayerKind(u64),
    #[error("unknown layer kind {0}")]
    UnknownLayerKind(u64),
    #[error("model is invalid: {0}")]
    Invalid(#[from] NnError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn layer_to_json(layer: &LayerSpec) -> Value {
    match layer {
        LayerSpec::Dense {
            in_dim,
            out_dim,
            activation,
            l2_weight,
            dropout_rate,
        } => json!({
            "kind": KIND_DENSE,
            "in_dim": in_dim,
            "out_dim": out_dim,
            "activation": match activation {
                Activation::ReLU => "relu",
                Activation::Sigmoid => "sigmoid",
                Activation::None => "none",
            },
            "l2_weight": l2_weight,
            "dropout_rate": dropout_rate,
        }),
        LayerSpec::Conv1D {
            in_channels,
            filters,
            kernel_size,
        } => json!({
            "kind": KIND_CONV1D,
            "in_channels": in_channels,
            "filters": filters,
            "kernel_size": kernel_size,
            "padding": "same",
        }),
        LayerSpec::MaxPool1D { pool_size } => json!({
            "kind": KIND_MAXPOOL1D,
            "pool_size": pool_size,
        }),
        LayerSpec::Gru { units, dropout_rate } => json!({
            "kind": KIND_GRU,
            "units": units,
            "dropout_rate": dropout_rate,
        }),
        LayerSpec::Flatten => json!({ "kind": KIND_FLATTEN }),
    }
}

fn get_u64(obj: &Value, key: &str) -> Result<u64, CheckpointError> {
    obj.get(key)
        .and_then(Value::as_u64)
        .ok_or_else(|| CheckpointError::MalformedHeader(format!("missing integer field {key:?}")))
}

fn get_f64(obj: &Value, key: &str) -> Result<f64, CheckpointError> {
    obj.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| CheckpointError::MalformedHeader(format!("missing number field {key:?}")))
}

fn layer_from_json(value: &Value) -> Result<LayerSpec, CheckpointError> {
    let kind = get_u64(value, "kind")?;
    Ok(match kind {
        KIND_DENSE => {
            let activation = match value.get("activation").and_then(Value::as_str) {
                Some("relu") => Activation::ReLU,
                Some("sigmoid") => Activation::Sigmoid,
                Some("none") => Activation::None,
                other => {
                    return Err(CheckpointError::MalformedHeader(format!(
                        "bad activation {other:?}"
                    )))
                }
            };
            LayerSpec::Dense {
                in_dim: get_u64(value, "in_dim")? as usize,
                out_dim: get_u64(value, "out_dim")? as usize,
                activation,
                l2_weight: get_f64(value, "l2_weight")?,
                dropout_rate: get_f64(value, "dropout_rate")?,
            }
        }
        KIND_CONV1D => LayerSpec::Conv1D {
            in_channels: get_u64(value, "in_channels")? as usize,
            filters: get_u64(value, "filters")? as usize,
            kernel_size: get_u64(value, "kernel_size")? as usize,
        },
        KIND_MAXPOOL1D => LayerSpec::MaxPool1D {
            pool_size: get_u64(value, "pool_size")? as usize,
        },
        KIND_GRU => LayerSpec::Gru {
            units: get_u64(value, "units")? as usize,
            dropout_rate: get_f64(value, "dropout_rate")?,
        },
        KIND_FLATTEN => LayerSpec::Flatten,
        KIND_LSTM_RESERVED | KIND_PARALLEL_RESERVED => {
            return Err(CheckpointError::ReservedLayerKind(kind))
        }
        other => return Err(CheckpointError::UnknownLayerKind(other)),
    })
}

/// Serializes a model and its parameters. Values are stored as `f32`
/// regardless of the in-memory scalar type.
pub fn encode<S: Scalar>(model: &ModelConfig, params: &Parameters<S>) -> Vec<u8> {
    let header = json!({
        "input_dim": model.input_dim,
        "layers": model.layers.iter().map(layer_to_json).collect::<Vec<_>>(),
    })
    .to_string();
    let header_bytes = header.as_bytes();

    let value_count: usize = params.iter_tensors().map(|t| t.len()).sum();
    let mut out = Vec::with_capacity(16 + header_bytes.len() + 4 * value_count);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(header_bytes);
    for tensor in params.iter_tensors() {
        for &v in &tensor.values {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

/// Parses a checkpoint. The returned config carries seed 0; seeds matter
/// only for initialization and training-time dropout, not inference.
pub fn decode<S: Scalar>(bytes: &[u8]) -> Result<(ModelConfig, Parameters<S>), CheckpointError> {
    if bytes.len() < 16 {
        return Err(CheckpointError::Truncated("missing preamble".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| CheckpointError::Truncated("header extends past end of file".into()))?;
    let header: Value = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| CheckpointError::MalformedHeader(e.to_string()))?;

    let input_dim = get_u64(&header, "input_dim")? as usize;
    let layers_json = header
        .get("layers")
        .and_then(Value::as_array)
        .ok_or_else(|| CheckpointError::MalformedHeader("missing layers array".into()))?;
    let layers = layers_json
        .iter()
        .map(layer_from_json)
        .collect::<Result<Vec<_>, _>>()?;
    let model = ModelConfig::new(input_dim, layers, 0)?;

    // Shapes come from the validated spec; read values in declaration order.
    let template = crate::nn::params::init_parameters::<S>(&model)?;
    let mut offset = header_end;
    let mut layers_out = Vec::with_capacity(template.layers.len());
    for layer in &template.layers {
        let mut tensors_out: Vec<TensorBuffer<S>> = Vec::new();
        for tensor in layer.tensors() {
            let n = tensor.len();
            let end = offset + 4 * n;
            if end > bytes.len() {
                return Err(CheckpointError::Truncated(format!(
                    "expected {n} f32 values at offset {offset}"
                )));
            }
            let values: Vec<S> = bytes[offset..end]
                .chunks_exact(4)
                .map(|c| S::from_real(f32::from_le_bytes(c.try_into().unwrap()) as f64))
                .collect();
            tensors_out.push(TensorBuffer::from_vec(tensor.shape(), values));
            offset = end;
        }
        layers_out.push(rebuild_layer(layer, tensors_out));
    }
    if offset != bytes.len() {
        return Err(CheckpointError::Truncated(format!(
            "{} trailing bytes after parameters",
            bytes.len() - offset
        )));
    }
    Ok((model, Parameters { layers: layers_out }))
}

fn rebuild_layer<S: Scalar>(
    template: &LayerParams<S>,
    mut tensors: Vec<TensorBuffer<S>>,
) -> LayerParams<S> {
    match template {
        LayerParams::Dense { .. } => {
            let bias = tensors.pop().unwrap();
            let weight = tensors.pop().unwrap();
            LayerParams::Dense { weight, bias }
        }
        LayerParams::Conv1D { .. } => {
            let bias = tensors.pop().unwrap();
            let kernel = tensors.pop().unwrap();
            LayerParams::Conv1D { kernel, bias }
        }
        LayerParams::Gru { .. } => {
            let bias = tensors.pop().unwrap();
            let recurrent = tensors.pop().unwrap();
            let kernel = tensors.pop().unwrap();
            LayerParams::Gru {
                kernel,
                recurrent,
                bias,
            }
        }
        LayerParams::None => LayerParams::None,
    }
}

pub fn save<S: Scalar>(
    model: &ModelConfig,
    params: &Parameters<S>,
    path: &Path,
) -> Result<(), CheckpointError> {
    fs::write(path, encode(model, params)).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load<S: Scalar>(path: &Path) -> Result<(ModelConfig, Parameters<S>), CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}
