//! From-scratch differentiable layers sufficient for permission-vector
//! classifiers: dense, 1-D convolution, max pooling, a GRU cell, inverted
//! dropout, per-layer L2, binary cross-entropy, Adam/SGD, and a
//! finite-difference gradient checker.
//!
//! Everything is generic over [`crate::scalar::Scalar`]; training normally
//! runs at `f64` (see the crate-root aliases).

pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod optim;
pub mod params;
pub mod tensor;

use thiserror::Error;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use model::{backward, bce_loss, forward, forward_train, ForwardMode};
pub use optim::{optimizer_step, Algorithm, OptimizerConfig, OptimizerState};
pub use params::{init_parameters, LayerParams, Parameters};
pub use tensor::TensorBuffer;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("incompatible dimensions at layer {layer}: {message}")]
    IncompatibleDims { layer: usize, message: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation in layer {layer} at flat index {index}")]
    NonFiniteActivation { layer: usize, index: usize },
}

/// Element-wise nonlinearity of a dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    ReLU,
    Sigmoid,
    None,
}

/// One layer of a model. Convolutions always use Same zero padding and a
/// ReLU nonlinearity; pooling windows are non-overlapping with the
/// trailing remainder dropped; the GRU returns its final hidden state.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        l2_weight: f64,
        dropout_rate: f64,
    },
    Conv1D {
        in_channels: usize,
        filters: usize,
        kernel_size: usize,
    },
    MaxPool1D {
        pool_size: usize,
    },
    Gru {
        units: usize,
        dropout_rate: f64,
    },
    Flatten,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv1D { .. } => "conv1d",
            LayerSpec::MaxPool1D { .. } => "maxpool1d",
            LayerSpec::Gru { .. } => "gru",
            LayerSpec::Flatten => "flatten",
        }
    }

    pub fn l2_weight(&self) -> f64 {
        match self {
            LayerSpec::Dense { l2_weight, .. } => *l2_weight,
            _ => 0.0,
        }
    }

    pub fn dropout_rate(&self) -> f64 {
        match self {
            LayerSpec::Dense { dropout_rate, .. } | LayerSpec::Gru { dropout_rate, .. } => {
                *dropout_rate
            }
            _ => 0.0,
        }
    }
}

/// Data shape flowing between layers: either a flat feature vector or a
/// `[length, channels]` sequence (the leading batch axis is implicit).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeState {
    Flat(usize),
    Seq { len: usize, channels: usize },
}

impl std::fmt::Display for ShapeState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShapeState::Flat(n) => write!(f, "[{n}]"),
            ShapeState::Seq { len, channels } => write!(f, "[{len}, {channels}]"),
        }
    }
}

/// A validated layer stack over a fixed input width.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
}

impl ModelConfig {
    /// Validates dimension compatibility and the output contract (a single
    /// sigmoid unit). Returns the config on success.
    pub fn new(input_dim: usize, layers: Vec<LayerSpec>, seed: u64) -> Result<Self, NnError> {
        let config = ModelConfig {
            input_dim,
            layers,
            seed,
        };
        config.shape_trace()?;
        Ok(config)
    }

    /// Whether the flat input is reshaped to a `[P, 1]` sequence before the
    /// first layer (convolutional and recurrent stacks).
    pub fn sequence_input(&self) -> bool {
        matches!(
            self.layers.first(),
            Some(LayerSpec::Conv1D { .. }) | Some(LayerSpec::Gru { .. })
        )
    }

    /// Per-layer output shapes, validating every transition.
    pub fn shape_trace(&self) -> Result<Vec<ShapeState>, NnError> {
        if self.input_dim == 0 {
            return Err(NnError::IncompatibleDims {
                layer: 0,
                message: "input_dim must be positive".into(),
            });
        }
        let err = |layer: usize, message: String| NnError::IncompatibleDims { layer, message };
        let mut state = if self.sequence_input() {
            ShapeState::Seq {
                len: self.input_dim,
                channels: 1,
            }
        } else {
            ShapeState::Flat(self.input_dim)
        };
        let mut trace = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            state = match (layer, state) {
                (
                    LayerSpec::Dense {
                        in_dim,
                        out_dim,
                        dropout_rate,
                        l2_weight,
                        ..
                    },
                    ShapeState::Flat(width),
                ) => {
                    if *in_dim == 0 || *out_dim == 0 {
                        return Err(err(i, "dense dims must be positive".into()));
                    }
                    if *in_dim != width {
                        return Err(err(i, format!("dense expects {in_dim} inputs, got {width}")));
                    }
                    if !(0.0..1.0).contains(dropout_rate) {
                        return Err(err(i, format!("dropout rate {dropout_rate} outside [0,1)")));
                    }
                    if *l2_weight < 0.0 {
                        return Err(err(i, format!("negative l2 weight {l2_weight}")));
                    }
                    ShapeState::Flat(*out_dim)
                }
                (LayerSpec::Dense { .. }, seq) => {
                    return Err(err(i, format!("dense layer fed sequence shape {seq}")))
                }
                (
                    LayerSpec::Conv1D {
                        in_channels,
                        filters,
                        kernel_size,
                    },
                    ShapeState::Seq { len, channels },
                ) => {
                    if *filters == 0 || *kernel_size == 0 || *in_channels == 0 {
                        return Err(err(i, "conv dims must be positive".into()));
                    }
                    if *in_channels != channels {
                        return Err(err(
                            i,
                            format!("conv expects {in_channels} channels, got {channels}"),
                        ));
                    }
                    ShapeState::Seq {
                        len,
                        channels: *filters,
                    }
                }
                (LayerSpec::Conv1D { .. }, flat) => {
                    return Err(err(i, format!("conv layer fed flat shape {flat}")))
                }
                (LayerSpec::MaxPool1D { pool_size }, ShapeState::Seq { len, channels }) => {
                    if *pool_size == 0 {
                        return Err(err(i, "pool size must be positive".into()));
                    }
                    if len < *pool_size {
                        return Err(err(
                            i,
                            format!("pool size {pool_size} exceeds sequence length {len}"),
                        ));
                    }
                    ShapeState::Seq {
                        len: len / pool_size,
                        channels,
                    }
                }
                (LayerSpec::MaxPool1D { .. }, flat) => {
                    return Err(err(i, format!("pool layer fed flat shape {flat}")))
                }
                (LayerSpec::Gru { units, dropout_rate }, ShapeState::Seq { len, .. }) => {
                    if *units == 0 {
                        return Err(err(i, "gru units must be positive".into()));
                    }
                    if len == 0 {
                        return Err(err(i, "gru needs at least one timestep".into()));
                    }
                    if !(0.0..1.0).contains(dropout_rate) {
                        return Err(err(i, format!("dropout rate {dropout_rate} outside [0,1)")));
                    }
                    ShapeState::Flat(*units)
                }
                (LayerSpec::Gru { .. }, flat) => {
                    return Err(err(i, format!("gru layer fed flat shape {flat}")))
                }
                (LayerSpec::Flatten, ShapeState::Seq { len, channels }) => {
                    ShapeState::Flat(len * channels)
                }
                (LayerSpec::Flatten, flat) => flat,
            };
            trace.push(state);
        }
        match self.layers.last() {
            Some(LayerSpec::Dense {
                out_dim: 1,
                activation: Activation::Sigmoid,
                ..
            }) => Ok(trace),
            _ => Err(NnError::IncompatibleDims {
                layer: self.layers.len().saturating_sub(1),
                message: "final layer must be a 1-unit sigmoid dense layer".into(),
            }),
        }
    }
}

/// Shorthand for an output head: `Dense { out_dim: 1, Sigmoid }`.
pub fn output_layer(in_dim: usize) -> LayerSpec {
    LayerSpec::Dense {
        in_dim,
        out_dim: 1,
        activation: Activation::Sigmoid,
        l2_weight: 0.0,
        dropout_rate: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(in_dim: usize, out_dim: usize) -> LayerSpec {
        LayerSpec::Dense {
            in_dim,
            out_dim,
            activation: Activation::ReLU,
            l2_weight: 0.0,
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn dense_chain_validates() {
        let config =
            ModelConfig::new(10, vec![dense(10, 4), dense(4, 3), output_layer(3)], 0).unwrap();
        let trace = config.shape_trace().unwrap();
        assert_eq!(
            trace,
            vec![ShapeState::Flat(4), ShapeState::Flat(3), ShapeState::Flat(1)]
        );
    }

    #[test]
    fn mismatched_dense_rejected() {
        assert!(ModelConfig::new(10, vec![dense(9, 4), output_layer(4)], 0).is_err());
    }

    #[test]
    fn missing_sigmoid_head_rejected() {
        assert!(ModelConfig::new(10, vec![dense(10, 1)], 0).is_err());
    }

    #[test]
    fn conv_stack_length_arithmetic() {
        // 398 -> conv k10 (same) -> pool 2 -> conv k5 -> pool 3 -> conv k3
        // -> pool 2: lengths 398, 199, 199, 66, 66, 33; flatten 33*30 = 990.
        let layers = vec![
            LayerSpec::Conv1D { in_channels: 1, filters: 5, kernel_size: 10 },
            LayerSpec::MaxPool1D { pool_size: 2 },
            LayerSpec::Conv1D { in_channels: 5, filters: 80, kernel_size: 5 },
            LayerSpec::MaxPool1D { pool_size: 3 },
            LayerSpec::Conv1D { in_channels: 80, filters: 30, kernel_size: 3 },
            LayerSpec::MaxPool1D { pool_size: 2 },
            LayerSpec::Flatten,
            output_layer(990),
        ];
        let config = ModelConfig::new(398, layers, 0).unwrap();
        assert!(config.sequence_input());
        let trace = config.shape_trace().unwrap();
        assert_eq!(trace[0], ShapeState::Seq { len: 398, channels: 5 });
        assert_eq!(trace[1], ShapeState::Seq { len: 199, channels: 5 });
        assert_eq!(trace[2], ShapeState::Seq { len: 199, channels: 80 });
        assert_eq!(trace[3], ShapeState::Seq { len: 66, channels: 80 });
        assert_eq!(trace[4], ShapeState::Seq { len: 66, channels: 30 });
        assert_eq!(trace[5], ShapeState::Seq { len: 33, channels: 30 });
        assert_eq!(trace[6], ShapeState::Flat(990));
    }

    #[test]
    fn gru_flattens_to_units() {
        let layers = vec![
            LayerSpec::Gru { units: 7, dropout_rate: 0.2 },
            dense(7, 4),
            output_layer(4),
        ];
        let config = ModelConfig::new(12, layers, 0).unwrap();
        assert!(config.sequence_input());
        assert_eq!(config.shape_trace().unwrap()[0], ShapeState::Flat(7));
    }
}
