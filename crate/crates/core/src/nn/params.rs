//! Trainable weights and their seeded initialization.

use rand::Rng;

use crate::nn::tensor::TensorBuffer;
use crate::nn::{Activation, LayerSpec, ModelConfig, NnError, ShapeState};
use crate::rng;
use crate::scalar::Scalar;

const STREAM_INIT: u64 = 0x11A7;

/// Weights of one layer. GRU gate tensors concatenate the update, reset,
/// and candidate blocks along the output axis, in that order.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams<S: Scalar> {
    Dense {
        /// `[in_dim, out_dim]`
        weight: TensorBuffer<S>,
        /// `[out_dim]`
        bias: TensorBuffer<S>,
    },
    Conv1D {
        /// `[kernel_size, in_channels, filters]`
        kernel: TensorBuffer<S>,
        /// `[filters]`
        bias: TensorBuffer<S>,
    },
    Gru {
        /// `[features, 3*units]`
        kernel: TensorBuffer<S>,
        /// `[units, 3*units]`
        recurrent: TensorBuffer<S>,
        /// `[3*units]`
        bias: TensorBuffer<S>,
    },
    None,
}

impl<S: Scalar> LayerParams<S> {
    pub fn tensors(&self) -> Vec<&TensorBuffer<S>> {
        match self {
            LayerParams::Dense { weight, bias } => vec![weight, bias],
            LayerParams::Conv1D { kernel, bias } => vec![kernel, bias],
            LayerParams::Gru {
                kernel,
                recurrent,
                bias,
            } => vec![kernel, recurrent, bias],
            LayerParams::None => vec![],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut TensorBuffer<S>> {
        match self {
            LayerParams::Dense { weight, bias } => vec![weight, bias],
            LayerParams::Conv1D { kernel, bias } => vec![kernel, bias],
            LayerParams::Gru {
                kernel,
                recurrent,
                bias,
            } => vec![kernel, recurrent, bias],
            LayerParams::None => vec![],
        }
    }

    /// The weight tensors the L2 penalty applies to (biases exempt).
    pub fn penalized_tensors(&self) -> Vec<&TensorBuffer<S>> {
        match self {
            LayerParams::Dense { weight, .. } => vec![weight],
            LayerParams::Conv1D { kernel, .. } => vec![kernel],
            LayerParams::Gru { kernel, recurrent, .. } => vec![kernel, recurrent],
            LayerParams::None => vec![],
        }
    }
}

/// All weights of a model, one entry per layer (parameterless layers hold
/// [`LayerParams::None`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<S: Scalar> {
    pub layers: Vec<LayerParams<S>>,
}

impl<S: Scalar> Parameters<S> {
    /// Flat view in checkpoint declaration order.
    pub fn iter_tensors(&self) -> impl Iterator<Item = &TensorBuffer<S>> {
        self.layers.iter().flat_map(|l| l.tensors())
    }

    pub fn iter_tensors_mut(&mut self) -> impl Iterator<Item = &mut TensorBuffer<S>> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut())
    }

    pub fn zeros_like(&self) -> Self {
        Parameters {
            layers: self
                .layers
                .iter()
                .map(|layer| match layer {
                    LayerParams::Dense { weight, bias } => LayerParams::Dense {
                        weight: weight.zeros_like(),
                        bias: bias.zeros_like(),
                    },
                    LayerParams::Conv1D { kernel, bias } => LayerParams::Conv1D {
                        kernel: kernel.zeros_like(),
                        bias: bias.zeros_like(),
                    },
                    LayerParams::Gru {
                        kernel,
                        recurrent,
                        bias,
                    } => LayerParams::Gru {
                        kernel: kernel.zeros_like(),
                        recurrent: recurrent.zeros_like(),
                        bias: bias.zeros_like(),
                    },
                    LayerParams::None => LayerParams::None,
                })
                .collect(),
        }
    }

    pub fn total_len(&self) -> usize {
        self.iter_tensors().map(|t| t.len()).sum()
    }
}

/// Gradients mirror the parameter layout exactly.
pub type GradientBundle<S> = Parameters<S>;

fn uniform_tensor<S: Scalar>(shape: &[usize], limit: f64, seed: u64) -> TensorBuffer<S> {
    let mut rng = rng::seeded(seed);
    let len = shape.iter().product();
    let values = (0..len)
        .map(|_| S::from_real((2.0 * rng.random::<f64>() - 1.0) * limit))
        .collect();
    TensorBuffer::from_vec(shape, values)
}

fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn relu_limit(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// Seeded weight initialization: zero-mean uniform with limit
/// `sqrt(6/fan_in)` for ReLU layers and `sqrt(6/(fan_in+fan_out))`
/// otherwise; all biases start at zero.
pub fn init_parameters<S: Scalar>(config: &ModelConfig) -> Result<Parameters<S>, NnError> {
    let trace = config.shape_trace()?;
    let mut state = if config.sequence_input() {
        ShapeState::Seq {
            len: config.input_dim,
            channels: 1,
        }
    } else {
        ShapeState::Flat(config.input_dim)
    };
    let mut layers = Vec::with_capacity(config.layers.len());
    for (i, layer) in config.layers.iter().enumerate() {
        let tensor_seed =
            |slot: u64| rng::derive_seed(config.seed, STREAM_INIT ^ ((i as u64) << 8) ^ slot);
        let params = match (layer, state) {
            (
                LayerSpec::Dense {
                    in_dim,
                    out_dim,
                    activation,
                    ..
                },
                _,
            ) => {
                let limit = match activation {
                    Activation::ReLU => relu_limit(*in_dim),
                    Activation::Sigmoid | Activation::None => glorot_limit(*in_dim, *out_dim),
                };
                LayerParams::Dense {
                    weight: uniform_tensor(&[*in_dim, *out_dim], limit, tensor_seed(0)),
                    bias: TensorBuffer::zeros(&[*out_dim]),
                }
            }
            (
                LayerSpec::Conv1D {
                    in_channels,
                    filters,
                    kernel_size,
                },
                _,
            ) => {
                // Convolutions are ReLU-activated.
                let fan_in = kernel_size * in_channels;
                LayerParams::Conv1D {
                    kernel: uniform_tensor(
                        &[*kernel_size, *in_channels, *filters],
                        relu_limit(fan_in),
                        tensor_seed(0),
                    ),
                    bias: TensorBuffer::zeros(&[*filters]),
                }
            }
            (LayerSpec::Gru { units, .. }, ShapeState::Seq { channels, .. }) => {
                let features = channels;
                LayerParams::Gru {
                    kernel: uniform_tensor(
                        &[features, 3 * units],
                        glorot_limit(features, *units),
                        tensor_seed(0),
                    ),
                    recurrent: uniform_tensor(
                        &[*units, 3 * units],
                        glorot_limit(*units, *units),
                        tensor_seed(1),
                    ),
                    bias: TensorBuffer::zeros(&[3 * units]),
                }
            }
            (LayerSpec::Gru { .. }, _) => unreachable!("validated by shape_trace"),
            (LayerSpec::MaxPool1D { .. } | LayerSpec::Flatten, _) => LayerParams::None,
        };
        layers.push(params);
        state = trace[i];
    }
    Ok(Parameters { layers })
}
