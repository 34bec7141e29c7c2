//! Named architectures.
//!
//! Every preset ends in a single sigmoid unit and uses ReLU activations
//! elsewhere. The dense stack of three hidden layers carries staggered
//! dropout rates 0.25 / 0.5 / 0.75 throughout; the L2 weights differ per
//! preset:
//!
//! * `nn-1024`: dense 1024 x 2048 x 1024, staggered L2 0.0005 / 0.001 / 0.002
//! * `nn-4096`: dense 4096 x 8192 x 4096, same staggered L2
//! * `cnn`: conv filters 5 / 80 / 30 with kernels 10 / 5 / 3 (Same padding),
//!   pools 2 / 3 / 2, then the dense stack at a uniform L2 of 0.002
//! * `gru`: one 150-unit GRU with 20% input dropout, then the dense stack
//!   at a uniform L2 of 0.0004
//!
//! `--hidden w1,w2,w3` rescales the dense stack while keeping each
//! preset's regularization pattern.

use std::fmt;
use std::str::FromStr;

use permnet_core::nn::{output_layer, Activation, LayerSpec, ModelConfig, NnError};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Nn1024,
    Nn4096,
    Cnn,
    Gru,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Nn1024, Preset::Nn4096, Preset::Cnn, Preset::Gru];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Nn1024 => "nn-1024",
            Preset::Nn4096 => "nn-4096",
            Preset::Cnn => "cnn",
            Preset::Gru => "gru",
        }
    }

    fn default_hidden(self) -> [usize; 3] {
        match self {
            Preset::Nn4096 => [4096, 8192, 4096],
            _ => [1024, 2048, 1024],
        }
    }

    fn dense_l2(self) -> [f64; 3] {
        match self {
            Preset::Nn1024 | Preset::Nn4096 => [0.0005, 0.001, 0.002],
            Preset::Cnn => [0.002; 3],
            Preset::Gru => [0.0004; 3],
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nn-1024" => Ok(Preset::Nn1024),
            "nn-4096" => Ok(Preset::Nn4096),
            "cnn" => Ok(Preset::Cnn),
            "gru" => Ok(Preset::Gru),
            other => Err(CliError::Config(format!(
                "unknown preset {other:?} (expected nn-1024, nn-4096, cnn, or gru)"
            ))),
        }
    }
}

const DROPOUT_STAGGER: [f64; 3] = [0.25, 0.5, 0.75];

fn dense_stack(layers: &mut Vec<LayerSpec>, mut in_dim: usize, hidden: &[usize; 3], l2: &[f64; 3]) {
    for ((&out_dim, &l2_weight), &dropout_rate) in
        hidden.iter().zip(l2.iter()).zip(DROPOUT_STAGGER.iter())
    {
        layers.push(LayerSpec::Dense {
            in_dim,
            out_dim,
            activation: Activation::ReLU,
            l2_weight,
            dropout_rate,
        });
        in_dim = out_dim;
    }
    layers.push(output_layer(in_dim));
}

/// Builds a preset for a given input width. `hidden` overrides the dense
/// stack widths (exactly three values).
pub fn build_model(
    preset: Preset,
    input_dim: usize,
    hidden: Option<&[usize]>,
    seed: u64,
) -> Result<ModelConfig, CliError> {
    let hidden: [usize; 3] = match hidden {
        None => preset.default_hidden(),
        Some(&[a, b, c]) => [a, b, c],
        Some(other) => {
            return Err(CliError::Config(format!(
                "--hidden takes exactly three widths, got {}",
                other.len()
            )))
        }
    };
    let l2 = preset.dense_l2();
    let mut layers = Vec::new();
    let flat_dim = match preset {
        Preset::Nn1024 | Preset::Nn4096 => input_dim,
        Preset::Cnn => {
            let mut in_channels = 1;
            for ((filters, kernel_size), pool_size) in
                [(5usize, 10usize), (80, 5), (30, 3)].into_iter().zip([2usize, 3, 2])
            {
                layers.push(LayerSpec::Conv1D {
                    in_channels,
                    filters,
                    kernel_size,
                });
                layers.push(LayerSpec::MaxPool1D { pool_size });
                in_channels = filters;
            }
            layers.push(LayerSpec::Flatten);
            (input_dim / 2 / 3 / 2) * 30
        }
        Preset::Gru => {
            layers.push(LayerSpec::Gru {
                units: 150,
                dropout_rate: 0.2,
            });
            150
        }
    };
    dense_stack(&mut layers, flat_dim, &hidden, &l2);
    ModelConfig::new(input_dim, layers, seed).map_err(|e: NnError| {
        CliError::Config(format!("preset {preset} invalid for input width {input_dim}: {e}"))
    })
}

/// Small synthetic instantiation of each layer family used by `gradcheck`;
/// returns the model together with its input width and batch size.
pub fn tiny_model(preset: Preset, seed: u64) -> (ModelConfig, usize, usize) {
    let (model, input_dim, batch) = match preset {
        Preset::Nn1024 | Preset::Nn4096 => {
            let mut layers = Vec::new();
            dense_stack(&mut layers, 10, &[8, 12, 8], &preset.dense_l2());
            (ModelConfig::new(10, layers, seed), 10, 4)
        }
        Preset::Cnn => {
            let mut layers = vec![
                LayerSpec::Conv1D { in_channels: 1, filters: 2, kernel_size: 10 },
                LayerSpec::MaxPool1D { pool_size: 2 },
                LayerSpec::Conv1D { in_channels: 2, filters: 3, kernel_size: 5 },
                LayerSpec::MaxPool1D { pool_size: 3 },
                LayerSpec::Conv1D { in_channels: 3, filters: 2, kernel_size: 3 },
                LayerSpec::MaxPool1D { pool_size: 2 },
                LayerSpec::Flatten,
            ];
            // 24 -> 12 -> 4 -> 2; flatten 2 * 2 = 4.
            dense_stack(&mut layers, 4, &[6, 8, 6], &preset.dense_l2());
            (ModelConfig::new(24, layers, seed), 24, 3)
        }
        Preset::Gru => {
            let mut layers = vec![LayerSpec::Gru { units: 5, dropout_rate: 0.2 }];
            dense_stack(&mut layers, 5, &[6, 8, 6], &preset.dense_l2());
            (ModelConfig::new(12, layers, seed), 12, 3)
        }
    };
    (model.expect("tiny presets are valid"), input_dim, batch)
}
