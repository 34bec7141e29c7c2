//! Finite-difference verification of the analytic gradients.

use rand::seq::index::sample;

use crate::nn::model::{backward, bce_loss, forward_train};
use crate::nn::params::Parameters;
use crate::nn::tensor::TensorBuffer;
use crate::nn::{ModelConfig, NnError};
use crate::rng;
use crate::scalar::Scalar;

const STREAM_COORDS: u64 = 0xFD05;

/// Worst observed coordinate of a gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// (layer index, tensor slot within the layer, flat coordinate).
    pub worst_coordinate: (usize, usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates_checked: usize,
}

/// Compares analytic gradients against central finite differences at
/// `±epsilon`, probing every coordinate of tensors up to
/// `max_coords_per_tensor` entries and a seeded sample of that many
/// coordinates for larger tensors. The relative error is
/// `|ga - gf| / max(1e-8, |ga| + |gf|)`.
///
/// Dropout masks depend only on the seed, so the probes and the analytic
/// pass see identical masks. Keep the batch small and the weights at
/// their seeded initialization: near ties in max-pool windows or ReLU
/// kinks the finite-difference quotient is one-sided and meaningless.
pub fn gradient_check<S: Scalar>(
    model: &ModelConfig,
    params: &Parameters<S>,
    batch: &TensorBuffer<S>,
    labels: &[S],
    epsilon: f64,
    seed: u64,
) -> Result<GradCheckReport, NnError> {
    let max_coords_per_tensor = 200;
    let analytic = backward(model, params, batch, labels, seed)?.grads;

    let mut probe = params.clone();
    let eps = S::from_real(epsilon);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_coordinate: (0, 0, 0),
        analytic: 0.0,
        numeric: 0.0,
        coordinates_checked: 0,
    };

    let layer_count = probe.layers.len();
    for layer_idx in 0..layer_count {
        let slot_count = probe.layers[layer_idx].tensors().len();
        for slot in 0..slot_count {
            let len = probe.layers[layer_idx].tensors()[slot].len();
            let coords: Vec<usize> = if len <= max_coords_per_tensor {
                (0..len).collect()
            } else {
                let mut rng = rng::seeded(rng::derive_seed(
                    seed,
                    STREAM_COORDS ^ ((layer_idx as u64) << 16) ^ (slot as u64),
                ));
                sample(&mut rng, len, max_coords_per_tensor).into_vec()
            };
            for coord in coords {
                let original = probe.layers[layer_idx].tensors()[slot].values[coord];

                probe.layers[layer_idx].tensors_mut()[slot].values[coord] = original + eps;
                let loss_plus = loss_at(model, &probe, batch, labels, seed)?;
                probe.layers[layer_idx].tensors_mut()[slot].values[coord] = original - eps;
                let loss_minus = loss_at(model, &probe, batch, labels, seed)?;
                probe.layers[layer_idx].tensors_mut()[slot].values[coord] = original;

                let numeric = (loss_plus - loss_minus).as_f64() / (2.0 * epsilon);
                let analytic_g = analytic.layers[layer_idx].tensors()[slot].values[coord].as_f64();
                let denom = (analytic_g.abs() + numeric.abs()).max(1e-8);
                let rel = (analytic_g - numeric).abs() / denom;
                report.coordinates_checked += 1;
                if rel > report.max_relative_error {
                    report.max_relative_error = rel;
                    report.worst_coordinate = (layer_idx, slot, coord);
                    report.analytic = analytic_g;
                    report.numeric = numeric;
                }
            }
        }
    }
    Ok(report)
}

fn loss_at<S: Scalar>(
    model: &ModelConfig,
    params: &Parameters<S>,
    batch: &TensorBuffer<S>,
    labels: &[S],
    seed: u64,
) -> Result<S, NnError> {
    let scores = forward_train(model, params, batch, seed)?;
    bce_loss(&scores, labels, params, model).map(|(loss, _)| loss)
}

/// Adds uniform noise to every rank-1 tensor (the biases, which start at
/// zero). Freshly initialized biases park pre-activations exactly on the
/// ReLU kink wherever an input window is all zeros, and central
/// differences are one-sided there; jittering moves the check off the
/// kink without touching the seeded weights.
pub fn jitter_biases<S: Scalar>(params: &mut Parameters<S>, amplitude: f64, seed: u64) {
    use rand::Rng;
    let mut rng = rng::seeded(rng::derive_seed(seed, 0xB145));
    for tensor in params.iter_tensors_mut() {
        if tensor.shape().len() == 1 {
            for v in &mut tensor.values {
                *v += S::from_real((2.0 * rng.random::<f64>() - 1.0) * amplitude);
            }
        }
    }
}
