//! Whole-model forward, loss, and reverse-mode differentiation.

use crate::nn::ops::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, gru_backward, gru_forward,
    maxpool1d_backward, maxpool1d_forward, ConvCache, DenseCache, GruCache, PoolCache,
};
use crate::nn::params::{GradientBundle, LayerParams, Parameters};
use crate::nn::tensor::TensorBuffer;
use crate::nn::{LayerSpec, ModelConfig, NnError};
use crate::rng;
use crate::scalar::Scalar;

/// Train mode applies dropout; infer mode is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Train,
    Infer,
}

/// Scores are clamped into `[SCORE_EPSILON, 1 - SCORE_EPSILON]`: IEEE
/// doubles round the sigmoid to exactly 1.0 for inputs beyond ~36.7, and
/// the loss clamps at the same epsilon anyway.
pub const SCORE_EPSILON: f64 = 1e-12;

const STREAM_DROPOUT: u64 = 0xD409;

enum LayerCache<S: Scalar> {
    Dense(DenseCache<S>),
    Conv(ConvCache<S>),
    Pool(PoolCache),
    Gru(GruCache<S>),
    Flatten { in_shape: Vec<usize> },
}

fn check_finite<S: Scalar>(x: &TensorBuffer<S>, layer: usize) -> Result<(), NnError> {
    match x.first_non_finite() {
        Some(index) => Err(NnError::NonFiniteActivation { layer, index }),
        None => Ok(()),
    }
}

fn prepared_input<S: Scalar>(
    model: &ModelConfig,
    batch: &TensorBuffer<S>,
) -> Result<TensorBuffer<S>, NnError> {
    if batch.shape().len() != 2 || batch.cols() != model.input_dim {
        return Err(NnError::ShapeMismatch(format!(
            "batch shape {:?} does not match input_dim {}",
            batch.shape(),
            model.input_dim
        )));
    }
    let rows = batch.rows();
    let x = batch.clone();
    Ok(if model.sequence_input() {
        // Flat vector becomes a length-P sequence of 1-feature steps.
        x.reshaped(&[rows, model.input_dim, 1])
    } else {
        x
    })
}

fn run_forward<S: Scalar>(
    model: &ModelConfig,
    params: &Parameters<S>,
    batch: &TensorBuffer<S>,
    mode: ForwardMode,
    dropout_seed: u64,
) -> Result<(TensorBuffer<S>, Vec<LayerCache<S>>), NnError> {
    if params.layers.len() != model.layers.len() {
        return Err(NnError::ShapeMismatch(format!(
            "parameters cover {} layers, model has {}",
            params.layers.len(),
            model.layers.len()
        )));
    }
    let train = mode == ForwardMode::Train;
    let mut x = prepared_input(model, batch)?;
    let mut caches = Vec::with_capacity(model.layers.len());
    for (i, (layer, layer_params)) in model.layers.iter().zip(params.layers.iter()).enumerate() {
        let layer_seed = rng::derive_seed(dropout_seed, STREAM_DROPOUT ^ (i as u64));
        x = match (layer, layer_params) {
            (
                LayerSpec::Dense {
                    activation,
                    dropout_rate,
                    ..
                },
                LayerParams::Dense { weight, bias },
            ) => {
                let (y, cache) = dense_forward(
                    &x,
                    weight,
                    bias,
                    *activation,
                    *dropout_rate,
                    train,
                    layer_seed,
                );
                caches.push(LayerCache::Dense(cache));
                y
            }
            (LayerSpec::Conv1D { .. }, LayerParams::Conv1D { kernel, bias }) => {
                let (y, cache) = conv1d_forward(&x, kernel, bias);
                caches.push(LayerCache::Conv(cache));
                y
            }
            (LayerSpec::MaxPool1D { pool_size }, LayerParams::None) => {
                let (y, cache) = maxpool1d_forward(&x, *pool_size);
                caches.push(LayerCache::Pool(cache));
                y
            }
            (
                LayerSpec::Gru { dropout_rate, .. },
                LayerParams::Gru {
                    kernel,
                    recurrent,
                    bias,
                },
            ) => {
                let (y, cache) = gru_forward(
                    &x,
                    kernel,
                    recurrent,
                    bias,
                    *dropout_rate,
                    train,
                    layer_seed,
                );
                caches.push(LayerCache::Gru(cache));
                y
            }
            (LayerSpec::Flatten, LayerParams::None) => {
                let in_shape = x.shape().to_vec();
                let rows = in_shape[0];
                let flat: usize = in_shape[1..].iter().product();
                caches.push(LayerCache::Flatten { in_shape });
                x.reshaped(&[rows, flat])
            }
            (spec, params) => {
                return Err(NnError::ShapeMismatch(format!(
                    "layer {i}: spec {} paired with parameters {:?}",
                    spec.kind_name(),
                    std::mem::discriminant(params)
                )))
            }
        };
        check_finite(&x, i)?;
    }
    // Output clamp keeps scores strictly inside (0, 1).
    let lo = S::from_real(SCORE_EPSILON);
    let hi = S::from_real(1.0 - SCORE_EPSILON);
    for v in &mut x.values {
        if *v < lo {
            *v = lo;
        } else if *v > hi {
            *v = hi;
        }
    }
    Ok((x, caches))
}

/// Runs the model on a `[batch, input_dim]` tensor and returns scores in
/// `(0, 1)`, shape `[batch, 1]`. `dropout_seed` is ignored in infer mode.
pub fn forward<S: Scalar>(
    model: &ModelConfig,
    params: &Parameters<S>,
    batch: &TensorBuffer<S>,
    mode: ForwardMode,
    dropout_seed: u64,
) -> Result<TensorBuffer<S>, NnError> {
    run_forward(model, params, batch, mode, dropout_seed).map(|(scores, _)| scores)
}

/// Train-mode forward returning scores only; the paired [`backward`] call
/// with the same seed reuses identical dropout masks.
pub fn forward_train<S: Scalar>(
    model: &ModelConfig,
    params: &Parameters<S>,
    batch: &TensorBuffer<S>,
    dropout_seed: u64,
) -> Result<TensorBuffer<S>, NnError> {
    forward(model, params, batch, ForwardMode::Train, dropout_seed)
}

/// Binary cross-entropy, mean over the batch, plus each layer's
/// `l2_weight * sum(w^2)` penalty (biases exempt). Returns the loss and
/// the gradient of the data term with respect to the scores.
pub fn bce_loss<S: Scalar>(
    scores: &TensorBuffer<S>,
    labels: &[S],
    params: &Parameters<S>,
    model: &ModelConfig,
) -> Result<(S, TensorBuffer<S>), NnError> {
    if scores.len() != labels.len() {
        return Err(NnError::ShapeMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(NnError::ShapeMismatch("empty batch".into()));
    }
    let n = S::from_real(scores.len() as f64);
    let lo = S::from_real(SCORE_EPSILON);
    let hi = S::from_real(1.0 - SCORE_EPSILON);
    let mut data = S::zero();
    let mut d_scores = scores.zeros_like();
    for (i, (&raw_p, &y)) in scores.values.iter().zip(labels.iter()).enumerate() {
        let p = raw_p.max(lo).min(hi);
        data += -(y * p.ln() + (S::one() - y) * (S::one() - p).ln());
        // d/dp of the mean data term.
        d_scores.values[i] = ((S::one() - y) / (S::one() - p) - y / p) / n;
    }
    let mut loss = data / n;
    for (spec, layer_params) in model.layers.iter().zip(params.layers.iter()) {
        let lambda = spec.l2_weight();
        if lambda == 0.0 {
            continue;
        }
        let lambda = S::from_real(lambda);
        for tensor in layer_params.penalized_tensors() {
            let sq: S = tensor.values.iter().map(|&w| w * w).sum();
            loss += lambda * sq;
        }
    }
    Ok((loss, d_scores))
}

/// Loss, train-mode scores, and parameter gradients for one batch.
pub struct BackwardResult<S: Scalar> {
    pub loss: S,
    pub scores: TensorBuffer<S>,
    pub grads: GradientBundle<S>,
}

/// Full reverse-mode pass: gradients of [`bce_loss`] (data term plus L2)
/// with respect to every parameter tensor, using the same dropout masks
/// as the train-mode forward pass seeded with `dropout_seed`.
pub fn backward<S: Scalar>(
    model: &ModelConfig,
    params: &Parameters<S>,
    batch: &TensorBuffer<S>,
    labels: &[S],
    dropout_seed: u64,
) -> Result<BackwardResult<S>, NnError> {
    let (scores, caches) = run_forward(model, params, batch, ForwardMode::Train, dropout_seed)?;
    let (loss, d_scores) = bce_loss(&scores, labels, params, model)?;

    let mut grads = params.zeros_like();
    let mut d_x = d_scores;
    for (i, ((layer, layer_params), cache)) in model
        .layers
        .iter()
        .zip(params.layers.iter())
        .zip(caches.iter())
        .enumerate()
        .rev()
    {
        d_x = match (layer, layer_params, cache, &mut grads.layers[i]) {
            (
                LayerSpec::Dense { activation, .. },
                LayerParams::Dense { weight, .. },
                LayerCache::Dense(cache),
                LayerParams::Dense {
                    weight: g_weight,
                    bias: g_bias,
                },
            ) => {
                let out = dense_backward(&d_x, cache, weight, *activation);
                *g_weight = out.d_weight;
                *g_bias = out.d_bias;
                out.d_input
            }
            (
                LayerSpec::Conv1D { .. },
                LayerParams::Conv1D { kernel, .. },
                LayerCache::Conv(cache),
                LayerParams::Conv1D {
                    kernel: g_kernel,
                    bias: g_bias,
                },
            ) => {
                let out = conv1d_backward(&d_x, cache, kernel);
                *g_kernel = out.d_kernel;
                *g_bias = out.d_bias;
                out.d_input
            }
            (
                LayerSpec::MaxPool1D { .. },
                LayerParams::None,
                LayerCache::Pool(cache),
                LayerParams::None,
            ) => maxpool1d_backward(&d_x, cache),
            (
                LayerSpec::Gru { .. },
                LayerParams::Gru {
                    kernel, recurrent, ..
                },
                LayerCache::Gru(cache),
                LayerParams::Gru {
                    kernel: g_kernel,
                    recurrent: g_recurrent,
                    bias: g_bias,
                },
            ) => {
                let out = gru_backward(&d_x, cache, kernel, recurrent);
                *g_kernel = out.d_kernel;
                *g_recurrent = out.d_recurrent;
                *g_bias = out.d_bias;
                out.d_input
            }
            (
                LayerSpec::Flatten,
                LayerParams::None,
                LayerCache::Flatten { in_shape },
                LayerParams::None,
            ) => d_x.reshaped(in_shape),
            _ => {
                return Err(NnError::ShapeMismatch(format!(
                    "layer {i}: inconsistent spec/parameter/cache kinds"
                )))
            }
        };
    }

    // L2 gradient: d/dw of lambda * w^2 = 2 lambda w, once per layer.
    for ((spec, layer_params), g) in model
        .layers
        .iter()
        .zip(params.layers.iter())
        .zip(grads.layers.iter_mut())
    {
        let lambda = spec.l2_weight();
        if lambda == 0.0 {
            continue;
        }
        let two_lambda = S::from_real(2.0 * lambda);
        match (layer_params, g) {
            (LayerParams::Dense { weight, .. }, LayerParams::Dense { weight: gw, .. }) => {
                for (g, &w) in gw.values.iter_mut().zip(weight.values.iter()) {
                    *g += two_lambda * w;
                }
            }
            (LayerParams::Conv1D { kernel, .. }, LayerParams::Conv1D { kernel: gk, .. }) => {
                for (g, &w) in gk.values.iter_mut().zip(kernel.values.iter()) {
                    *g += two_lambda * w;
                }
            }
            (
                LayerParams::Gru {
                    kernel, recurrent, ..
                },
                LayerParams::Gru {
                    kernel: gk,
                    recurrent: gr,
                    ..
                },
            ) => {
                for (g, &w) in gk.values.iter_mut().zip(kernel.values.iter()) {
                    *g += two_lambda * w;
                }
                for (g, &w) in gr.values.iter_mut().zip(recurrent.values.iter()) {
                    *g += two_lambda * w;
                }
            }
            _ => {}
        }
    }

    Ok(BackwardResult {
        loss,
        scores,
        grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::init_parameters;
    use crate::nn::{output_layer, Activation};

    fn dense_model(input: usize, hidden: usize) -> ModelConfig {
        ModelConfig::new(
            input,
            vec![
                LayerSpec::Dense {
                    in_dim: input,
                    out_dim: hidden,
                    activation: Activation::ReLU,
                    l2_weight: 0.0,
                    dropout_rate: 0.0,
                },
                output_layer(hidden),
            ],
            3,
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_score_half() {
        let model = dense_model(4, 3);
        let params = init_parameters::<f64>(&model).unwrap().zeros_like();
        let batch = TensorBuffer::from_vec(&[2, 4], vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        let scores = forward(&model, &params, &batch, ForwardMode::Infer, 0).unwrap();
        assert_eq!(scores.shape(), &[2, 1]);
        assert!(scores.values.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn infer_is_deterministic_and_permutation_equivariant() {
        let model = dense_model(5, 4);
        let params = init_parameters::<f64>(&model).unwrap();
        let batch = TensorBuffer::from_vec(
            &[3, 5],
            vec![
                1.0, 0.0, 1.0, 0.0, 1.0, //
                0.0, 1.0, 1.0, 1.0, 0.0, //
                1.0, 1.0, 0.0, 0.0, 0.0,
            ],
        );
        let a = forward(&model, &params, &batch, ForwardMode::Infer, 1).unwrap();
        let b = forward(&model, &params, &batch, ForwardMode::Infer, 2).unwrap();
        assert_eq!(a.values, b.values);

        // Rows permuted -> scores permute identically.
        let permuted = TensorBuffer::from_vec(
            &[3, 5],
            vec![
                1.0, 1.0, 0.0, 0.0, 0.0, //
                1.0, 0.0, 1.0, 0.0, 1.0, //
                0.0, 1.0, 1.0, 1.0, 0.0,
            ],
        );
        let c = forward(&model, &params, &permuted, ForwardMode::Infer, 1).unwrap();
        assert_eq!(c.values, vec![a.values[2], a.values[0], a.values[1]]);
    }

    #[test]
    fn scores_stay_inside_unit_interval() {
        let model = dense_model(2, 2);
        let mut params = init_parameters::<f64>(&model).unwrap();
        // Blow up the output weights to saturate the sigmoid.
        for tensor in params.iter_tensors_mut() {
            for v in &mut tensor.values {
                *v = 1e4;
            }
        }
        let batch = TensorBuffer::from_vec(&[1, 2], vec![1.0, 1.0]);
        let scores = forward(&model, &params, &batch, ForwardMode::Infer, 0).unwrap();
        assert!(scores.values[0] > 0.0 && scores.values[0] < 1.0);
    }

    #[test]
    fn bce_closed_forms() {
        let model = dense_model(2, 2);
        let params = init_parameters::<f64>(&model).unwrap().zeros_like();
        let scores = TensorBuffer::from_vec(&[4, 1], vec![0.5; 4]);
        let labels = [1.0, 0.0, 1.0, 0.0];
        let (loss, _) = bce_loss(&scores, &labels, &params, &model).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);

        // Perfect predictions: loss within the clamp effect of zero.
        let scores = TensorBuffer::from_vec(&[2, 1], vec![1.0, 0.0]);
        let labels = [1.0, 0.0];
        let (loss, _) = bce_loss(&scores, &labels, &params, &model).unwrap();
        assert!(loss.abs() <= 1e-11);
    }

    #[test]
    fn bce_l2_term() {
        // Single 1x1 dense layer with w = 2 and lambda = 0.002 adds 0.008.
        let model = ModelConfig::new(
            1,
            vec![LayerSpec::Dense {
                in_dim: 1,
                out_dim: 1,
                activation: Activation::Sigmoid,
                l2_weight: 0.002,
                dropout_rate: 0.0,
            }],
            0,
        )
        .unwrap();
        let mut params = init_parameters::<f64>(&model).unwrap();
        params.layers[0] = LayerParams::Dense {
            weight: TensorBuffer::from_vec(&[1, 1], vec![2.0]),
            bias: TensorBuffer::from_vec(&[1], vec![0.0]),
        };
        let scores = TensorBuffer::from_vec(&[1, 1], vec![1.0]);
        let labels = [1.0];
        let (loss, _) = bce_loss(&scores, &labels, &params, &model).unwrap();
        assert!((loss - 0.008).abs() < 1e-10);

        // Doubling the weights quadruples the penalty.
        params.layers[0] = LayerParams::Dense {
            weight: TensorBuffer::from_vec(&[1, 1], vec![4.0]),
            bias: TensorBuffer::from_vec(&[1], vec![0.0]),
        };
        let (loss4, _) = bce_loss(&scores, &labels, &params, &model).unwrap();
        assert!((loss4 - 0.032).abs() < 1e-10);
    }

    #[test]
    fn stationary_labels_leave_only_l2_gradient() {
        let model = ModelConfig::new(
            2,
            vec![LayerSpec::Dense {
                in_dim: 2,
                out_dim: 1,
                activation: Activation::Sigmoid,
                l2_weight: 0.01,
                dropout_rate: 0.0,
            }],
            5,
        )
        .unwrap();
        let params = init_parameters::<f64>(&model).unwrap();
        let batch = TensorBuffer::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        // Labels equal to the model's own scores: the data term is
        // stationary and only the L2 gradient remains.
        let scores = forward(&model, &params, &batch, ForwardMode::Infer, 0).unwrap();
        let labels: Vec<f64> = scores.values.clone();
        let result = backward(&model, &params, &batch, &labels, 0).unwrap();
        match (&result.grads.layers[0], &params.layers[0]) {
            (LayerParams::Dense { weight: gw, bias: gb }, LayerParams::Dense { weight, .. }) => {
                for (g, &w) in gw.values.iter().zip(weight.values.iter()) {
                    assert!((g - 0.02 * w).abs() < 1e-12, "grad {g}, weight {w}");
                }
                for g in &gb.values {
                    assert!(g.abs() < 1e-12);
                }
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn shape_mismatch_reported() {
        let model = dense_model(4, 2);
        let params = init_parameters::<f64>(&model).unwrap();
        let batch = TensorBuffer::from_vec(&[1, 3], vec![1.0, 0.0, 1.0]);
        assert!(matches!(
            forward(&model, &params, &batch, ForwardMode::Infer, 0),
            Err(NnError::ShapeMismatch(_))
        ));
    }
}
