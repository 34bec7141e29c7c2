//! Parameter update rules: Adam (default) and plain SGD.

use serde::{Deserialize, Serialize};

use crate::nn::params::{GradientBundle, Parameters};
use crate::nn::NnError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Adam,
    Sgd,
}

/// Optimizer hyperparameters. Adam defaults: lr 1e-3, beta1 0.9,
/// beta2 0.999, epsilon 1e-8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Adam,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Sgd,
            learning_rate,
            ..Default::default()
        }
    }
}

/// Mutable optimizer state; moment buffers mirror the parameter layout
/// and start at zero.
#[derive(Debug, Clone)]
pub struct OptimizerState<S: Scalar> {
    pub config: OptimizerConfig,
    pub step_count: u64,
    first_moment: Parameters<S>,
    second_moment: Parameters<S>,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(config: OptimizerConfig, params: &Parameters<S>) -> Self {
        OptimizerState {
            config,
            step_count: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
        }
    }
}

/// One update: Adam with bias correction, or `w -= lr * g` for SGD.
pub fn optimizer_step<S: Scalar>(
    params: &mut Parameters<S>,
    grads: &GradientBundle<S>,
    state: &mut OptimizerState<S>,
) -> Result<(), NnError> {
    if params.total_len() != grads.total_len() {
        return Err(NnError::ShapeMismatch(format!(
            "{} parameters vs {} gradients",
            params.total_len(),
            grads.total_len()
        )));
    }
    state.step_count += 1;
    let lr = S::from_real(state.config.learning_rate);
    match state.config.algorithm {
        Algorithm::Sgd => {
            for (w, g) in params.iter_tensors_mut().zip(grads.iter_tensors()) {
                for (w, &g) in w.values.iter_mut().zip(g.values.iter()) {
                    *w -= lr * g;
                }
            }
        }
        Algorithm::Adam => {
            let beta1 = S::from_real(state.config.adam_beta1);
            let beta2 = S::from_real(state.config.adam_beta2);
            let eps = S::from_real(state.config.adam_epsilon);
            let t = state.step_count as i32;
            let correction1 = S::one() - beta1.powi(t);
            let correction2 = S::one() - beta2.powi(t);
            for ((w, g), (m, v)) in params
                .iter_tensors_mut()
                .zip(grads.iter_tensors())
                .zip(
                    state
                        .first_moment
                        .iter_tensors_mut()
                        .zip(state.second_moment.iter_tensors_mut()),
                )
            {
                for i in 0..w.values.len() {
                    let gi = g.values[i];
                    m.values[i] = beta1 * m.values[i] + (S::one() - beta1) * gi;
                    v.values[i] = beta2 * v.values[i] + (S::one() - beta2) * gi * gi;
                    let m_hat = m.values[i] / correction1;
                    let v_hat = v.values[i] / correction2;
                    w.values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::LayerParams;
    use crate::nn::tensor::TensorBuffer;

    fn single_weight(w: f64) -> Parameters<f64> {
        Parameters {
            layers: vec![LayerParams::Dense {
                weight: TensorBuffer::from_vec(&[1, 1], vec![w]),
                bias: TensorBuffer::from_vec(&[1], vec![0.0]),
            }],
        }
    }

    fn weight_of(params: &Parameters<f64>) -> f64 {
        match &params.layers[0] {
            LayerParams::Dense { weight, .. } => weight.values[0],
            _ => unreachable!(),
        }
    }

    #[test]
    fn sgd_step() {
        let mut params = single_weight(1.0);
        let grads = single_weight(2.0);
        let mut state = OptimizerState::new(OptimizerConfig::sgd(0.1), &params);
        optimizer_step(&mut params, &grads, &mut state).unwrap();
        assert!((weight_of(&params) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        // With constant gradient, the bias-corrected first step is ~lr
        // regardless of the gradient's scale.
        for g in [1e-3, 1.0, 1e3] {
            let mut params = single_weight(0.0);
            let grads = single_weight(g);
            let mut state = OptimizerState::new(OptimizerConfig::default(), &params);
            optimizer_step(&mut params, &grads, &mut state).unwrap();
            let step = -weight_of(&params);
            assert!(
                (step - 1e-3).abs() < 1e-6,
                "gradient {g} gave step {step}"
            );
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        for config in [OptimizerConfig::default(), OptimizerConfig::sgd(0.5)] {
            let mut params = single_weight(0.7);
            let grads = single_weight(0.0);
            let mut state = OptimizerState::new(config, &params);
            optimizer_step(&mut params, &grads, &mut state).unwrap();
            assert_eq!(weight_of(&params), 0.7);
        }
    }
}
