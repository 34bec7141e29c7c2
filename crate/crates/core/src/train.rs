//! Minibatch training with per-epoch validation, patience-based stopping,
//! and best-checkpoint selection.

use std::time::Instant;

use thiserror::Error;

use crate::dataset::Dataset;
use crate::nn::{
    backward, optimizer_step, ModelConfig, NnError, OptimizerConfig, OptimizerState, Parameters,
    TensorBuffer,
};
use crate::rng;
use crate::scalar::Scalar;

const STREAM_SHUFFLE: u64 = 0x5F0E;
const STREAM_BATCH_DROPOUT: u64 = 0xD80B;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training data is empty")]
    EmptyTrainingSet,
    #[error("dataset width {dataset} does not match model input {model}")]
    InputDimMismatch { dataset: usize, model: usize },
    #[error("numeric failure at epoch {epoch}, batch {batch}: {source}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        #[source]
        source: NnError,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Epoch budget, stopping patience, and batch configuration.
///
/// Stopping is epoch-based: training halts once the best validation
/// accuracy has not improved by more than `min_delta` for
/// `patience_epochs` consecutive epochs. `max_wall_seconds` optionally
/// bounds total wall-clock time instead of relying on a fixed hardware
/// assumption.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainSchedule {
    pub max_epochs: usize,
    pub patience_epochs: usize,
    pub min_delta: f64,
    pub shuffle_seed: u64,
    pub batch_size: usize,
    pub max_wall_seconds: Option<f64>,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            max_epochs: 200,
            patience_epochs: 20,
            min_delta: 0.001,
            shuffle_seed: 0,
            batch_size: 128,
            max_wall_seconds: None,
        }
    }
}

/// One completed epoch. Train accuracy accumulates over the train-mode
/// minibatch predictions; validation accuracy is an infer-mode pass at
/// threshold 0.5 (NaN when the validation set is empty).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
    pub epoch_wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn best_validation_accuracy(&self) -> Option<f64> {
        self.epochs
            .iter()
            .map(|e| e.validation_accuracy)
            .filter(|v| !v.is_nan())
            .fold(None, |best, v| match best {
                Some(b) if b >= v => Some(b),
                _ => Some(v),
            })
    }
}

/// Patience rule: stop after `patience` consecutive epochs without an
/// improvement of more than `min_delta` over the best seen value.
#[derive(Debug, Clone)]
pub struct StoppingRule {
    min_delta: f64,
    patience: usize,
    best: Option<f64>,
    stale_epochs: usize,
}

impl StoppingRule {
    pub fn new(min_delta: f64, patience: usize) -> Self {
        StoppingRule {
            min_delta,
            patience,
            best: None,
            stale_epochs: 0,
        }
    }

    /// Records one epoch's metric; returns true when training should stop.
    pub fn observe(&mut self, value: f64) -> bool {
        match self.best {
            Some(best) if value <= best + self.min_delta => {
                self.stale_epochs += 1;
            }
            _ => {
                self.best = Some(value);
                self.stale_epochs = 0;
            }
        }
        self.stale_epochs >= self.patience
    }
}

pub struct TrainOutcome<S: Scalar> {
    /// Parameters with the best validation accuracy seen (the final
    /// parameters when no validation data was given).
    pub params: Parameters<S>,
    pub history: TrainHistory,
    /// True when the patience rule ended training before `max_epochs`.
    pub stopped_early: bool,
}

pub(crate) fn batch_tensor<S: Scalar>(
    dataset: &Dataset,
    indices: &[usize],
) -> (TensorBuffer<S>, Vec<S>) {
    let p = dataset.feature_dim();
    let mut values = Vec::with_capacity(indices.len() * p);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        let row = &dataset.rows[i];
        values.extend(row.features.iter().map(|&b| {
            if b == 1 {
                S::one()
            } else {
                S::zero()
            }
        }));
        labels.push(if row.label == 1 { S::one() } else { S::zero() });
    }
    (TensorBuffer::from_vec(&[indices.len(), p], values), labels)
}

fn validation_accuracy<S: Scalar>(
    model: &ModelConfig,
    params: &Parameters<S>,
    validation: &Dataset,
) -> Result<f64, NnError> {
    if validation.is_empty() {
        return Ok(f64::NAN);
    }
    let scores = crate::eval::model_scores(model, params, validation)?;
    let correct = scores
        .iter()
        .zip(validation.rows.iter())
        .filter(|(&score, row)| (score >= 0.5) == (row.label == 1))
        .count();
    Ok(correct as f64 / validation.len() as f64)
}

/// Trains from seeded initialization. Epochs iterate seeded-shuffled
/// minibatches; after each epoch the infer-mode validation accuracy at
/// threshold 0.5 is recorded together with the epoch's wall-clock time.
/// Returns the parameters that achieved the best validation accuracy,
/// not the last ones.
pub fn train<S: Scalar>(
    model: &ModelConfig,
    train_data: &Dataset,
    validation: &Dataset,
    schedule: &TrainSchedule,
    optimizer: OptimizerConfig,
) -> Result<TrainOutcome<S>, TrainError> {
    if train_data.feature_dim() != model.input_dim {
        return Err(TrainError::InputDimMismatch {
            dataset: train_data.feature_dim(),
            model: model.input_dim,
        });
    }
    if train_data.is_empty() && schedule.max_epochs > 0 {
        return Err(TrainError::EmptyTrainingSet);
    }
    let batch_size = schedule.batch_size.max(1);

    let mut params = crate::nn::init_parameters::<S>(model)?;
    let mut opt_state = OptimizerState::new(optimizer, &params);
    let mut history = TrainHistory::default();
    let mut stopping = StoppingRule::new(schedule.min_delta, schedule.patience_epochs);
    let mut best: Option<(f64, Parameters<S>)> = None;
    let mut stopped_early = false;

    let started = Instant::now();
    let mut indices: Vec<usize> = (0..train_data.len()).collect();
    let half = S::from_real(0.5);

    for epoch in 0..schedule.max_epochs {
        let epoch_started = Instant::now();
        {
            use rand::seq::SliceRandom;
            let mut rng = rng::seeded(rng::derive_seed(
                schedule.shuffle_seed,
                STREAM_SHUFFLE ^ (epoch as u64),
            ));
            indices.shuffle(&mut rng);
        }

        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (batch_idx, chunk) in indices.chunks(batch_size).enumerate() {
            let (batch, labels) = batch_tensor::<S>(train_data, chunk);
            let dropout_seed = rng::derive_seed(
                schedule.shuffle_seed,
                STREAM_BATCH_DROPOUT ^ ((epoch as u64) << 24) ^ (batch_idx as u64),
            );
            let result = backward(model, &params, &batch, &labels, dropout_seed).map_err(
                |source| match source {
                    NnError::NonFiniteActivation { .. } => TrainError::NonFinite {
                        epoch: epoch + 1,
                        batch: batch_idx + 1,
                        source,
                    },
                    other => TrainError::Nn(other),
                },
            )?;
            if !result.loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch: epoch + 1,
                    batch: batch_idx + 1,
                    source: NnError::NonFiniteActivation { layer: usize::MAX, index: 0 },
                });
            }
            loss_sum += result.loss.as_f64() * chunk.len() as f64;
            correct += result
                .scores
                .values
                .iter()
                .zip(labels.iter())
                .filter(|(&score, &label)| (score >= half) == (label == S::one()))
                .count();
            optimizer_step(&mut params, &result.grads, &mut opt_state)?;
        }

        let val_acc = validation_accuracy(model, &params, validation)?;
        history.epochs.push(EpochRecord {
            train_loss: loss_sum / train_data.len() as f64,
            train_accuracy: correct as f64 / train_data.len() as f64,
            validation_accuracy: val_acc,
            epoch_wall_seconds: epoch_started.elapsed().as_secs_f64().max(1e-9),
        });

        if !val_acc.is_nan() {
            if best.as_ref().is_none_or(|(acc, _)| val_acc > *acc) {
                best = Some((val_acc, params.clone()));
            }
            if stopping.observe(val_acc) {
                stopped_early = true;
                break;
            }
        }
        if let Some(budget) = schedule.max_wall_seconds {
            if started.elapsed().as_secs_f64() >= budget {
                stopped_early = true;
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best.map(|(_, p)| p).unwrap_or(params),
        history,
        stopped_early,
    })
}
