//! Confusion-matrix metrics, ROC curves, and AUC.
//!
//! The positive class is malware. Classification uses the rule
//! `score >= threshold => malware`; the tie therefore goes to the
//! positive side. Metrics with a zero denominator are reported as 0 with
//! an explicit `defined: false` flag instead of NaN so CSV/JSON output
//! stays clean.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::nn::{forward, ForwardMode, ModelConfig, NnError, Parameters, TensorBuffer};
use crate::scalar::Scalar;
use crate::train::TrainHistory;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A ratio metric plus whether its denominator was nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub defined: bool,
}

impl Metric {
    fn ratio(numerator: f64, denominator: f64) -> Metric {
        if denominator > 0.0 {
            Metric {
                value: numerator / denominator,
                defined: true,
            }
        } else {
            Metric {
                value: 0.0,
                defined: false,
            }
        }
    }
}

/// Harmonic mean of precision and recall.
pub fn f1_from(recall: f64, precision: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Test-set metrics at a fixed threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    #[serde(rename = "tp")]
    pub true_positives: u64,
    #[serde(rename = "fp")]
    pub false_positives: u64,
    #[serde(rename = "tn")]
    pub true_negatives: u64,
    #[serde(rename = "fn")]
    pub false_negatives: u64,
    pub accuracy: f64,
    pub recall: Metric,
    pub precision: Metric,
    pub f1: Metric,
}

impl EvalReport {
    /// Builds a report from confusion counts; the metric identities hold
    /// by construction.
    pub fn from_counts(threshold: f64, tp: u64, fp: u64, tn: u64, fn_: u64) -> EvalReport {
        let total = (tp + fp + tn + fn_) as f64;
        let recall = Metric::ratio(tp as f64, (tp + fn_) as f64);
        let precision = Metric::ratio(tp as f64, (tp + fp) as f64);
        let f1 = if recall.defined && precision.defined && (recall.value + precision.value) > 0.0 {
            Metric {
                value: f1_from(recall.value, precision.value),
                defined: true,
            }
        } else {
            Metric {
                value: 0.0,
                defined: false,
            }
        };
        EvalReport {
            threshold,
            true_positives: tp,
            false_positives: fp,
            true_negatives: tn,
            false_negatives: fn_,
            accuracy: if total > 0.0 {
                (tp + tn) as f64 / total
            } else {
                0.0
            },
            recall,
            precision,
            f1,
        }
    }

    /// Builds a report from raw scores and bit labels.
    pub fn from_scores(threshold: f64, scores: &[f64], labels: &[u8]) -> EvalReport {
        debug_assert_eq!(scores.len(), labels.len());
        let (mut tp, mut fp, mut tn, mut fn_) = (0u64, 0u64, 0u64, 0u64);
        for (&score, &label) in scores.iter().zip(labels.iter()) {
            let predicted_malware = score >= threshold;
            match (predicted_malware, label == 1) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        EvalReport::from_counts(threshold, tp, fp, tn, fn_)
    }

    pub fn total(&self) -> u64 {
        self.true_positives + self.false_positives + self.true_negatives + self.false_negatives
    }
}

/// Infer-mode scores for every dataset row, in row order.
pub fn model_scores<S: Scalar>(
    model: &ModelConfig,
    params: &Parameters<S>,
    dataset: &Dataset,
) -> Result<Vec<f64>, NnError> {
    let p = dataset.feature_dim();
    let mut scores = Vec::with_capacity(dataset.len());
    for chunk in dataset.rows.chunks(256) {
        let mut values = Vec::with_capacity(chunk.len() * p);
        for row in chunk {
            values.extend(row.features.iter().map(|&b| {
                if b == 1 {
                    S::one()
                } else {
                    S::zero()
                }
            }));
        }
        let batch = TensorBuffer::from_vec(&[chunk.len(), p], values);
        let out = forward(model, params, &batch, ForwardMode::Infer, 0)?;
        scores.extend(out.values.iter().map(|v| v.as_f64()));
    }
    Ok(scores)
}

/// Evaluates a model on a dataset at the given threshold.
pub fn evaluate<S: Scalar>(
    params: &Parameters<S>,
    model: &ModelConfig,
    dataset: &Dataset,
    threshold: f64,
) -> Result<EvalReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let scores = model_scores(model, params, dataset)?;
    let labels: Vec<u8> = dataset.rows.iter().map(|r| r.label).collect();
    Ok(EvalReport::from_scores(threshold, &scores, &labels))
}

/// One ROC operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Threshold-swept ROC curve. `auc` is `None` when only one class is
/// present (the sweep still produces a curve, but the area is undefined).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: Option<f64>,
}

/// Sweeps every distinct score as a threshold (descending), prepending a
/// sentinel above the maximum, and integrates the area by trapezoids.
///
/// The integration accumulates the exact integer quantity
/// `sum(delta_fp * (tp_prev + tp_cur))` and divides once by `2*P*N`, which
/// makes the result identical to the pairwise concordance statistic
/// (ties counted 1/2).
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> RocCurve {
    assert_eq!(scores.len(), labels.len(), "scores/labels length mismatch");
    assert!(!scores.is_empty(), "roc_curve needs at least one sample");

    let positives = labels.iter().filter(|&&l| l == 1).count() as u64;
    let negatives = labels.len() as u64 - positives;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));

    let max_score = scores[order[0]];
    let rate = |num: u64, den: u64| if den > 0 { num as f64 / den as f64 } else { 0.0 };

    let mut points = vec![RocPoint {
        threshold: max_score + 1.0,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut area_twice = 0u64; // sum of delta_fp * (tp_prev + tp_cur)
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let (tp_prev, fp_prev) = (tp, fp);
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area_twice += (fp - fp_prev) * (tp_prev + tp);
        points.push(RocPoint {
            threshold,
            fpr: rate(fp, negatives),
            tpr: rate(tp, positives),
        });
    }

    let auc = if positives > 0 && negatives > 0 {
        Some(area_twice as f64 / (2.0 * positives as f64 * negatives as f64))
    } else {
        None
    };
    RocCurve { points, auc }
}

/// 17-significant-digit float formatting used by the CSV outputs; parses
/// back to the identical bit pattern.
pub fn fmt_float17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn history_csv(history: &TrainHistory) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,val_acc,epoch_seconds\n");
    for (i, epoch) in history.epochs.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{}",
            i + 1,
            fmt_float17(epoch.train_loss),
            fmt_float17(epoch.train_accuracy),
            fmt_float17(epoch.validation_accuracy),
            fmt_float17(epoch.epoch_wall_seconds),
        )
        .unwrap();
    }
    out
}

pub fn roc_csv(roc: &RocCurve) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for point in &roc.points {
        writeln!(
            out,
            "{},{},{}",
            fmt_float17(point.threshold),
            fmt_float17(point.fpr),
            fmt_float17(point.tpr),
        )
        .unwrap();
    }
    match roc.auc {
        Some(auc) => writeln!(out, "# auc={}", fmt_float17(auc)).unwrap(),
        None => out.push_str("# auc=undefined\n"),
    }
    out
}

/// Writes `<prefix>_history.csv` and `<prefix>_roc.csv`.
pub fn export_curves(
    history: &TrainHistory,
    roc: &RocCurve,
    path_prefix: &str,
) -> Result<(PathBuf, PathBuf), EvalError> {
    let history_path = PathBuf::from(format!("{path_prefix}_history.csv"));
    let roc_path = PathBuf::from(format!("{path_prefix}_roc.csv"));
    write_text(&history_path, &history_csv(history))?;
    write_text(&roc_path, &roc_csv(roc))?;
    Ok((history_path, roc_path))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), EvalError> {
    fs::write(path, text).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}
