//! Metrics and split evaluation.
//!
//! Everything funnels through [`EventPrediction`], a plain record of what
//! the model said about one event. `summarize` is a pure function of those
//! records, so metric arithmetic can be tested against hand-built
//! predictions without touching a model.

use crate::data::{Label, LabelSet, PropagationEvent};
use crate::encoder::DirectionMode;
use crate::model::{forward, prepare_event, ModelConfig, ModelParams, PreparedEvent};
use crate::par::ordered_map;
use crate::pretrain::UserEmbeddingTable;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Observation fractions exercised by the default sweep.
pub const DEFAULT_SWEEP: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("metric input is empty")]
    EmptyInput,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub msle: f64,
}

/// Regression metrics plus ranking quality for one scored task.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RankedRegressionMetrics {
    pub mse: f64,
    pub msle: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportMeta {
    pub split: String,
    pub obs_fraction: f64,
    pub event_count: usize,
    /// Users contributing to the vulnerability metrics, summed over events.
    pub labeled_user_count: usize,
    pub seed: u64,
}

/// Full evaluation summary for one split at one observation fraction.
///
/// `vulnerability` is None when no evaluated event contains a labeled
/// user. Splits built from non-overlapping events hit this case: their
/// users appear in exactly one event, so none carry a vulnerability label.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub rumor: ClassificationMetrics,
    pub virality: RankedRegressionMetrics,
    pub vulnerability: Option<RankedRegressionMetrics>,
    pub meta: ReportMeta,
}

/// Accuracy plus macro-averaged precision/recall/F1 over both classes.
///
/// Per-class ratios with an empty denominator are 0, and both classes enter
/// the macro average even when one never occurs, so a degenerate constant
/// predictor lands at macro-F1 0.5 instead of 1.0.
pub fn classification_report(
    predicted: &[Label],
    truth: &[Label],
) -> Result<ClassificationMetrics, EvalError> {
    assert_eq!(predicted.len(), truth.len());
    if truth.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let matches = predicted
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    let ratio = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };

    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut f1 = 0.0;
    for class in [Label::NonRumor, Label::Rumor] {
        let tp = predicted
            .iter()
            .zip(truth)
            .filter(|(p, t)| **p == class && **t == class)
            .count() as f64;
        let fp = predicted
            .iter()
            .zip(truth)
            .filter(|(p, t)| **p == class && **t != class)
            .count() as f64;
        let fn_ = predicted
            .iter()
            .zip(truth)
            .filter(|(p, t)| **p != class && **t == class)
            .count() as f64;
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        precision += p;
        recall += r;
        f1 += ratio(2.0 * p * r, p + r);
    }
    Ok(ClassificationMetrics {
        accuracy: matches as f64 / truth.len() as f64,
        macro_precision: precision / 2.0,
        macro_recall: recall / 2.0,
        macro_f1: f1 / 2.0,
    })
}

/// MSE and MSLE over paired predictions and targets.
///
/// MSLE compares log1p values; predictions are floored at 0 first so a
/// negative regression output cannot push log1p out of domain. Targets are
/// used raw (they are log-counts or fractions, never negative).
pub fn regression_metrics(
    predicted: &[f64],
    target: &[f64],
) -> Result<RegressionMetrics, EvalError> {
    assert_eq!(predicted.len(), target.len());
    if target.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = target.len() as f64;
    let mse = predicted
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n;
    let msle = predicted
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p.max(0.0).ln_1p() - t.ln_1p();
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(RegressionMetrics { mse, msle })
}

/// Normalized discounted cumulative gain of ranking items by `scores`
/// against graded `relevance`.
///
/// Items are ordered by descending score; equal scores keep their input
/// order (stable sort), which pins tie handling for reproducibility.
/// DCG sums relevance / log2(rank+1) over 1-based ranks. When every
/// relevance is 0 the ideal DCG is 0 and the result is defined as 1.0.
pub fn ndcg(scores: &[f64], relevance: &[f64]) -> Result<f64, EvalError> {
    assert_eq!(scores.len(), relevance.len());
    if scores.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let dcg = |rels: &[f64]| -> f64 {
        rels.iter()
            .enumerate()
            .map(|(i, r)| r / ((i + 2) as f64).log2())
            .sum()
    };
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let ranked: Vec<f64> = order.iter().map(|&i| relevance[i]).collect();

    let mut ideal = relevance.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(&ideal);
    if idcg == 0.0 {
        return Ok(1.0);
    }
    Ok(dcg(&ranked) / idcg)
}

/// What the model said about one event, next to the ground truth.
#[derive(Debug, Clone)]
pub struct EventPrediction {
    pub event_id: String,
    pub truth: Label,
    pub predicted: Label,
    /// Probability assigned to the rumor class.
    pub rumor_prob: f64,
    pub virality_pred: f64,
    pub virality_target: f64,
    /// (prediction, label) per vulnerability-labeled user in the graph.
    pub vuln_pairs: Vec<(f64, f64)>,
}

/// Run inference (no dropout) over prepared events, in input order.
pub fn collect_event_predictions(
    params: &ModelParams,
    mode: DirectionMode,
    prepared: &[PreparedEvent],
) -> Vec<EventPrediction> {
    ordered_map(prepared, None, |event| {
        let (pred, _) = forward(event, params, mode, None);
        let vuln_pairs = event
            .vuln_labels
            .iter()
            .map(|&(node, label)| (pred.vulnerability[node], label))
            .collect();
        EventPrediction {
            event_id: event.event_id.clone(),
            truth: event.class,
            predicted: pred.predicted_class(),
            rumor_prob: pred.rumor_prob(),
            virality_pred: pred.virality,
            virality_target: event.virality_target,
            vuln_pairs,
        }
    })
}

/// Reduce per-event predictions to a metrics report.
///
/// Rumor and virality metrics aggregate over events. Vulnerability metrics
/// pool labeled users across all events before computing MSE/MSLE/nDCG, so
/// an event with many labeled users weighs proportionally more.
/// Ranking relevance is 2^target for virality (undoing the log2 label) and
/// the raw label for vulnerability.
pub fn summarize(
    predictions: &[EventPrediction],
    split: &str,
    obs_fraction: f64,
    seed: u64,
) -> Result<MetricsReport, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let predicted: Vec<Label> = predictions.iter().map(|p| p.predicted).collect();
    let truth: Vec<Label> = predictions.iter().map(|p| p.truth).collect();
    let rumor = classification_report(&predicted, &truth)?;

    let vir_pred: Vec<f64> = predictions.iter().map(|p| p.virality_pred).collect();
    let vir_target: Vec<f64> = predictions.iter().map(|p| p.virality_target).collect();
    let vir_reg = regression_metrics(&vir_pred, &vir_target)?;
    let vir_rel: Vec<f64> = vir_target.iter().map(|t| t.exp2()).collect();
    let virality = RankedRegressionMetrics {
        mse: vir_reg.mse,
        msle: vir_reg.msle,
        ndcg: ndcg(&vir_pred, &vir_rel)?,
    };

    let vuln_pred: Vec<f64> = predictions
        .iter()
        .flat_map(|p| p.vuln_pairs.iter().map(|&(pred, _)| pred))
        .collect();
    let vuln_label: Vec<f64> = predictions
        .iter()
        .flat_map(|p| p.vuln_pairs.iter().map(|&(_, label)| label))
        .collect();
    let vulnerability = if vuln_pred.is_empty() {
        None
    } else {
        let reg = regression_metrics(&vuln_pred, &vuln_label)?;
        Some(RankedRegressionMetrics {
            mse: reg.mse,
            msle: reg.msle,
            ndcg: ndcg(&vuln_pred, &vuln_label)?,
        })
    };

    Ok(MetricsReport {
        rumor,
        virality,
        vulnerability,
        meta: ReportMeta {
            split: split.to_string(),
            obs_fraction,
            event_count: predictions.len(),
            labeled_user_count: vuln_pred.len(),
            seed,
        },
    })
}

/// Evaluate trained parameters on already-prepared events.
pub fn evaluate_prepared(
    params: &ModelParams,
    mode: DirectionMode,
    prepared: &[PreparedEvent],
    split: &str,
    obs_fraction: f64,
    seed: u64,
) -> Result<MetricsReport, EvalError> {
    let predictions = collect_event_predictions(params, mode, prepared);
    summarize(&predictions, split, obs_fraction, seed)
}

/// Prepare a split at one observation fraction and evaluate it.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    params: &ModelParams,
    config: &ModelConfig,
    events: &[&PropagationEvent],
    labels: &LabelSet,
    user_table: &UserEmbeddingTable,
    obs_fraction: f64,
    split: &str,
    seed: u64,
) -> Result<MetricsReport, EvalError> {
    if events.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let encoder = config.text_encoder();
    let prepared = ordered_map(events, None, |event| {
        prepare_event(event, obs_fraction, &encoder, user_table, labels)
    });
    evaluate_prepared(params, config.direction, &prepared, split, obs_fraction, seed)
}

/// Evaluate the same parameters at each observation fraction.
#[allow(clippy::too_many_arguments)]
pub fn observation_sweep(
    params: &ModelParams,
    config: &ModelConfig,
    events: &[&PropagationEvent],
    labels: &LabelSet,
    user_table: &UserEmbeddingTable,
    fractions: &[f64],
    split: &str,
    seed: u64,
) -> Result<Vec<MetricsReport>, EvalError> {
    fractions
        .iter()
        .map(|&f| evaluate(params, config, events, labels, user_table, f, split, seed))
        .collect()
}
