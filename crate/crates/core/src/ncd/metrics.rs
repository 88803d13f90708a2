use serde::{Deserialize, Serialize};

use super::model::NcdModel;
use crate::data::{QMatrix, ResponseDataset};
use crate::error::{Error, Result};
use crate::par;

/// Predictions are clamped to `[LOSS_EPS, 1 - LOSS_EPS]` before taking logs.
pub const LOSS_EPS: f64 = 1e-7;

pub(crate) fn record_loss(p: f64, label: f64) -> f64 {
    let p = p.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// Mean binary cross-entropy.
pub fn bce_loss(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("bce_loss needs at least one prediction"));
    }
    let sum: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &r)| record_loss(p, r))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// ROC AUC from the Mann-Whitney rank statistic; tied scores share their
/// average rank, so a tied positive/negative pair counts one half.
/// `None` when either class is absent.
pub fn auc(predictions: &[f64], labels: &[f64]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l > 0.5).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| predictions[a].total_cmp(&predictions[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && predictions[order[j + 1]] == predictions[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; the tie group spans ranks i+1 ..= j+1.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] > 0.5).count();
        pos_rank_sum += avg * pos_in_group as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `None` when the evaluated set holds only one label.
    pub auc: Option<f64>,
    pub acc: f64,
    pub rmse: f64,
    pub mse: f64,
    pub loss: f64,
}

pub fn metrics_from_predictions(predictions: &[f64], labels: &[f64]) -> Result<Metrics> {
    let loss = bce_loss(predictions, labels)?;
    let n = predictions.len() as f64;
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(&p, &r)| (p >= 0.5) == (r > 0.5))
        .count();
    let mse = predictions
        .iter()
        .zip(labels)
        .map(|(p, r)| (p - r) * (p - r))
        .sum::<f64>()
        / n;
    Ok(Metrics {
        auc: auc(predictions, labels),
        acc: hits as f64 / n,
        rmse: mse.sqrt(),
        mse,
        loss,
    })
}

/// Predictions for every record, in record order.
pub(crate) fn predict_all(model: &NcdModel, data: &ResponseDataset, q: &QMatrix) -> Vec<f64> {
    par::map_slice(&data.records, |r| {
        model
            .trace(model.theta.row(r.student), r.item, q.row(r.item))
            .p
    })
}

pub fn evaluate(model: &NcdModel, data: &ResponseDataset, q: &QMatrix) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set is empty"));
    }
    model.check_compatible(q)?;
    data.validate()?;
    let preds = predict_all(model, data, q);
    let labels: Vec<f64> = data.records.iter().map(|r| r.label()).collect();
    metrics_from_predictions(&preds, &labels)
}
