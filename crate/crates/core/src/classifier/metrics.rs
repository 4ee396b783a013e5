use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

/// Per-class precision, recall and F1 (each 0 when undefined) and their
/// unweighted means.
pub fn prf_metrics(predictions: &[usize], truths: &[usize], num_classes: usize) -> Result<PrfReport> {
    if predictions.len() != truths.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truths.len()
        )));
    }
    if let Some(bad) = predictions.iter().chain(truths).find(|&&l| l >= num_classes) {
        return Err(Error::InvalidInput(format!("label {bad} out of range for {num_classes} classes")));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (&p, &t) in predictions.iter().zip(truths) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    let per_class: Vec<ClassMetrics> = (0..num_classes)
        .map(|c| {
            let precision = ratio(tp[c], fp[c]);
            let recall = ratio(tp[c], fn_[c]);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassMetrics { precision, recall, f1, support: tp[c] + fn_[c] }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / num_classes.max(1) as f64;
    let correct: usize = tp.iter().sum();
    Ok(PrfReport {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        accuracy: if truths.is_empty() { 0.0 } else { correct as f64 / truths.len() as f64 },
        per_class,
    })
}
