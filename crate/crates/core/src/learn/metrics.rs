//! Precision, recall and F-measure from a confusion matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: Vec<ClassMetrics>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f: f64,
    pub macro_f: f64,
    pub accuracy: f64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Rows of `confusion` are actual classes, columns predicted classes.
/// Weighted aggregates use row support; the macro F is the plain mean.
pub fn metrics_from_confusion(confusion: &[Vec<u64>], labels: &[String]) -> Result<Metrics> {
    let k = confusion.len();
    if confusion.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidArgument(
            "confusion matrix is not square".into(),
        ));
    }
    if labels.len() != k {
        return Err(Error::InvalidArgument(format!(
            "{} labels for a {k}x{k} confusion matrix",
            labels.len()
        )));
    }
    let total: u64 = confusion.iter().flatten().sum();
    let mut per_class = Vec::with_capacity(k);
    let (mut wp, mut wr, mut wf, mut mf) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..k {
        let tp = confusion[c][c];
        let support: u64 = confusion[c].iter().sum();
        let predicted: u64 = confusion.iter().map(|r| r[c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let w = ratio(support, total);
        wp += w * precision;
        wr += w * recall;
        wf += w * f;
        mf += f;
        per_class.push(ClassMetrics {
            label: labels[c].clone(),
            precision,
            recall,
            f,
            support,
        });
    }
    let correct: u64 = (0..k).map(|c| confusion[c][c]).sum();
    Ok(Metrics {
        per_class,
        weighted_precision: wp,
        weighted_recall: wr,
        weighted_f: wf,
        macro_f: if k == 0 { 0.0 } else { mf / k as f64 },
        accuracy: ratio(correct, total),
    })
}
