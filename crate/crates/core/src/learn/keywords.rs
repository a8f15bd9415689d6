//! Confidence-threshold keyword search.

use super::{predict_row, Classifier, Prediction};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::stats::{mean, quantile_sorted, sorted_copy};

/// Empirical distribution of prediction confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceCdf {
    sorted: Vec<f64>,
}

impl ConfidenceCdf {
    pub fn from_confidences(confidences: &[f64]) -> Result<Self> {
        if confidences.is_empty() {
            return Err(Error::InvalidArgument(
                "no predictions to build a CDF from".into(),
            ));
        }
        Ok(ConfidenceCdf {
            sorted: sorted_copy(confidences),
        })
    }

    pub fn from_predictions(preds: &[Prediction]) -> Result<Self> {
        Self::from_confidences(&preds.iter().map(|p| p.confidence).collect::<Vec<_>>())
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of confidences `<= c`.
    pub fn cdf(&self, c: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= c) as f64 / self.sorted.len() as f64
    }

    pub fn quantile(&self, q: f64) -> f64 {
        quantile_sorted(&self.sorted, q)
    }

    pub fn mean(&self) -> f64 {
        mean(&self.sorted)
    }
}

/// Confidence CDF of `model` over a set of segment feature vectors.
pub fn keyword_confidence_cdf(
    model: &dyn Classifier,
    segments: &[FeatureVector],
) -> Result<ConfidenceCdf> {
    let preds = segments
        .iter()
        .map(|fv| super::predict(model, fv))
        .collect::<Result<Vec<_>>>()?;
    ConfidenceCdf::from_predictions(&preds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordHit {
    /// Position of the segment in the input.
    pub index: usize,
    pub label: String,
    pub confidence: f64,
}

/// Accepts each prediction whose confidence reaches `threshold` (clamped
/// to `[0, 1]`).
pub fn keyword_filter(predictions: &[Prediction], threshold: f64) -> Vec<KeywordHit> {
    let theta = if threshold.is_nan() {
        1.0
    } else {
        threshold.clamp(0.0, 1.0)
    };
    predictions
        .iter()
        .enumerate()
        .filter(|(_, p)| p.confidence >= theta)
        .map(|(index, p)| KeywordHit {
            index,
            label: p.label.clone(),
            confidence: p.confidence,
        })
        .collect()
}

/// Threshold at the `q`-th quantile of marginal-word confidences.
pub fn calibrate_threshold(marginal_confidences: &[f64], q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "quantile must be in [0, 1], got {q}"
        )));
    }
    Ok(ConfidenceCdf::from_confidences(marginal_confidences)?.quantile(q))
}

/// Predictions for raw feature rows, in order.
pub fn predictions_for(model: &dyn Classifier, rows: &[Vec<f64>]) -> Vec<Prediction> {
    rows.iter().map(|r| predict_row(model, r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(label: &str, c: f64) -> Prediction {
        Prediction {
            label: label.into(),
            confidence: c,
            distribution: vec![c, 1.0 - c],
        }
    }

    #[test]
    fn threshold_bounds() {
        let ps = vec![pred("a", 0.2), pred("b", 0.7), pred("a", 1.0)];
        assert_eq!(keyword_filter(&ps, 0.0).len(), 3);
        assert_eq!(keyword_filter(&ps, 1.0).len(), 1);
        assert_eq!(keyword_filter(&ps, 1.5).len(), 1);
        assert_eq!(keyword_filter(&ps, -3.0).len(), 3);
    }

    #[test]
    fn separated_calibration() {
        let mut ps = Vec::new();
        for i in 0..10 {
            ps.push(pred("key", 0.8 + i as f64 * 0.02));
            ps.push(pred("marg", 0.1 + i as f64 * 0.03));
        }
        let hits = keyword_filter(&ps, 0.6);
        assert_eq!(hits.len(), 10);
        assert!(hits.iter().all(|h| h.label == "key" && h.index % 2 == 0));
    }

    #[test]
    fn cdf_and_quantiles() {
        let c = ConfidenceCdf::from_confidences(&[0.5, 0.1, 0.9, 0.3]).unwrap();
        assert_eq!(c.sorted(), &[0.1, 0.3, 0.5, 0.9]);
        assert_eq!(c.cdf(0.3), 0.5);
        assert_eq!(c.cdf(0.0), 0.0);
        assert_eq!(c.cdf(1.0), 1.0);
        assert!((c.quantile(0.5) - 0.4).abs() < 1e-12);
        assert!(ConfidenceCdf::from_confidences(&[]).is_err());
        let t = calibrate_threshold(
            &(0..=100).map(|i| i as f64 / 100.0).collect::<Vec<_>>(),
            0.95,
        )
        .unwrap();
        assert!((t - 0.95).abs() < 1e-12);
    }
}
