//! Classifiers, evaluation protocols and keyword search.

mod eval;
mod forest;
mod keywords;
mod logistic;
mod metrics;
mod model;
mod tree;

pub use eval::{
    binary_one_vs_others, cv_predictions, evaluate_cv, evaluate_split, split_predictions,
    stratified_folds, stratified_split, EvalReport,
};
pub use forest::{train_forest, train_tree, Criterion, ForestConfig, ForestModel};
pub use keywords::{
    calibrate_threshold, keyword_confidence_cdf, keyword_filter, predictions_for, ConfidenceCdf,
    KeywordHit,
};
pub use logistic::{train_logistic, LogisticConfig, LogisticModel};
pub use metrics::{metrics_from_confusion, ClassMetrics, Metrics};
pub use model::{Model, MODEL_SCHEMA, MODEL_SCHEMA_VERSION};
pub use tree::DecisionTree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, LabeledDataset};

/// A trained model mapping a feature row to a distribution over its vocabulary.
pub trait Classifier: Send + Sync {
    fn vocab(&self) -> &[String];
    fn feature_names(&self) -> &[String];
    /// Class probabilities, aligned with [`Classifier::vocab`], summing to 1.
    fn distribution(&self, row: &[f64]) -> Vec<f64>;
}

/// Anything that can fit a classifier to a dataset.
pub trait Trainer: Sync {
    fn fit(&self, ds: &LabeledDataset) -> Result<Box<dyn Classifier>>;
    fn name(&self) -> String;
}

/// Classifier family plus its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierSpec {
    Forest(ForestConfig),
    Tree(ForestConfig),
    Logistic(LogisticConfig),
}

impl ClassifierSpec {
    pub fn train(&self, ds: &LabeledDataset) -> Result<Model> {
        Ok(match self {
            ClassifierSpec::Forest(c) => Model::Forest(train_forest(ds, c)?),
            ClassifierSpec::Tree(c) => Model::Tree(train_tree(ds, c)?),
            ClassifierSpec::Logistic(c) => Model::Logistic(train_logistic(ds, c)?),
        })
    }
}

impl Trainer for ClassifierSpec {
    fn fit(&self, ds: &LabeledDataset) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(self.train(ds)?))
    }

    fn name(&self) -> String {
        match self {
            ClassifierSpec::Forest(_) => "forest",
            ClassifierSpec::Tree(_) => "tree",
            ClassifierSpec::Logistic(_) => "logistic",
        }
        .into()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub confidence: f64,
    pub distribution: Vec<f64>,
}

/// Index of the most probable class; ties go to the lexicographically
/// smallest label.
pub fn argmax_label(dist: &[f64], vocab: &[String]) -> usize {
    let mut best = 0;
    for i in 1..dist.len() {
        if dist[i] > dist[best] || (dist[i] == dist[best] && vocab[i] < vocab[best]) {
            best = i;
        }
    }
    best
}

pub(crate) fn predict_row(model: &dyn Classifier, row: &[f64]) -> Prediction {
    let distribution = model.distribution(row);
    let best = argmax_label(&distribution, model.vocab());
    Prediction {
        label: model.vocab()[best].clone(),
        confidence: distribution[best],
        distribution,
    }
}

/// Label, confidence and full class distribution for one feature vector.
pub fn predict(model: &dyn Classifier, fv: &FeatureVector) -> Result<Prediction> {
    if fv.names() != model.feature_names() {
        return Err(Error::InvalidArgument(format!(
            "feature layout mismatch: model expects {} features ({}...), got {} ({}...)",
            model.feature_names().len(),
            model
                .feature_names()
                .first()
                .map(String::as_str)
                .unwrap_or(""),
            fv.len(),
            fv.names().first().map(String::as_str).unwrap_or("")
        )));
    }
    Ok(predict_row(model, fv.values()))
}

pub(crate) fn check_trainable(ds: &LabeledDataset) -> Result<()> {
    if ds.n_features() == 0 {
        return Err(Error::InvalidDataset("dataset has no features".into()));
    }
    Ok(())
}
