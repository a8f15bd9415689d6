//! Bagged random forest and single-tree training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, GrowParams};
use super::{check_trainable, Classifier};
use crate::error::{Error, Result};
use crate::features::LabeledDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Entropy,
    Gini,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Bootstrap sample size as a fraction of the training rows.
    pub bag_fraction: f64,
    /// Features examined per split; 0 selects `floor(log2 d) + 1`.
    pub features_per_split: usize,
    pub min_leaf: usize,
    /// Nodes whose label entropy (nats) is at or below this are not split.
    pub min_variance_split: f64,
    pub max_depth: Option<usize>,
    pub seed: u64,
    pub criterion: Criterion,
    /// Draw a bootstrap sample per tree; off for a plain single tree.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            bag_fraction: 1.0,
            features_per_split: 0,
            min_leaf: 1,
            min_variance_split: 1e-3,
            max_depth: None,
            seed: 1,
            criterion: Criterion::Entropy,
            bootstrap: true,
        }
    }
}

impl ForestConfig {
    /// Settings of a single unbagged tree that examines every feature.
    pub fn single_tree(seed: u64) -> Self {
        ForestConfig {
            n_trees: 1,
            features_per_split: usize::MAX,
            bootstrap: false,
            seed,
            ..ForestConfig::default()
        }
    }

    /// Effective features-per-split for `d` features.
    pub fn resolved_k(&self, d: usize) -> usize {
        if self.features_per_split == 0 {
            ((d as f64).log2().floor() as usize + 1).min(d)
        } else {
            self.features_per_split.min(d)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if !(self.bag_fraction > 0.0 && self.bag_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "bag_fraction must be in (0, 1], got {}",
                self.bag_fraction
            )));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("min_leaf must be at least 1".into()));
        }
        if !(self.min_variance_split >= 0.0) {
            return Err(Error::Config(
                "min_variance_split must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub vocab: Vec<String>,
    pub feature_names: Vec<String>,
    pub trees: Vec<DecisionTree>,
}

impl ForestModel {
    pub(crate) fn validate(&self) -> std::result::Result<(), String> {
        if self.trees.is_empty() {
            return Err("forest has no trees".into());
        }
        if self.vocab.is_empty() {
            return Err("empty vocabulary".into());
        }
        for (i, t) in self.trees.iter().enumerate() {
            t.validate(self.feature_names.len(), self.vocab.len())
                .map_err(|e| format!("tree {i}: {e}"))?;
        }
        Ok(())
    }
}

impl Classifier for ForestModel {
    fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    fn distribution(&self, row: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.vocab.len()];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.leaf_distribution(row)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

/// Trains `cfg.n_trees` trees; tree `i` draws from a stream seeded with
/// `seed ^ i`, so the result does not depend on thread scheduling.
pub fn train_forest(ds: &LabeledDataset, cfg: &ForestConfig) -> Result<ForestModel> {
    cfg.validate()?;
    check_trainable(ds)?;
    let n = ds.len();
    let y = ds.label_indices();
    let x = ds.rows();
    let params = GrowParams {
        features_per_split: cfg.resolved_k(ds.n_features()),
        min_leaf: cfg.min_leaf,
        min_impurity_split: cfg.min_variance_split,
        max_depth: cfg.max_depth,
        criterion: cfg.criterion,
    };
    let bag = ((cfg.bag_fraction * n as f64).ceil() as usize).clamp(1, n);
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ i as u64);
            let sample: Vec<usize> = if cfg.bootstrap {
                (0..bag).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            DecisionTree::grow(x, &y, ds.vocab().len(), sample, &params, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        config: cfg.clone(),
        vocab: ds.vocab().to_vec(),
        feature_names: ds.feature_names().to_vec(),
        trees,
    })
}

/// Single unbagged tree considering every feature at each split.
pub fn train_tree(ds: &LabeledDataset, cfg: &ForestConfig) -> Result<ForestModel> {
    let cfg = ForestConfig {
        n_trees: 1,
        bootstrap: false,
        features_per_split: usize::MAX,
        ..cfg.clone()
    };
    train_forest(ds, &cfg)
}
