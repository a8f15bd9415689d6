//! Axis-aligned classification tree grown greedily on information gain.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::learn::forest::Criterion;
use crate::stats::entropy_of_counts;

/// Flattened tree. Node `i` is a leaf when `feature[i] < 0`; otherwise rows
/// with `x[feature] <= threshold` go to `left[i]`, the rest to `right[i]`.
/// `counts[i]` holds the training class counts that reached node `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub counts: Vec<Vec<u32>>,
}

pub(crate) struct GrowParams {
    pub features_per_split: usize,
    pub min_leaf: usize,
    pub min_impurity_split: f64,
    pub max_depth: Option<usize>,
    pub criterion: Criterion,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn impurity(counts: &[f64], criterion: Criterion) -> f64 {
    match criterion {
        Criterion::Entropy => entropy_of_counts(counts),
        Criterion::Gini => {
            let total: f64 = counts.iter().sum();
            if total == 0.0 {
                0.0
            } else {
                1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>()
            }
        }
    }
}

/// Split preference: higher gain, then lower feature index, then lower threshold.
fn better(candidate: &Split, incumbent: &Option<Split>) -> bool {
    match incumbent {
        None => true,
        Some(b) => {
            candidate.gain > b.gain
                || (candidate.gain == b.gain
                    && (candidate.feature < b.feature
                        || (candidate.feature == b.feature && candidate.threshold < b.threshold)))
        }
    }
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    params: &'a GrowParams,
    tree: DecisionTree,
}

impl Grower<'_> {
    fn class_counts(&self, idx: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1.0;
        }
        c
    }

    /// Best threshold on one feature, or `None` if no admissible split exists.
    fn best_threshold(&self, idx: &mut [usize], feature: usize, parent: &[f64]) -> Option<Split> {
        let x = self.x;
        idx.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));
        let n = idx.len();
        let parent_imp = impurity(parent, self.params.criterion);
        let mut left = vec![0.0; self.n_classes];
        let mut right = parent.to_vec();
        let mut best: Option<Split> = None;
        for pos in 0..n - 1 {
            let c = self.y[idx[pos]];
            left[c] += 1.0;
            right[c] -= 1.0;
            let (a, b) = (x[idx[pos]][feature], x[idx[pos + 1]][feature]);
            if a == b {
                continue;
            }
            let n_left = pos + 1;
            let n_right = n - n_left;
            if n_left < self.params.min_leaf || n_right < self.params.min_leaf {
                continue;
            }
            let child = (n_left as f64 * impurity(&left, self.params.criterion)
                + n_right as f64 * impurity(&right, self.params.criterion))
                / n as f64;
            let mut threshold = a + (b - a) / 2.0;
            if threshold >= b {
                threshold = a;
            }
            let cand = Split {
                feature,
                threshold,
                gain: parent_imp - child,
            };
            if better(&cand, &best) {
                best = Some(cand);
            }
        }
        best
    }

    fn leaf(&mut self, counts: &[f64]) -> u32 {
        let id = self.tree.feature.len() as u32;
        self.tree.feature.push(-1);
        self.tree.threshold.push(0.0);
        self.tree.left.push(0);
        self.tree.right.push(0);
        self.tree
            .counts
            .push(counts.iter().map(|&c| c as u32).collect());
        id
    }

    fn grow<R: Rng>(&mut self, idx: &mut [usize], depth: usize, rng: &mut R) -> u32 {
        let counts = self.class_counts(idx);
        let n = idx.len();
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure
            || depth_capped
            || n < 2 * self.params.min_leaf
            || impurity(&counts, self.params.criterion) <= self.params.min_impurity_split
        {
            return self.leaf(&counts);
        }

        let d = self.x[0].len();
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(rng);
        let mut best: Option<Split> = None;
        // Try the sampled features first; keep drawing until some split
        // actually gains information.
        for (tried, &f) in order.iter().enumerate() {
            if tried >= self.params.features_per_split
                && best.as_ref().is_some_and(|b| b.gain > 0.0)
            {
                break;
            }
            if let Some(s) = self.best_threshold(idx, f, &counts) {
                if better(&s, &best) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best.filter(|s| s.gain > 0.0) else {
            return self.leaf(&counts);
        };

        let (mut left_idx, mut right_idx): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let id = self.leaf(&counts);
        self.tree.feature[id as usize] = split.feature as i32;
        self.tree.threshold[id as usize] = split.threshold;
        let l = self.grow(&mut left_idx, depth + 1, rng);
        let r = self.grow(&mut right_idx, depth + 1, rng);
        self.tree.left[id as usize] = l;
        self.tree.right[id as usize] = r;
        id
    }
}

impl DecisionTree {
    pub(crate) fn grow<R: Rng>(
        x: &[Vec<f64>],
        y: &[usize],
        n_classes: usize,
        sample: Vec<usize>,
        params: &GrowParams,
        rng: &mut R,
    ) -> DecisionTree {
        let mut grower = Grower {
            x,
            y,
            n_classes,
            params,
            tree: DecisionTree {
                feature: Vec::new(),
                threshold: Vec::new(),
                left: Vec::new(),
                right: Vec::new(),
                counts: Vec::new(),
            },
        };
        let mut idx = sample;
        grower.grow(&mut idx, 0, rng);
        grower.tree
    }

    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &DecisionTree, i: usize) -> usize {
            if t.feature[i] < 0 {
                0
            } else {
                1 + walk(t, t.left[i] as usize).max(walk(t, t.right[i] as usize))
            }
        }
        walk(self, 0)
    }

    /// Index of the leaf reached by `row`.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        while self.feature[i] >= 0 {
            let f = self.feature[i] as usize;
            i = if row[f] <= self.threshold[i] {
                self.left[i]
            } else {
                self.right[i]
            } as usize;
        }
        i
    }

    /// Normalized class distribution of the leaf reached by `row`.
    pub fn leaf_distribution(&self, row: &[f64]) -> Vec<f64> {
        let counts = &self.counts[self.leaf_index(row)];
        let total: u32 = counts.iter().sum();
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    }

    /// Structural checks used when loading a model from disk.
    pub(crate) fn validate(&self, n_features: usize, n_classes: usize) -> Result<(), String> {
        let n = self.feature.len();
        if n == 0 {
            return Err("tree has no nodes".into());
        }
        if [
            self.threshold.len(),
            self.left.len(),
            self.right.len(),
            self.counts.len(),
        ]
        .iter()
        .any(|&l| l != n)
        {
            return Err("tree arrays differ in length".into());
        }
        for i in 0..n {
            if self.counts[i].len() != n_classes {
                return Err(format!(
                    "node {i} has {} class counts",
                    self.counts[i].len()
                ));
            }
            if self.feature[i] >= 0 {
                if self.feature[i] as usize >= n_features {
                    return Err(format!("node {i} splits on feature {}", self.feature[i]));
                }
                let (l, r) = (self.left[i] as usize, self.right[i] as usize);
                if l <= i || r <= i || l >= n || r >= n {
                    return Err(format!("node {i} has invalid children"));
                }
            } else if self.counts[i].iter().sum::<u32>() == 0 {
                return Err(format!("leaf {i} has no support"));
            }
        }
        Ok(())
    }
}
