//! Stratified cross-validation and train/test split protocols.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{metrics_from_confusion, ClassMetrics};
use super::{predict_row, Prediction, Trainer};
use crate::error::{Error, Result};
use crate::features::LabeledDataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `cv<k>` or `split<percent>`.
    pub protocol: String,
    pub seed: u64,
    pub classifier: String,
    pub n_rows: usize,
    pub vocab: Vec<String>,
    /// Rows are actual labels, columns predicted, both in vocab order.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
    pub weighted_f: f64,
    pub macro_f: f64,
    pub accuracy: f64,
    /// Digest of the row-to-fold (or train/test) assignment.
    pub fold_hash: String,
}

impl EvalReport {
    fn build(
        protocol: String,
        seed: u64,
        classifier: String,
        vocab: &[String],
        actual: &[usize],
        predicted: &[usize],
        assignment: &[usize],
    ) -> Result<EvalReport> {
        let k = vocab.len();
        let mut confusion = vec![vec![0u64; k]; k];
        for (&a, &p) in actual.iter().zip(predicted) {
            confusion[a][p] += 1;
        }
        let m = metrics_from_confusion(&confusion, vocab)?;
        Ok(EvalReport {
            protocol,
            seed,
            classifier,
            n_rows: assignment.len(),
            vocab: vocab.to_vec(),
            confusion,
            per_class: m.per_class,
            weighted_f: m.weighted_f,
            macro_f: m.macro_f,
            accuracy: m.accuracy,
            fold_hash: assignment_hash(assignment),
        })
    }

    pub fn class(&self, label: &str) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.label == label)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EvalReport> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }
}

fn assignment_hash(assignment: &[usize]) -> String {
    let mut h = Sha256::new();
    for &a in assignment {
        h.update((a as u64).to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

fn members_by_class(y: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut by = vec![Vec::new(); n_classes];
    for (i, &c) in y.iter().enumerate() {
        by[c].push(i);
    }
    by
}

/// Fold index for every row. Each class is shuffled and dealt round-robin,
/// continuing where the previous class stopped so fold sizes stay level.
pub fn stratified_folds(y: &[usize], n_classes: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    let by = members_by_class(y, n_classes);
    let short: Vec<String> = by
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty() && m.len() < k)
        .map(|(c, m)| format!("class {c}: {}", m.len()))
        .collect();
    if !short.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "every class needs at least {k} rows for {k}-fold CV ({})",
            short.join(", ")
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; y.len()];
    let mut offset = 0;
    for mut members in by {
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            folds[i] = (offset + j) % k;
        }
        offset = (offset + members.len()) % k;
    }
    Ok(folds)
}

/// Stratified train/test split. Per-class train counts are `fraction * n_c`
/// rounded so the total hits `round(fraction * n)` (largest remainder).
pub fn stratified_split(
    y: &[usize],
    n_classes: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let by = members_by_class(y, n_classes);
    let exact: Vec<f64> = by.iter().map(|m| m.len() as f64 * train_fraction).collect();
    let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let target = (y.len() as f64 * train_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut missing = target.saturating_sub(take.iter().sum());
    for &c in &order {
        if missing == 0 {
            break;
        }
        if take[c] < by[c].len() {
            take[c] += 1;
            missing -= 1;
        }
    }
    for (c, m) in by.iter().enumerate() {
        if !m.is_empty() && (take[c] == 0 || take[c] == m.len()) {
            return Err(Error::InvalidDataset(format!(
                "class {c} ({} rows) would be missing from the {} side of a {train_fraction} split",
                m.len(),
                if take[c] == 0 { "training" } else { "test" }
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, mut members) in by.into_iter().enumerate() {
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..take[c]]);
        test.extend_from_slice(&members[take[c]..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Held-out prediction for every row under stratified k-fold CV, along
/// with the fold assignment.
pub fn cv_predictions(
    ds: &LabeledDataset,
    trainer: &dyn Trainer,
    k: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<Prediction>)> {
    let y = ds.label_indices();
    let folds = stratified_folds(&y, ds.vocab().len(), k, seed)?;
    let per_fold: Vec<Vec<(usize, Prediction)>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..ds.len()).filter(|&i| folds[i] != f).collect();
            let model = trainer.fit(&ds.subset(&train)?)?;
            Ok((0..ds.len())
                .filter(|&i| folds[i] == f)
                .map(|i| (i, predict_row(model.as_ref(), &ds.rows()[i])))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut preds: Vec<Option<Prediction>> = vec![None; ds.len()];
    for (i, p) in per_fold.into_iter().flatten() {
        preds[i] = Some(p);
    }
    let preds = preds
        .into_iter()
        .map(|p| p.ok_or_else(|| Error::Internal("row missed by every fold".into())))
        .collect::<Result<_>>()?;
    Ok((folds, preds))
}

fn label_index(vocab: &[String], label: &str) -> usize {
    vocab
        .binary_search_by(|v| v.as_str().cmp(label))
        .expect("prediction within vocab")
}

pub fn evaluate_cv(
    ds: &LabeledDataset,
    trainer: &dyn Trainer,
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    let (folds, preds) = cv_predictions(ds, trainer, k, seed)?;
    let predicted: Vec<usize> = preds
        .iter()
        .map(|p| label_index(ds.vocab(), &p.label))
        .collect();
    EvalReport::build(
        format!("cv{k}"),
        seed,
        trainer.name(),
        ds.vocab(),
        &ds.label_indices(),
        &predicted,
        &folds,
    )
}

/// Trains on the stratified training part and predicts the test part.
/// Returns the test row indices with their predictions.
pub fn split_predictions(
    ds: &LabeledDataset,
    trainer: &dyn Trainer,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>, Vec<Prediction>)> {
    let y = ds.label_indices();
    let (train, test) = stratified_split(&y, ds.vocab().len(), train_fraction, seed)?;
    let model = trainer.fit(&ds.subset(&train)?)?;
    let preds = test
        .iter()
        .map(|&i| predict_row(model.as_ref(), &ds.rows()[i]))
        .collect();
    Ok((train, test, preds))
}

pub fn evaluate_split(
    ds: &LabeledDataset,
    trainer: &dyn Trainer,
    train_fraction: f64,
    seed: u64,
) -> Result<EvalReport> {
    let (_, test, preds) = split_predictions(ds, trainer, train_fraction, seed)?;
    let y = ds.label_indices();
    let actual: Vec<usize> = test.iter().map(|&i| y[i]).collect();
    let predicted: Vec<usize> = preds
        .iter()
        .map(|p| label_index(ds.vocab(), &p.label))
        .collect();
    let mut side = vec![0usize; ds.len()];
    test.iter().for_each(|&i| side[i] = 1);
    EvalReport::build(
        format!("split{}", (train_fraction * 100.0).round() as u32),
        seed,
        trainer.name(),
        ds.vocab(),
        &actual,
        &predicted,
        &side,
    )
}

/// Relabels every row as `target` or a pooled remainder class. The pooled
/// class is called `other`, or `rest` when the target itself is `other`.
pub fn binary_one_vs_others(ds: &LabeledDataset, target: &str) -> Result<LabeledDataset> {
    if !ds.vocab().iter().any(|v| v == target) {
        return Err(Error::InvalidArgument(format!(
            "unknown target label `{target}` (vocabulary: {})",
            ds.vocab().join(", ")
        )));
    }
    let pooled = if target == "other" { "rest" } else { "other" };
    ds.relabel(|l| {
        if l == target {
            target.to_string()
        } else {
            pooled.to_string()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{Classifier, ClassifierSpec, ForestConfig};
    use std::collections::BTreeMap;

    fn balanced(classes: usize, per: usize) -> LabeledDataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            for j in 0..per {
                rows.push(vec![c as f64, j as f64]);
                labels.push(format!("c{c:02}"));
            }
        }
        LabeledDataset::new(
            vec!["label".into(), "j".into()],
            rows,
            labels,
            BTreeMap::new(),
        )
        .unwrap()
    }

    struct Majority;
    struct Constant(Vec<String>, Vec<String>, usize);

    impl Classifier for Constant {
        fn vocab(&self) -> &[String] {
            &self.0
        }
        fn feature_names(&self) -> &[String] {
            &self.1
        }
        fn distribution(&self, _: &[f64]) -> Vec<f64> {
            let mut d = vec![0.0; self.0.len()];
            d[self.2] = 1.0;
            d
        }
    }

    impl Trainer for Majority {
        fn fit(&self, ds: &LabeledDataset) -> Result<Box<dyn Classifier>> {
            let counts = ds.class_counts();
            let best = (0..counts.len())
                .max_by_key(|&c| (counts[c], usize::MAX - c))
                .unwrap();
            Ok(Box::new(Constant(
                ds.vocab().to_vec(),
                ds.feature_names().to_vec(),
                best,
            )))
        }
        fn name(&self) -> String {
            "majority".into()
        }
    }

    #[test]
    fn one_row_per_class_per_fold() {
        let ds = balanced(10, 10);
        let folds = stratified_folds(&ds.label_indices(), 10, 10, 5).unwrap();
        let y = ds.label_indices();
        for f in 0..10 {
            for c in 0..10 {
                let n = (0..100).filter(|&i| folds[i] == f && y[i] == c).count();
                assert_eq!(n, 1);
            }
        }
    }

    #[test]
    fn too_few_rows_rejected() {
        let ds = balanced(3, 4);
        let err = evaluate_cv(&ds, &Majority, 10, 1).unwrap_err();
        assert!(err.to_string().contains("class 0: 4"));
    }

    #[test]
    fn perfect_feature_gives_perfect_report() {
        let ds = balanced(4, 12);
        let trainer = ClassifierSpec::Forest(ForestConfig {
            n_trees: 10,
            ..Default::default()
        });
        let r = evaluate_cv(&ds, &trainer, 10, 3).unwrap();
        assert_eq!(r.weighted_f, 1.0);
        assert_eq!(r.protocol, "cv10");
        let row_sums: Vec<u64> = r.confusion.iter().map(|row| row.iter().sum()).collect();
        assert_eq!(row_sums, vec![12; 4]);
    }

    #[test]
    fn majority_guess_recalls() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..100 {
            rows.push(vec![i as f64]);
            labels.push(if i < 60 { "maj" } else { "min" }.to_string());
        }
        let ds = LabeledDataset::new(vec!["x".into()], rows, labels, BTreeMap::new()).unwrap();
        let r = evaluate_cv(&ds, &Majority, 10, 1).unwrap();
        assert_eq!(r.class("maj").unwrap().recall, 1.0);
        assert_eq!(r.class("min").unwrap().recall, 0.0);
    }

    #[test]
    fn split_sizes() {
        let ds = balanced(2, 50);
        let (train, test) = stratified_split(&ds.label_indices(), 2, 0.66, 4).unwrap();
        assert_eq!((train.len(), test.len()), (66, 34));
        let small = balanced(2, 5);
        let (train, test) = stratified_split(&small.label_indices(), 2, 0.5, 4).unwrap();
        assert_eq!((train.len(), test.len()), (5, 5));
        assert_eq!(
            stratified_split(&ds.label_indices(), 2, 0.66, 4).unwrap(),
            stratified_split(&ds.label_indices(), 2, 0.66, 4).unwrap()
        );
        let r = evaluate_split(&ds, &Majority, 0.66, 4).unwrap();
        assert_eq!(r.protocol, "split66");
        assert_eq!(r.confusion.iter().flatten().sum::<u64>(), 34);
    }

    #[test]
    fn split_without_room_for_a_class_fails() {
        let mut rows = vec![vec![0.0]; 10];
        rows.push(vec![1.0]);
        let mut labels = vec!["a".to_string(); 10];
        labels.push("b".into());
        let ds = LabeledDataset::new(vec!["x".into()], rows, labels, BTreeMap::new()).unwrap();
        assert!(evaluate_split(&ds, &Majority, 0.66, 1).is_err());
    }

    #[test]
    fn one_vs_others_relabels() {
        let ds = balanced(10, 58);
        let b = binary_one_vs_others(&ds, "c03").unwrap();
        assert_eq!(b.len(), 580);
        assert_eq!(b.vocab(), &["c03".to_string(), "other".to_string()]);
        assert_eq!(b.class_counts(), vec![58, 522]);
        assert!(binary_one_vs_others(&ds, "nobody").is_err());
        let named = ds
            .relabel(|l| if l == "c00" { "other".into() } else { l.into() })
            .unwrap();
        let b = binary_one_vs_others(&named, "other").unwrap();
        assert_eq!(b.vocab(), &["other".to_string(), "rest".to_string()]);
    }
}
