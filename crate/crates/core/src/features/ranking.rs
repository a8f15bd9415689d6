use crate::features::LabeledDataset;
use crate::stats::entropy_of_counts;

/// Equal-frequency bin of every value: tied values share the bin of their
/// first rank, so a bin never splits a run of equal values.
fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0; n];
    let mut first_rank = 0;
    for (rank, &i) in order.iter().enumerate() {
        if rank > 0 && values[i] != values[order[rank - 1]] {
            first_rank = rank;
        }
        out[i] = (first_rank * bins / n).min(bins - 1);
    }
    out
}

/// Ranks features by information gain (nats) about the label after
/// equal-frequency discretization into at most `bins` bins.
///
/// Sorted by descending gain; ties keep canonical feature order. A dataset
/// with a single label scores every feature 0.
pub fn rank_features_info_gain(ds: &LabeledDataset, bins: usize) -> Vec<(String, f64)> {
    let bins = bins.max(1);
    let n_classes = ds.vocab().len();
    let y = ds.label_indices();
    let mut class_counts = vec![0.0; n_classes];
    for &c in &y {
        class_counts[c] += 1.0;
    }
    let h_y = entropy_of_counts(&class_counts);
    let n = ds.len() as f64;

    let mut ranked: Vec<(usize, f64)> = (0..ds.n_features())
        .map(|f| {
            let column: Vec<f64> = ds.rows().iter().map(|r| r[f]).collect();
            let binned = equal_frequency_bins(&column, bins);
            let mut joint = vec![vec![0.0; n_classes]; bins];
            for (&b, &c) in binned.iter().zip(&y) {
                joint[b][c] += 1.0;
            }
            let h_cond: f64 = joint
                .iter()
                .map(|row| {
                    let w: f64 = row.iter().sum();
                    if w == 0.0 {
                        0.0
                    } else {
                        w / n * entropy_of_counts(row)
                    }
                })
                .sum();
            (f, (h_y - h_cond).max(0.0))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
        .into_iter()
        .map(|(f, g)| (ds.feature_names()[f].clone(), g))
        .collect()
}
