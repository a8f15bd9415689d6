use std::collections::BTreeMap;

use proptest::prelude::*;

use vibespeech_core::corpus::{speakers, synthesize_sentence, CorpusConfig};
use vibespeech_core::features::LabeledDataset;
use vibespeech_core::learn::{
    metrics_from_confusion, stratified_folds, stratified_split, Classifier, ClassifierSpec,
    ForestConfig, LogisticConfig, Model,
};
use vibespeech_core::segment::{highpass_motion_filter, isolate_words, IsolationConfig};
use vibespeech_core::synth::alias_frequency;
use vibespeech_core::trace::SensorTrace;

fn labels_strategy() -> impl Strategy<Value = (Vec<usize>, usize)> {
    (2usize..6).prop_flat_map(|c| {
        (prop::collection::vec(0..c, 20..200), Just(c))
            .prop_filter("every class present", |(y, c)| {
                (0..*c).all(|k| y.contains(&k))
            })
    })
}

fn toy_dataset(rows: &[(f64, f64, usize)]) -> LabeledDataset {
    LabeledDataset::new(
        vec!["a".into(), "b".into()],
        rows.iter().map(|&(a, b, _)| vec![a, b]).collect(),
        rows.iter().map(|&(_, _, c)| format!("class{c}")).collect(),
        BTreeMap::new(),
    )
    .unwrap()
}

fn trace_from(z: Vec<f64>) -> SensorTrace {
    let n = z.len();
    SensorTrace::uniform(200.0, 0.0, vec![0.0; n], vec![0.0; n], z, BTreeMap::new()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_partition_rows_and_balance_classes((y, c) in labels_strategy(), k in 2usize..11, seed in any::<u64>()) {
        let smallest = (0..c).map(|class| y.iter().filter(|&&v| v == class).count()).min().unwrap();
        let result = stratified_folds(&y, c, k, seed);
        if smallest < k {
            prop_assert!(result.is_err());
            return Ok(());
        }
        let folds = result.unwrap();
        prop_assert_eq!(folds.len(), y.len());
        prop_assert!(folds.iter().all(|&f| f < k));
        for class in 0..c {
            let counts: Vec<usize> = (0..k)
                .map(|f| (0..y.len()).filter(|&i| y[i] == class && folds[i] == f).count())
                .collect();
            prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        }
        prop_assert_eq!(&folds, &stratified_folds(&y, c, k, seed).unwrap());
    }

    #[test]
    fn split_is_a_stratified_partition((y, c) in labels_strategy(), frac in 0.1f64..0.9, seed in any::<u64>()) {
        let Ok((train, test)) = stratified_split(&y, c, frac, seed) else {
            return Ok(());
        };
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
        for class in 0..c {
            let n = y.iter().filter(|&&v| v == class).count() as f64;
            let tr = train.iter().filter(|&&i| y[i] == class).count() as f64;
            prop_assert!((tr - frac * n).abs() <= 1.0);
        }
    }

    #[test]
    fn metrics_stay_in_unit_range(m in (1usize..6).prop_flat_map(|c| prop::collection::vec(prop::collection::vec(0u64..50, c), c))) {
        let labels: Vec<String> = (0..m.len()).map(|i| i.to_string()).collect();
        let r = metrics_from_confusion(&m, &labels).unwrap();
        for v in [r.weighted_f, r.macro_f, r.accuracy] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let total: u64 = m.iter().flatten().sum();
        let diag: u64 = (0..m.len()).map(|i| m[i][i]).sum();
        if total > 0 {
            prop_assert!((r.accuracy - diag as f64 / total as f64).abs() < 1e-12);
        }
        for c in &r.per_class {
            prop_assert!((0.0..=1.0).contains(&c.precision));
            prop_assert!((0.0..=1.0).contains(&c.recall));
            prop_assert!(c.f <= c.precision.max(c.recall) + 1e-12);
        }
    }

    #[test]
    fn classifier_distributions_sum_to_one(
        rows in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0usize..3), 12..60),
        probe in prop::collection::vec((-8.0f64..8.0, -8.0f64..8.0), 1..10),
        seed in any::<u64>(),
    ) {
        let mut rows = rows;
        for c in 0..3 {
            rows.push((c as f64, -(c as f64), c));
        }
        let ds = toy_dataset(&rows);
        let specs = [
            ClassifierSpec::Forest(ForestConfig { n_trees: 15, seed, ..ForestConfig::default() }),
            ClassifierSpec::Tree(ForestConfig::single_tree(seed)),
            ClassifierSpec::Logistic(LogisticConfig::default()),
        ];
        for spec in &specs {
            let model = spec.train(&ds).unwrap();
            for &(a, b) in &probe {
                let d = model.distribution(&[a, b]);
                prop_assert_eq!(d.len(), 3);
                prop_assert!(d.iter().all(|&p| (0.0..=1.0).contains(&p)));
                prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            let back = Model::from_json(&model.to_json().unwrap()).unwrap();
            prop_assert_eq!(back.distribution(&[0.5, 0.5]), model.distribution(&[0.5, 0.5]));
        }
    }

    #[test]
    fn alias_lies_in_first_nyquist_zone(f in 0.0f64..20_000.0, fs in 50.0f64..1000.0, n in 0u32..40) {
        let a = alias_frequency(f, fs);
        prop_assert!(a >= 0.0 && a <= fs / 2.0 + 1e-9);
        let shifted = alias_frequency(f + n as f64 * fs, fs);
        prop_assert!((shifted - a).abs() < 1e-6);
        // Distance to the nearest multiple of the sampling rate.
        let k = (f / fs).round();
        prop_assert!((a - (f - k * fs).abs()).abs() < 1e-6);
    }

    #[test]
    fn highpass_is_linear(
        a in prop::collection::vec(-1.0f64..1.0, 64..256),
        gain in -3.0f64..3.0,
    ) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| (i as f64 * 0.37).sin() - v).collect();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| gain * x + y).collect();
        let fa = highpass_motion_filter(&trace_from(a), 2.0).unwrap();
        let fb = highpass_motion_filter(&trace_from(b), 2.0).unwrap();
        let fm = highpass_motion_filter(&trace_from(mix), 2.0).unwrap();
        for i in 0..fm.len() {
            let want = gain * fa.z()[i] + fb.z()[i];
            prop_assert!((fm.z()[i] - want).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn isolated_words_are_sorted_disjoint_and_in_bounds(seed in any::<u64>(), who in 0usize..10, n_words in 1usize..6) {
        let model = CorpusConfig::default().model;
        let s = synthesize_sentence(&speakers()[who], n_words, 0.15, 0.4, 5.0, &model, 8000.0, seed).unwrap();
        let filtered = highpass_motion_filter(&s.trace, 2.0).unwrap();
        let words = isolate_words(&filtered, &IsolationConfig::default()).unwrap();
        for w in &words {
            prop_assert!(w.start_idx < w.end_idx && w.end_idx <= filtered.len());
        }
        for pair in words.windows(2) {
            prop_assert!(pair[0].end_idx <= pair[1].start_idx);
        }
        let again = isolate_words(&filtered, &IsolationConfig::default()).unwrap();
        prop_assert_eq!(words, again);
    }
}
