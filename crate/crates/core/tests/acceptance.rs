//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vibespeech_core::corpus::{
    generate_corpus, speakers, synthesize_sentence, write_corpus, CorpusConfig,
};
use vibespeech_core::dsp::magnitude_spectrum;
use vibespeech_core::experiment::{
    compare_feature_sets, keyword_search, run_experiment, ExperimentConfig, KeywordConfig, Task,
};
use vibespeech_core::features::{
    build_dataset_from_traces, extract_tf_features, LabelColumn, PipelineConfig,
};
use vibespeech_core::learn::{
    evaluate_cv, metrics_from_confusion, stratified_folds, stratified_split, ClassifierSpec,
    ForestConfig,
};
use vibespeech_core::segment::{
    highpass_motion_filter, isolate_words, IsolationConfig, SpeechSegment,
};
use vibespeech_core::synth::{alias_frequency, synthesize_trace, ResponseModel};
use vibespeech_core::trace::{AudioClip, SensorTrace};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

// 1. Aliasing exactness.

fn dominant_frequency(z: &[f64], rate: f64) -> (f64, f64) {
    let mags = magnitude_spectrum(z);
    let (k, _) =
        mags.iter().enumerate().fold(
            (0, f64::MIN),
            |best, (k, &m)| if m > best.1 { (k, m) } else { best },
        );
    let bin = rate / z.len() as f64;
    (k as f64 * bin, bin)
}

fn tone_alias_error(f: f64, fs: f64) -> (f64, f64, f64) {
    let audio_rate = 16_000.0;
    let secs = 2.0;
    let n = (audio_rate * secs) as usize;
    let samples = (0..n)
        .map(|i| 0.8 * (2.0 * std::f64::consts::PI * f * i as f64 / audio_rate + 0.3).sin())
        .collect();
    let clip = AudioClip::new(audio_rate, samples, None).unwrap();
    let model = ResponseModel {
        band_lo_hz: 0.0,
        band_hi_hz: 4100.0,
        sensor_rate_hz: fs,
        noise_sigma: 0.0,
        gravity_offset: 0.0,
        ..ResponseModel::default()
    };
    let trace = synthesize_trace(&clip, &model, 0.0, 0.0).unwrap();
    let (peak, bin) = dominant_frequency(trace.z(), fs);
    let expected = alias_frequency(f, fs);
    ((peak - expected).abs(), bin, expected)
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut pairs = vec![(440.0, 200.0), (3300.0, 250.0)];
    for _ in 0..50 {
        pairs.push((rng.gen_range(0.0..=4000.0), rng.gen_range(100.0..=250.0)));
    }
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for &(f, fs) in &pairs {
        let (err, bin, expected) = tone_alias_error(f, fs);
        worst = worst.max(err / bin);
        if err > bin + 1e-9 {
            failures.push(format!("{f:.1}@{fs:.1} expected {expected:.2}"));
        }
    }
    let forced = alias_frequency(440.0, 200.0) == 40.0 && alias_frequency(3300.0, 250.0) == 50.0;
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        failures.is_empty() && forced && secs < 5.0,
        format!(
            "{} tones, worst error {worst:.2} bins, {secs:.2} s{}",
            pairs.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; off: {}", failures.join(", "))
            }
        ),
    )
}

// 2. Feature oracle equivalence.

fn quantile_oracle(s: &[f64], q: f64) -> f64 {
    let mut v = s.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= v.len() {
        return v[lo];
    }
    v[lo] + (h - lo as f64) * (v[lo + 1] - v[lo])
}

/// Each statistic straight from its textbook definition; spectral values
/// use a direct O(m^2) DFT.
fn axis_oracle(s: &[f64], dt: f64) -> Vec<f64> {
    let m = s.len() as f64;
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = s.iter().sum::<f64>() / m;
    let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let std = var.sqrt();
    let abs_mean = s.iter().map(|v| v.abs()).sum::<f64>() / m;
    let cv = if mean.abs() < 1e-9 {
        0.0
    } else {
        100.0 * std / mean.abs()
    };
    let m2 = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
    let m3 = s.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / m;
    let m4 = s.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / m;
    let (q1, q2, q3) = (
        quantile_oracle(s, 0.25),
        quantile_oracle(s, 0.5),
        quantile_oracle(s, 0.75),
    );
    let crossings = (1..s.len())
        .filter(|&i| (s[i - 1] < mean && s[i] > mean) || (s[i - 1] > mean && s[i] < mean))
        .count();
    let abs_area = s.iter().map(|v| v.abs() * dt).sum::<f64>();
    let n = s.len();
    let mags: Vec<f64> = (1..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, &v) in s.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * j % n) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect();
    let energy: f64 = mags.iter().sum();
    let power: f64 = mags.iter().map(|v| v * v).sum();
    let entropy = -mags
        .iter()
        .map(|v| v * v / power)
        .filter(|&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>();
    let freq_ratio = mags.iter().copied().fold(0.0, f64::max) / energy;
    vec![
        min,
        max,
        q2,
        var,
        std,
        max - min,
        abs_mean,
        cv,
        m3 / m2.powf(1.5),
        m4 / (m2 * m2),
        q1,
        q2,
        q3,
        q3 - q1,
        crossings as f64 / (m - 1.0),
        abs_area,
        energy,
        entropy,
        freq_ratio,
    ]
}

const SPECTRAL: [usize; 3] = [16, 17, 18];

fn random_trace(rng: &mut ChaCha8Rng, n: usize) -> SensorTrace {
    let mut axis = |offset: f64, amp: f64| -> Vec<f64> {
        (0..n)
            .map(|_| offset + amp * rng.gen_range(-1.0..1.0))
            .collect()
    };
    let x = axis(0.3, 1.0);
    let y = axis(-0.2, 0.5);
    let z = axis(9.81, 2.0);
    SensorTrace::uniform(200.0, 0.0, x, y, z, BTreeMap::new()).unwrap()
}

fn segment(start: usize, end: usize) -> SpeechSegment {
    SpeechSegment {
        start_idx: start,
        end_idx: end,
        peak_variance: 0.0,
        peak_ratio: 0.0,
        rms_profile: None,
    }
}

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = (0.0f64, 0.0f64);
    let mut bad = Vec::new();
    for case in 0..200 {
        let trace = random_trace(&mut rng, 400);
        let len = rng.gen_range(8..=300);
        let start = rng.gen_range(0..=400 - len);
        let seg = segment(start, start + len);
        let fv = extract_tf_features(&trace, &seg).unwrap();
        let dt = 1.0 / trace.sample_rate_hz();
        let mut expected = Vec::new();
        let slices: Vec<&[f64]> = [trace.x(), trace.y(), trace.z()]
            .iter()
            .map(|a| &a[start..start + len])
            .collect();
        for s in &slices {
            expected.extend(axis_oracle(s, dt));
        }
        expected.push(expected[15] + expected[19 + 15] + expected[38 + 15]);
        expected.push(
            (0..len)
                .map(|i| {
                    (slices[0][i].powi(2) + slices[1][i].powi(2) + slices[2][i].powi(2)).sqrt()
                })
                .sum::<f64>()
                / len as f64,
        );
        for (i, (&got, &want)) in fv.values().iter().zip(&expected).enumerate() {
            let spectral = i < 57 && SPECTRAL.contains(&(i % 19));
            let tol = if spectral { 1e-6 } else { 1e-9 };
            let err = (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
            if spectral {
                worst.1 = worst.1.max(err);
            } else {
                worst.0 = worst.0.max(err);
            }
            if !rel_close(got, want, tol) {
                bad.push(format!("case {case} {}: {got} vs {want}", fv.names()[i]));
            }
        }
    }

    // Scale covariance: each feature is homogeneous of a known degree.
    let degree = |i: usize| -> i32 {
        if i >= 57 {
            return 1;
        }
        match i % 19 {
            3 => 2,
            7 | 8 | 9 | 14 | 17 | 18 => 0,
            _ => 1,
        }
    };
    let base = random_trace(&mut rng, 300);
    let seg = segment(20, 280);
    let f0 = extract_tf_features(&base, &seg).unwrap();
    for _ in 0..20 {
        let c: f64 = 10f64.powf(rng.gen_range(-2.0..2.0));
        let scaled = base
            .map_channels(|v| v.iter().map(|x| x * c).collect())
            .unwrap();
        let fc = extract_tf_features(&scaled, &seg).unwrap();
        for i in 0..fc.len() {
            let want = f0.values()[i] * c.powi(degree(i));
            let spectral = i < 57 && SPECTRAL.contains(&(i % 19));
            let tol = if spectral || i % 19 == 16 { 1e-6 } else { 1e-9 };
            if !rel_close(fc.values()[i], want, tol) {
                bad.push(format!(
                    "scale {c:.3} {}: {} vs {want}",
                    fc.names()[i],
                    fc.values()[i]
                ));
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    bad.truncate(5);
    outcome(
        bad.is_empty() && secs < 10.0,
        format!(
            "200 segments + 20 scales, worst rel error {:.1e} direct / {:.1e} spectral, {secs:.2} s{}",
            worst.0,
            worst.1,
            if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }
        ),
    )
}

// 3. Metric exactness.

struct MetricCase {
    m: Vec<Vec<u64>>,
    per_class: Vec<(f64, f64, f64)>,
    weighted_f: f64,
    macro_f: f64,
    accuracy: f64,
}

fn q(a: u64, b: u64) -> f64 {
    a as f64 / b as f64
}

fn metric_cases() -> Vec<MetricCase> {
    let case = |m: Vec<Vec<u64>>, per_class, weighted_f, macro_f, accuracy| MetricCase {
        m,
        per_class,
        weighted_f,
        macro_f,
        accuracy,
    };
    let one = (1.0, 1.0, 1.0);
    let zero = (0.0, 0.0, 0.0);
    vec![
        case(
            vec![vec![3, 1], vec![2, 4]],
            vec![(q(3, 5), q(3, 4), q(2, 3)), (q(4, 5), q(2, 3), q(8, 11))],
            q(116, 165),
            q(23, 33),
            q(7, 10),
        ),
        case(
            vec![vec![5, 0, 0], vec![0, 7, 0], vec![0, 0, 2]],
            vec![one; 3],
            1.0,
            1.0,
            1.0,
        ),
        case(
            vec![vec![0, 0], vec![3, 5]],
            vec![zero, (1.0, q(5, 8), q(10, 13))],
            q(10, 13),
            q(5, 13),
            q(5, 8),
        ),
        case(vec![vec![0; 3]; 3], vec![zero; 3], 0.0, 0.0, 0.0),
        case(
            vec![vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 9]],
            vec![
                (q(1, 12), q(1, 6), q(1, 9)),
                (q(1, 3), q(1, 3), q(1, 3)),
                (q(1, 2), q(3, 8), q(3, 7)),
            ],
            q(67, 189),
            q(55, 189),
            q(1, 3),
        ),
        case(
            vec![vec![10, 0], vec![10, 0]],
            vec![(q(1, 2), 1.0, q(2, 3)), zero],
            q(1, 3),
            q(1, 3),
            q(1, 2),
        ),
        case(
            vec![
                vec![2, 1, 0, 0],
                vec![0, 3, 1, 0],
                vec![0, 0, 4, 1],
                vec![1, 0, 0, 5],
            ],
            vec![
                (q(2, 3), q(2, 3), q(2, 3)),
                (q(3, 4), q(3, 4), q(3, 4)),
                (q(4, 5), q(4, 5), q(4, 5)),
                (q(5, 6), q(5, 6), q(5, 6)),
            ],
            q(7, 9),
            q(61, 80),
            q(7, 9),
        ),
        case(vec![vec![0, 4], vec![6, 0]], vec![zero; 2], 0.0, 0.0, 0.0),
        case(vec![vec![9]], vec![one], 1.0, 1.0, 1.0),
        case(
            vec![vec![50, 3, 2], vec![4, 40, 6], vec![1, 9, 35]],
            vec![
                (q(10, 11), q(10, 11), q(10, 11)),
                (q(10, 13), q(4, 5), q(40, 51)),
                (q(35, 43), q(7, 9), q(35, 44)),
            ],
            q(11221, 13464),
            q(5585, 6732),
            q(5, 6),
        ),
    ]
}

fn criterion_3() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let mut bad = Vec::new();
    let cases = metric_cases();
    for (n, c) in cases.iter().enumerate() {
        let labels: Vec<String> = (0..c.m.len()).map(|i| format!("c{i}")).collect();
        let got = metrics_from_confusion(&c.m, &labels).unwrap();
        let mut ok = close(got.weighted_f, c.weighted_f)
            && close(got.macro_f, c.macro_f)
            && close(got.accuracy, c.accuracy);
        for (g, &(p, r, f)) in got.per_class.iter().zip(&c.per_class) {
            ok &= close(g.precision, p) && close(g.recall, r) && close(g.f, f);
        }
        if !ok {
            bad.push(n);
        }
    }
    outcome(
        bad.is_empty(),
        format!("{} matrices, mismatched: {bad:?}", cases.len()),
    )
}

// 4. Protocol invariants.

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut problems = Vec::new();
    for d in 0..50 {
        let n_classes = rng.gen_range(2..=8);
        let mut y: Vec<usize> = (0..n_classes)
            .flat_map(|c| std::iter::repeat_n(c, rng.gen_range(10..=60)))
            .collect();
        for i in (1..y.len()).rev() {
            y.swap(i, rng.gen_range(0..=i));
        }
        let seed = rng.gen();
        let folds = stratified_folds(&y, n_classes, 10, seed).unwrap();
        // Every row lands in exactly one fold by construction of the
        // assignment vector; check coverage of fold ids and class balance.
        if folds.len() != y.len() || folds.iter().any(|&f| f >= 10) {
            problems.push(format!("dataset {d}: bad fold ids"));
        }
        let mut seen = vec![false; y.len()];
        for k in 0..10 {
            for i in (0..y.len()).filter(|&i| folds[i] == k) {
                if std::mem::replace(&mut seen[i], true) {
                    problems.push(format!("dataset {d}: row {i} in two folds"));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            problems.push(format!("dataset {d}: uncovered rows"));
        }
        for c in 0..n_classes {
            let counts: Vec<usize> = (0..10)
                .map(|k| (0..y.len()).filter(|&i| y[i] == c && folds[i] == k).count())
                .collect();
            if counts.iter().max().unwrap() - counts.iter().min().unwrap() > 1 {
                problems.push(format!("dataset {d}: class {c} fold counts {counts:?}"));
            }
        }
        let (train, test) = stratified_split(&y, n_classes, 0.66, seed).unwrap();
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort();
        if all != (0..y.len()).collect::<Vec<_>>() {
            problems.push(format!("dataset {d}: split is not a partition"));
        }
        for c in 0..n_classes {
            let n_c = y.iter().filter(|&&v| v == c).count() as f64;
            let tr = train.iter().filter(|&&i| y[i] == c).count() as f64;
            if (tr - 0.66 * n_c).abs() > 1.0 {
                problems.push(format!("dataset {d}: class {c} has {tr} of {n_c} in train"));
            }
        }
    }
    problems.truncate(5);
    outcome(
        problems.is_empty(),
        format!(
            "50 datasets{}",
            if problems.is_empty() {
                String::new()
            } else {
                format!("; {}", problems.join("; "))
            }
        ),
    )
}

// 5-8, 10-12 share the demo corpus.

struct Demo {
    manifest: std::path::PathBuf,
    root: std::path::PathBuf,
    corpus_secs: f64,
}

fn demo_config(demo: &Demo, task: Task, out: &str) -> ExperimentConfig {
    ExperimentConfig {
        manifest: Some(demo.manifest.clone()),
        out_dir: demo.root.join(out),
        task,
        ..ExperimentConfig::default()
    }
}

fn floor_criterion(
    demo: &Demo,
    task: Task,
    floor: f64,
    chance: f64,
    limit: f64,
    out: &str,
) -> (Outcome, f64) {
    let t0 = Instant::now();
    let run = run_experiment(&demo_config(demo, task, out)).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let f = run.report.weighted_f;
    (
        outcome(
            f >= floor && secs + demo.corpus_secs < limit,
            format!(
                "weighted F {f:.4} (floor {floor}, chance {chance:.2}) on {} rows, {secs:.1} s (+{:.1} s corpus)",
                run.report.n_rows, demo.corpus_secs
            ),
        ),
        f,
    )
}

fn criterion_8(demo: &Demo) -> Outcome {
    let cmp = compare_feature_sets(&demo_config(demo, Task::Word, "compare")).unwrap();
    let (tf, mfcc) = (&cmp.tf.report, &cmp.mfcc.report);
    let paired = tf.seed == mfcc.seed && tf.fold_hash == mfcc.fold_hash && tf.n_rows == mfcc.n_rows;
    outcome(
        tf.weighted_f >= mfcc.weighted_f && paired,
        format!(
            "word task F_tf {:.4} vs F_mfcc {:.4}, fold hash {} on both: {paired}",
            tf.weighted_f, mfcc.weighted_f, tf.fold_hash
        ),
    )
}

// 9. Word isolation.

fn matched_words(truth: &[(usize, usize)], found: &[SpeechSegment]) -> usize {
    let mut used = vec![false; found.len()];
    let mut hits = 0;
    for &(a, b) in truth {
        for (j, s) in found.iter().enumerate() {
            let inter = b.min(s.end_idx).saturating_sub(a.max(s.start_idx)) as f64;
            let union = (b.max(s.end_idx) - a.min(s.start_idx)) as f64;
            if !used[j] && inter / union >= 0.5 {
                used[j] = true;
                hits += 1;
                break;
            }
        }
    }
    hits
}

fn criterion_9() -> Outcome {
    let model = CorpusConfig::default().model;
    let cfg = IsolationConfig::default();
    let sp = speakers();
    let (mut hits, mut total) = (0, 0);
    for i in 0..20u64 {
        let s = synthesize_sentence(
            &sp[i as usize % sp.len()],
            10,
            0.15,
            0.4,
            5.0,
            &model,
            8000.0,
            900 + i,
        )
        .unwrap();
        let filtered = highpass_motion_filter(&s.trace, 2.0).unwrap();
        let found = isolate_words(&filtered, &cfg).unwrap();
        hits += matched_words(&s.words, &found);
        total += s.words.len();
    }
    let mut silent_segments = 0;
    for (i, noise) in [0.0, 0.01, 0.02, 0.05].into_iter().enumerate() {
        let clip = AudioClip::new(8000.0, vec![0.0; 8000 * 10], None).unwrap();
        let m = ResponseModel {
            noise_sigma: noise,
            seed: i as u64,
            ..ResponseModel::default()
        };
        let trace = synthesize_trace(&clip, &m, 2.0, 2.0).unwrap();
        let filtered = highpass_motion_filter(&trace, 2.0).unwrap();
        silent_segments += isolate_words(&filtered, &cfg).unwrap().len();
    }
    let rate = hits as f64 / total as f64;
    outcome(
        rate >= 0.9 && silent_segments == 0,
        format!("{hits}/{total} words recovered ({:.1}%), {silent_segments} segments on 4 silent traces", 100.0 * rate),
    )
}

fn criterion_10(demo: &Demo) -> Outcome {
    let run = run_experiment(&demo_config(demo, Task::Word, "keywords")).unwrap();
    let spec = ClassifierSpec::Forest(ForestConfig::default());
    let r = keyword_search(&run.dataset, &spec, &KeywordConfig::default()).unwrap();
    outcome(
        r.keyword_mean_confidence > r.marginal_mean_confidence && r.keyword_recall >= 0.6,
        format!(
            "keywords {:?}; mean confidence {:.3} vs marginal {:.3}; threshold {:.3}; recall {:.3}",
            r.keywords,
            r.keyword_mean_confidence,
            r.marginal_mean_confidence,
            r.threshold,
            r.keyword_recall
        ),
    )
}

fn criterion_11(f_full: f64) -> Outcome {
    let mut cfg = CorpusConfig::default();
    cfg.model.volume_gain = 0.8;
    let utts = generate_corpus(&cfg).unwrap();
    let items: Vec<_> = utts
        .iter()
        .map(|u| (u.manifest_row("memory".into()), u.trace.clone()))
        .collect();
    let pipeline = PipelineConfig {
        label_column: LabelColumn::Speaker,
        ..PipelineConfig::default()
    };
    let ds = build_dataset_from_traces(&items, &pipeline)
        .unwrap()
        .dataset;
    let spec = ClassifierSpec::Forest(ForestConfig::default());
    let f = evaluate_cv(&ds, &spec, 10, 1).unwrap().weighted_f;
    let chance = 0.1;
    let lo = chance + 0.2;
    outcome(
        f >= lo && f <= f_full && f <= f_full + 0.02,
        format!(
            "speaker F at volume 0.8 {f:.4} vs {f_full:.4} at 1.0 (allowed [{lo:.2}, {f_full:.4}])"
        ),
    )
}

fn same_bytes(a: &Path, b: &Path) -> bool {
    std::fs::read(a).unwrap() == std::fs::read(b).unwrap()
}

fn criterion_12(demo: &Demo) -> Outcome {
    let a = run_experiment(&demo_config(demo, Task::Gender, "determinism_a")).unwrap();
    let b = run_experiment(&demo_config(demo, Task::Gender, "determinism_b")).unwrap();
    let files = ["dataset.csv", "model.json", "report.json"];
    let diff: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| !same_bytes(&a.out_dir.join(f), &b.out_dir.join(f)))
        .collect();
    let corpus_same = {
        let small = CorpusConfig {
            repetitions: 1,
            ..CorpusConfig::default()
        };
        let (x, y) = (
            generate_corpus(&small).unwrap(),
            generate_corpus(&small).unwrap(),
        );
        x.iter()
            .zip(&y)
            .all(|(u, v)| u.trace.same_samples(&v.trace))
    };
    outcome(
        diff.is_empty() && corpus_same,
        format!("two seeded runs: differing files {diff:?}, regenerated corpus identical: {corpus_same}"),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        println!(
            "[{}] criterion {n:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o));
    };

    report(1, "aliasing exactness", criterion_1());
    report(2, "feature oracle equivalence", criterion_2());
    report(3, "metric exactness", criterion_3());
    report(4, "protocol invariants", criterion_4());

    let tmp = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let corpus = generate_corpus(&CorpusConfig::default()).unwrap();
    let manifest = write_corpus(&corpus, tmp.path().join("corpus")).unwrap();
    drop(corpus);
    let demo = Demo {
        manifest,
        root: tmp.path().to_path_buf(),
        corpus_secs: t0.elapsed().as_secs_f64(),
    };

    let (o, _) = floor_criterion(&demo, Task::Gender, 0.90, 0.50, 60.0, "gender");
    report(5, "gender task floor", o);
    let (o, f_speaker) = floor_criterion(&demo, Task::Speaker, 0.80, 0.10, 60.0, "speaker");
    report(6, "speaker task floor", o);
    let (o, _) = floor_criterion(&demo, Task::Word, 0.70, 1.0 / 11.0, 90.0, "word");
    report(7, "word task floor", o);
    report(8, "feature-set ordering", criterion_8(&demo));
    report(9, "word isolation", criterion_9());
    report(10, "keyword separation", criterion_10(&demo));
    report(11, "volume monotonicity", criterion_11(f_speaker));
    report(12, "end-to-end determinism", criterion_12(&demo));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
