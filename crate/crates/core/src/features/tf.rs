//! Canonical 59-entry time-frequency feature vector.
//!
//! Nineteen statistics per axis (x, y, z in that order) followed by the two
//! cross-axis features `total_abs_area` and `total_strength`.

use crate::dsp;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::segment::SpeechSegment;
use crate::stats;
use crate::trace::{Axis, SensorTrace};

/// Per-axis statistics, in canonical order.
pub const AXIS_STATS: [&str; 19] = [
    "min",
    "max",
    "median",
    "var",
    "std",
    "range",
    "abs_mean",
    "cv",
    "skewness",
    "kurtosis",
    "q1",
    "q2",
    "q3",
    "iqr",
    "mcr",
    "abs_area",
    "energy",
    "entropy",
    "freq_ratio",
];

pub const TF_FEATURE_COUNT: usize = 3 * AXIS_STATS.len() + 2;

const MIN_SEGMENT: usize = 4;

pub fn tf_feature_names() -> Vec<String> {
    let mut names: Vec<String> = Axis::ALL
        .iter()
        .flat_map(|a| AXIS_STATS.iter().map(move |s| format!("{}_{s}", a.name())))
        .collect();
    names.push("total_abs_area".into());
    names.push("total_strength".into());
    names
}

/// Second and higher moments below this fraction of the signal scale are
/// treated as zero.
const DEGENERATE_REL: f64 = 1e-10;

fn axis_stats(s: &[f64], dt: f64) -> [f64; 19] {
    let m = s.len();
    let sorted = stats::sorted_copy(s);
    let min = sorted[0];
    let max = sorted[m - 1];
    let mean = stats::mean(s);
    let m2 = stats::population_variance(s);
    let scale = min.abs().max(max.abs());
    let degenerate = m2 <= (DEGENERATE_REL * scale).powi(2);
    let var = if degenerate {
        0.0
    } else {
        stats::sample_variance(s)
    };
    let std = var.sqrt();
    let abs_mean = s.iter().map(|v| v.abs()).sum::<f64>() / m as f64;
    let cv = if mean.abs() < 1e-9 {
        0.0
    } else {
        100.0 * std / mean.abs()
    };

    let (skewness, kurtosis) = if degenerate {
        (0.0, 0.0)
    } else {
        let m3 = s.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / m as f64;
        let m4 = s.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / m as f64;
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    };

    let q1 = stats::quantile_sorted(&sorted, 0.25);
    let q2 = stats::quantile_sorted(&sorted, 0.5);
    let q3 = stats::quantile_sorted(&sorted, 0.75);

    let crossings = if degenerate {
        0
    } else {
        s.windows(2)
            .filter(|w| (w[0] - mean) * (w[1] - mean) < 0.0)
            .count()
    };
    let mcr = crossings as f64 / (m - 1) as f64;
    let abs_area = s.iter().map(|v| v.abs()).sum::<f64>() * dt;

    // A zero-variance segment has an exactly zero AC spectrum; the transform
    // would otherwise report rounding residue.
    let spectrum = if degenerate {
        vec![0.0; m / 2 + 1]
    } else {
        dsp::magnitude_spectrum(s)
    };
    let ac = &spectrum[1..=m / 2];
    let energy: f64 = ac.iter().sum();
    let power: f64 = ac.iter().map(|v| v * v).sum();
    let entropy = if power > 0.0 {
        ac.iter()
            .map(|v| v * v / power)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum()
    } else {
        0.0
    };
    let freq_ratio = if energy > 0.0 {
        ac.iter().copied().fold(0.0, f64::max) / energy
    } else {
        0.0
    };

    [
        min,
        max,
        q2,
        var,
        std,
        max - min,
        abs_mean,
        cv,
        skewness,
        kurtosis,
        q1,
        q2,
        q3,
        q3 - q1,
        mcr,
        abs_area,
        energy,
        entropy,
        freq_ratio,
    ]
}

/// Computes the canonical time-frequency features over one segment.
pub fn extract_tf_features(trace: &SensorTrace, seg: &SpeechSegment) -> Result<FeatureVector> {
    seg.check_bounds(trace.len())?;
    if seg.len() < MIN_SEGMENT {
        return Err(Error::InvalidArgument(format!(
            "segment of {} samples is too short for moment features (need {MIN_SEGMENT})",
            seg.len()
        )));
    }
    let dt = 1.0 / trace.sample_rate_hz();
    let range = seg.start_idx..seg.end_idx;
    let mut values = Vec::with_capacity(TF_FEATURE_COUNT);
    let mut total_abs_area = 0.0;
    for axis in Axis::ALL {
        let st = axis_stats(&trace.axis(axis)[range.clone()], dt);
        total_abs_area += st[15];
        values.extend_from_slice(&st);
    }
    let (x, y, z) = (
        &trace.x()[range.clone()],
        &trace.y()[range.clone()],
        &trace.z()[range],
    );
    let total_strength = x
        .iter()
        .zip(y)
        .zip(z)
        .map(|((a, b), c)| (a * a + b * b + c * c).sqrt())
        .sum::<f64>()
        / seg.len() as f64;
    values.push(total_abs_area);
    values.push(total_strength);
    FeatureVector::new(tf_feature_names(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn seg(n: usize) -> SpeechSegment {
        SpeechSegment {
            start_idx: 0,
            end_idx: n,
            peak_variance: 0.0,
            peak_ratio: 0.0,
            rms_profile: None,
        }
    }

    fn z_trace(z: Vec<f64>, rate: f64) -> SensorTrace {
        let n = z.len();
        SensorTrace::uniform(rate, 0.0, vec![0.0; n], vec![0.0; n], z, BTreeMap::new()).unwrap()
    }

    #[test]
    fn names_are_canonical() {
        let names = tf_feature_names();
        assert_eq!(names.len(), 59);
        assert_eq!(names[0], "x_min");
        assert_eq!(names[19 + 11], "y_q2");
        assert_eq!(names[38 + 18], "z_freq_ratio");
        assert_eq!(names[57], "total_abs_area");
        assert_eq!(names[58], "total_strength");
    }

    #[test]
    fn hand_computed_ramp() {
        let fv = extract_tf_features(&z_trace(vec![1.0, 2.0, 3.0, 4.0], 1.0), &seg(4)).unwrap();
        let g = |n: &str| fv.get(n).unwrap();
        assert_eq!(g("z_min"), 1.0);
        assert_eq!(g("z_max"), 4.0);
        assert_eq!(g("z_range"), 3.0);
        assert_eq!(g("z_median"), 2.5);
        assert_eq!(g("z_q2"), 2.5);
        assert!((g("z_var") - 5.0 / 3.0).abs() < 1e-15);
        assert!((g("z_mcr") - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(g("z_abs_area"), 10.0);
        assert_eq!(g("total_abs_area"), 10.0);
        assert_eq!(g("total_strength"), 2.5);
    }

    #[test]
    fn constant_segment_guards() {
        let fv = extract_tf_features(&z_trace(vec![9.81; 50], 200.0), &seg(50)).unwrap();
        for stat in [
            "var", "std", "skewness", "kurtosis", "mcr", "entropy", "energy",
        ] {
            assert_eq!(fv.get(&format!("z_{stat}")).unwrap(), 0.0, "{stat}");
        }
        // x is all zeros: mean below the CV guard
        assert_eq!(fv.get("x_cv").unwrap(), 0.0);
        assert!(fv.get("z_cv").unwrap().abs() < 1e-9);
    }

    #[test]
    fn single_bin_sinusoid() {
        let m = 64;
        let z: Vec<f64> = (0..m)
            .map(|i| (2.0 * PI * 5.0 * i as f64 / m as f64).sin())
            .collect();
        let fv = extract_tf_features(&z_trace(z, 200.0), &seg(m)).unwrap();
        assert!((fv.get("z_freq_ratio").unwrap() - 1.0).abs() < 1e-9);
        assert!(fv.get("z_entropy").unwrap().abs() < 1e-9);
    }

    #[test]
    fn short_segment_rejected() {
        let tr = z_trace(vec![1.0, 2.0, 3.0, 4.0, 5.0], 1.0);
        assert!(extract_tf_features(&tr, &seg(3)).is_err());
        let bad = SpeechSegment {
            end_idx: 9,
            ..seg(3)
        };
        assert!(extract_tf_features(&tr, &bad).is_err());
    }
}
