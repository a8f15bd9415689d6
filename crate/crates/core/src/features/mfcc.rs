//! Mel-frequency cepstral features of the z axis, aggregated over a segment.
//!
//! Frames are mean-removed before windowing so the gravity offset does not
//! dominate the lowest filter.

use serde::{Deserialize, Serialize};

use crate::dsp::{self, FrameFft};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::segment::SpeechSegment;
use crate::stats;
use crate::trace::SensorTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub frame_samples: usize,
    pub hop_samples: usize,
    pub n_filters: usize,
    pub n_coeffs: usize,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            frame_samples: 64,
            hop_samples: 32,
            n_filters: 20,
            n_coeffs: 13,
            log_floor: 1e-10,
        }
    }
}

pub fn mfcc_feature_names(cfg: &MfccConfig) -> Vec<String> {
    (0..cfg.n_coeffs)
        .map(|i| format!("mfcc_mean_{i}"))
        .chain((0..cfg.n_coeffs).map(|i| format!("mfcc_std_{i}")))
        .collect()
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters evenly spaced on the mel scale over `0..rate/2`,
/// evaluated at the centre frequency of each FFT bin.
fn mel_filterbank(n_filters: usize, frame: usize, rate: f64) -> Vec<Vec<f64>> {
    let n_bins = frame / 2 + 1;
    let top = hz_to_mel(rate / 2.0);
    let edges: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64))
        .collect();
    (0..n_filters)
        .map(|j| {
            let (lo, mid, hi) = (edges[j], edges[j + 1], edges[j + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * rate / frame as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II, first `keep` coefficients.
fn dct2(x: &[f64], keep: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..keep)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(i, v)| {
                        v * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n).cos()
                    })
                    .sum::<f64>()
        })
        .collect()
}

/// Per-frame cepstra of `signal`, one row per frame.
fn cepstra(signal: &[f64], rate: f64, cfg: &MfccConfig) -> Vec<Vec<f64>> {
    let frame = cfg.frame_samples;
    let window = dsp::hamming(frame);
    let bank = mel_filterbank(cfg.n_filters, frame, rate);
    let mut fft = FrameFft::new(frame);
    let mut buf = vec![0.0; frame];
    let mut mags = Vec::with_capacity(frame / 2 + 1);
    let mut out = Vec::new();
    let mut start = 0;
    while start + frame <= signal.len() {
        let chunk = &signal[start..start + frame];
        let mean = stats::mean(chunk);
        for ((b, &v), &w) in buf.iter_mut().zip(chunk).zip(&window) {
            *b = (v - mean) * w;
        }
        fft.magnitudes(&buf, &mut mags);
        let log_energies: Vec<f64> = bank
            .iter()
            .map(|filt| {
                let e: f64 = filt.iter().zip(&mags).map(|(w, m)| w * m).sum();
                e.max(cfg.log_floor).ln()
            })
            .collect();
        out.push(dct2(&log_energies, cfg.n_coeffs));
        start += cfg.hop_samples;
    }
    out
}

/// Mean and population standard deviation of each cepstral coefficient over
/// the frames of the segment's z axis.
pub fn extract_mfcc_features(
    trace: &SensorTrace,
    seg: &SpeechSegment,
    cfg: &MfccConfig,
) -> Result<FeatureVector> {
    seg.check_bounds(trace.len())?;
    if cfg.frame_samples < 2 || cfg.hop_samples == 0 || cfg.n_filters == 0 {
        return Err(Error::InvalidArgument(format!("bad MFCC config {cfg:?}")));
    }
    if cfg.n_coeffs == 0 || cfg.n_coeffs > cfg.n_filters {
        return Err(Error::InvalidArgument(format!(
            "cannot keep {} coefficients from {} filters",
            cfg.n_coeffs, cfg.n_filters
        )));
    }
    if seg.len() < cfg.frame_samples {
        return Err(Error::InvalidArgument(format!(
            "segment of {} samples is shorter than one {}-sample frame",
            seg.len(),
            cfg.frame_samples
        )));
    }
    let frames = cepstra(
        &trace.z()[seg.start_idx..seg.end_idx],
        trace.sample_rate_hz(),
        cfg,
    );
    let mut values = vec![0.0; 2 * cfg.n_coeffs];
    let mut column = Vec::with_capacity(frames.len());
    for c in 0..cfg.n_coeffs {
        column.clear();
        column.extend(frames.iter().map(|f| f[c]));
        values[c] = stats::mean(&column);
        values[cfg.n_coeffs + c] = stats::population_variance(&column).sqrt();
    }
    FeatureVector::new(mfcc_feature_names(cfg), values)
}
