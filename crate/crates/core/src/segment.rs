//! Motion filtering, speech-region detection and word isolation.

use serde::{Deserialize, Serialize};

use crate::dsp::{self, FrameFft};
use crate::error::{Error, Result};
use crate::stats;
use crate::trace::SensorTrace;

/// Half-open sample interval `[start_idx, end_idx)` of a trace holding speech.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeechSegment {
    pub start_idx: usize,
    pub end_idx: usize,
    /// Detection statistic of the winning window (z variance, or peak
    /// smoothed spectral RMS for isolated words).
    pub peak_variance: f64,
    /// Peak statistic over the median statistic of the whole trace.
    pub peak_ratio: f64,
    /// Smoothed per-frame spectral RMS inside the segment (word isolation only).
    pub rms_profile: Option<Vec<f64>>,
}

impl SpeechSegment {
    pub fn len(&self) -> usize {
        self.end_idx - self.start_idx
    }

    pub fn is_empty(&self) -> bool {
        self.end_idx <= self.start_idx
    }

    /// Whether the detection statistic stands out from the background.
    pub fn is_speech(&self, min_peak_ratio: f64) -> bool {
        self.peak_ratio >= min_peak_ratio
    }

    pub fn start_s(&self, trace: &SensorTrace) -> f64 {
        trace.t()[self.start_idx]
    }

    /// Time just past the last sample of the segment.
    pub fn end_s(&self, trace: &SensorTrace) -> f64 {
        trace.t()[self.end_idx - 1] + 1.0 / trace.sample_rate_hz()
    }

    pub fn check_bounds(&self, n: usize) -> Result<()> {
        if self.start_idx >= self.end_idx || self.end_idx > n {
            return Err(Error::InvalidArgument(format!(
                "segment [{}, {}) invalid for trace of {n} samples",
                self.start_idx, self.end_idx
            )));
        }
        Ok(())
    }
}

/// Removes gravity and slow hand or body motion from every axis with a
/// zero-phase first-order high-pass.
pub fn highpass_motion_filter(trace: &SensorTrace, cutoff_hz: f64) -> Result<SensorTrace> {
    let rate = trace.sample_rate_hz();
    if !(cutoff_hz > 0.0 && cutoff_hz < rate / 2.0) {
        return Err(Error::InvalidArgument(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
            rate / 2.0
        )));
    }
    trace.map_channels(|ch| dsp::highpass_zero_phase(ch, cutoff_hz, rate))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionConfig {
    pub window_samples: usize,
    pub stride_samples: usize,
    /// Adjacent stride blocks are absorbed while their variance is at least
    /// this fraction of the peak.
    pub expand_frac: f64,
    /// Peak over median window variance below which a trace counts as silent.
    pub min_peak_ratio: f64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        RegionConfig {
            window_samples: 100,
            stride_samples: 10,
            expand_frac: 0.3,
            min_peak_ratio: 3.0,
        }
    }
}

/// Finds the z-axis window of maximal variance and grows it outward, one
/// stride at a time, while the adjacent stride block keeps a variance (about
/// the peak window's mean) of at least `expand_frac` times the peak.
///
/// A silent trace still yields its loudest window; callers use
/// [`SpeechSegment::is_speech`] to decide whether anything was found.
pub fn detect_speech_region(trace: &SensorTrace, cfg: &RegionConfig) -> Result<SpeechSegment> {
    let z = trace.z();
    let n = z.len();
    let w = cfg.window_samples;
    if w == 0 || cfg.stride_samples == 0 {
        return Err(Error::InvalidArgument(
            "window and stride must be positive".into(),
        ));
    }
    if n < w {
        return Err(Error::InvalidArgument(format!(
            "trace of {n} samples is shorter than one {w}-sample window"
        )));
    }

    let mut starts: Vec<usize> = (0..=n - w).step_by(cfg.stride_samples).collect();
    if *starts.last().unwrap() != n - w {
        starts.push(n - w);
    }
    let variances: Vec<f64> = starts
        .iter()
        .map(|&s| stats::population_variance(&z[s..s + w]))
        .collect();

    let mut best = 0;
    for (i, &v) in variances.iter().enumerate() {
        if v > variances[best] {
            best = i;
        }
    }
    let peak = variances[best];
    let floor = cfg.expand_frac * peak;
    let centre = stats::mean(&z[starts[best]..starts[best] + w]);
    let block_energy = |lo: usize, hi: usize| {
        z[lo..hi].iter().map(|v| (v - centre).powi(2)).sum::<f64>() / (hi - lo) as f64
    };
    // Grow one stride at a time while the block just outside the boundary is
    // still loud relative to the peak window.
    let step = cfg.stride_samples;
    let mut start = starts[best];
    while start >= step && block_energy(start - step, start) >= floor {
        start -= step;
    }
    let mut end = starts[best] + w;
    while end + step <= n && block_energy(end, end + step) >= floor {
        end += step;
    }

    let median = stats::median(&variances);
    let peak_ratio = if median > 0.0 {
        peak / median
    } else if peak > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };

    Ok(SpeechSegment {
        start_idx: start,
        end_idx: end,
        peak_variance: peak,
        peak_ratio,
        rms_profile: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IsolationConfig {
    pub frame_samples: usize,
    pub hop_samples: usize,
    /// Width of the centred moving average applied to the RMS track.
    pub smooth_frames: usize,
    /// Frames above `threshold_ratio * median(RMS)` count as speech.
    pub threshold_ratio: f64,
    /// Runs closer than this are merged into one word.
    pub gap_min_s: f64,
    /// Runs shorter than this are dropped.
    pub dur_min_s: f64,
}

impl Default for IsolationConfig {
    fn default() -> Self {
        IsolationConfig {
            frame_samples: 16,
            hop_samples: 4,
            smooth_frames: 3,
            threshold_ratio: 2.0,
            gap_min_s: 0.12,
            dur_min_s: 0.1,
        }
    }
}

/// Smoothed spectral RMS track of the z axis, one value per frame.
pub fn spectral_rms_track(z: &[f64], cfg: &IsolationConfig) -> Vec<f64> {
    let frame = cfg.frame_samples;
    if frame == 0 || cfg.hop_samples == 0 || z.len() < frame {
        return Vec::new();
    }
    let window = dsp::hann(frame);
    let mut fft = FrameFft::new(frame);
    let mut buf = vec![0.0; frame];
    let mut mags = Vec::with_capacity(frame / 2 + 1);
    let mut raw = Vec::new();
    let mut start = 0;
    while start + frame <= z.len() {
        for ((b, &v), &h) in buf.iter_mut().zip(&z[start..start + frame]).zip(&window) {
            *b = v * h;
        }
        fft.magnitudes(&buf, &mut mags);
        let ms = mags.iter().map(|m| m * m).sum::<f64>() / mags.len() as f64;
        raw.push(ms.sqrt());
        start += cfg.hop_samples;
    }
    moving_average(&raw, cfg.smooth_frames.max(1))
}

fn moving_average(xs: &[f64], width: usize) -> Vec<f64> {
    let half_lo = (width - 1) / 2;
    let half_hi = width / 2;
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(half_lo);
            let hi = (i + half_hi + 1).min(xs.len());
            stats::mean(&xs[lo..hi])
        })
        .collect()
}

/// Splits a high-pass filtered trace into word segments by thresholding the
/// smoothed spectral RMS of the z axis.
///
/// Returns segments in temporal order, pairwise disjoint. A trace with no
/// frame above threshold yields an empty vector.
pub fn isolate_words(trace: &SensorTrace, cfg: &IsolationConfig) -> Result<Vec<SpeechSegment>> {
    if cfg.frame_samples == 0 || cfg.hop_samples == 0 {
        return Err(Error::InvalidArgument(
            "frame and hop must be positive".into(),
        ));
    }
    let z = trace.z();
    let n = z.len();
    let rms = spectral_rms_track(z, cfg);
    if rms.is_empty() {
        return Ok(Vec::new());
    }
    let median = stats::median(&rms);
    let threshold = cfg.threshold_ratio * median;
    let rate = trace.sample_rate_hz();
    let hop = cfg.hop_samples;
    let frame = cfg.frame_samples;

    // Frame i is centred at i * hop + frame / 2 and owns one hop around it.
    let frame_bounds = |first: usize, last: usize| {
        let start = (first * hop + frame / 2).saturating_sub(hop / 2);
        let end = (last * hop + frame / 2 + (hop - hop / 2)).min(n);
        (start, end)
    };

    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < rms.len() {
        if rms[i] > threshold {
            let first = i;
            while i + 1 < rms.len() && rms[i + 1] > threshold {
                i += 1;
            }
            runs.push((first, i));
        }
        i += 1;
    }

    let mut merged: Vec<(usize, usize)> = Vec::new();
    for run in runs {
        if let Some(prev) = merged.last_mut() {
            let (_, prev_end) = frame_bounds(prev.0, prev.1);
            let (next_start, _) = frame_bounds(run.0, run.1);
            let gap_s = next_start.saturating_sub(prev_end) as f64 / rate;
            if gap_s < cfg.gap_min_s {
                prev.1 = run.1;
                continue;
            }
        }
        merged.push(run);
    }

    let min_len = (cfg.dur_min_s * rate).ceil() as usize;
    let segments = merged
        .into_iter()
        .filter_map(|(first, last)| {
            let (start, end) = frame_bounds(first, last);
            if end <= start || end - start < min_len.max(1) {
                return None;
            }
            let profile = rms[first..=last].to_vec();
            let peak = profile.iter().copied().fold(f64::MIN, f64::max);
            Some(SpeechSegment {
                start_idx: start,
                end_idx: end,
                peak_variance: peak,
                peak_ratio: if median > 0.0 {
                    peak / median
                } else {
                    f64::INFINITY
                },
                rms_profile: Some(profile),
            })
        })
        .collect();
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn trace_from_z(z: Vec<f64>, rate: f64) -> SensorTrace {
        let n = z.len();
        SensorTrace::uniform(rate, 0.0, vec![0.0; n], vec![0.0; n], z, BTreeMap::new()).unwrap()
    }

    fn noise(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sigma).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn burst_trace(n: usize, start: usize, len: usize, seed: u64) -> SensorTrace {
        let mut z = noise(n, 0.01, seed);
        let loud = noise(len, 0.1, seed + 1000);
        for (v, b) in z[start..start + len].iter_mut().zip(loud) {
            *v = b;
        }
        trace_from_z(z, 200.0)
    }

    fn iou(a: (usize, usize), b: (usize, usize)) -> f64 {
        let inter = a.1.min(b.1).saturating_sub(a.0.max(b.0)) as f64;
        let union = (a.1.max(b.1) - a.0.min(b.0)) as f64;
        inter / union
    }

    /// Amplitude of a sinusoid at `freq` by least-squares projection.
    fn fitted_amplitude(y: &[f64], freq: f64, rate: f64) -> f64 {
        let (mut s, mut c) = (0.0, 0.0);
        for (i, v) in y.iter().enumerate() {
            let ph = 2.0 * PI * freq * i as f64 / rate;
            s += v * ph.sin();
            c += v * ph.cos();
        }
        2.0 * s.hypot(c) / y.len() as f64
    }

    fn sine_trace(freq: f64, n: usize) -> SensorTrace {
        trace_from_z(
            (0..n)
                .map(|i| (2.0 * PI * freq * i as f64 / 200.0).sin())
                .collect(),
            200.0,
        )
    }

    #[test]
    fn highpass_removes_gravity() {
        let tr = trace_from_z(vec![9.81; 800], 200.0);
        let out = highpass_motion_filter(&tr, 2.0).unwrap();
        assert!(out.z().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn highpass_attenuation_matches_response() {
        // 0.5 Hz: analytic gain of the forward-backward filter is ~0.06
        let g_low = dsp::highpass_zero_phase_gain(2.0, 200.0, 0.5);
        assert!(g_low < 0.1, "{g_low}");
        let out = highpass_motion_filter(&sine_trace(0.5, 8000), 2.0).unwrap();
        let a = fitted_amplitude(&out.z()[2000..6000], 0.5, 200.0);
        assert!(a < 0.1, "{a}");
        assert!((a - g_low).abs() < 0.01, "{a} vs {g_low}");

        let g_high = dsp::highpass_zero_phase_gain(2.0, 200.0, 30.0);
        assert!(g_high > 0.95, "{g_high}");
        let out = highpass_motion_filter(&sine_trace(30.0, 2000), 2.0).unwrap();
        let a = fitted_amplitude(&out.z()[400..1600], 30.0, 200.0);
        assert!(a > 0.95, "{a}");
        assert!((a - g_high).abs() < 0.01);
    }

    #[test]
    fn highpass_is_linear() {
        let tr = sine_trace(7.0, 600);
        let scaled = tr
            .map_channels(|c| c.iter().map(|v| v * 3.7).collect())
            .unwrap();
        let a = highpass_motion_filter(&tr, 2.0).unwrap();
        let b = highpass_motion_filter(&scaled, 2.0).unwrap();
        let scale = b.z().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (p, q) in a.z().iter().zip(b.z()) {
            assert!((p * 3.7 - q).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn highpass_rejects_cutoff_above_nyquist() {
        assert!(highpass_motion_filter(&sine_trace(1.0, 100), 100.0).is_err());
    }

    #[test]
    fn detects_embedded_burst() {
        let tr = burst_trace(1200, 500, 100, 7);
        let seg = detect_speech_region(&tr, &RegionConfig::default()).unwrap();
        assert!(
            iou((seg.start_idx, seg.end_idx), (500, 600)) >= 0.7,
            "{seg:?}"
        );
        assert!(seg.is_speech(3.0));
    }

    #[test]
    fn detection_is_translation_covariant() {
        let cfg = RegionConfig::default();
        let base = detect_speech_region(&burst_trace(1200, 300, 100, 3), &cfg).unwrap();
        for k in [7usize, 40, 123, 411] {
            let moved = detect_speech_region(&burst_trace(1200, 300 + k, 100, 3), &cfg).unwrap();
            let d = moved.start_idx as i64 - base.start_idx as i64 - k as i64;
            assert!(
                d.unsigned_abs() as usize <= cfg.stride_samples,
                "k={k} d={d}"
            );
        }
    }

    #[test]
    fn silent_trace_is_flagged_not_error() {
        let tr = trace_from_z(noise(1000, 0.01, 11), 200.0);
        let seg = detect_speech_region(&tr, &RegionConfig::default()).unwrap();
        assert!(!seg.is_speech(3.0), "{}", seg.peak_ratio);
        assert!((seg.peak_variance / 1e-4) < 2.0);
        let flat = trace_from_z(vec![1.0; 300], 200.0);
        assert!(!detect_speech_region(&flat, &RegionConfig::default())
            .unwrap()
            .is_speech(3.0));
    }

    #[test]
    fn window_longer_than_trace_errors() {
        let tr = trace_from_z(noise(50, 0.01, 1), 200.0);
        assert!(detect_speech_region(&tr, &RegionConfig::default()).is_err());
    }

    fn sentence(words: &[(usize, usize)], n: usize, seed: u64) -> SensorTrace {
        let mut z = noise(n, 0.01, seed);
        for (w, &(start, len)) in words.iter().enumerate() {
            let f = 23.0 + 9.0 * w as f64;
            for i in 0..len {
                let env = (PI * i as f64 / len as f64).sin().sqrt();
                z[start + i] += 0.2 * env * (2.0 * PI * f * i as f64 / 200.0).sin();
            }
        }
        trace_from_z(z, 200.0)
    }

    #[test]
    fn isolates_four_words() {
        let words = [(400, 60), (500, 50), (590, 70), (700, 40)];
        let tr = sentence(&words, 1600, 5);
        let segs = isolate_words(&tr, &IsolationConfig::default()).unwrap();
        assert_eq!(segs.len(), 4, "{segs:?}");
        for (seg, &(s, l)) in segs.iter().zip(&words) {
            assert!(seg.start_idx < s + l && s < seg.end_idx);
        }
    }

    #[test]
    fn silence_isolates_nothing() {
        let tr = trace_from_z(noise(2000, 0.01, 9), 200.0);
        assert!(isolate_words(&tr, &IsolationConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn isolated_segments_sorted_disjoint_and_repeatable() {
        let words = [(100, 40), (160, 30), (300, 80), (420, 25), (470, 60)];
        let tr = sentence(&words, 800, 21);
        let cfg = IsolationConfig::default();
        let a = isolate_words(&tr, &cfg).unwrap();
        assert_eq!(a, isolate_words(&tr, &cfg).unwrap());
        for pair in a.windows(2) {
            assert!(pair[0].end_idx <= pair[1].start_idx);
        }
        assert!(a
            .iter()
            .all(|s| s.start_idx < s.end_idx && s.end_idx <= tr.len()));
    }
}
