//! Synthetic accelerometer traces from speech audio.
//!
//! A loudspeaker drives the phone body; the accelerometer responds to a band
//! of audio frequencies and samples at a rate far below the audio Nyquist
//! limit without any anti-alias filtering, so speech energy folds into the
//! sensor band at `|f - N f_s|`. The model here reproduces that chain with a
//! flat pass band and sample-and-hold decimation.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{AudioClip, SensorTrace};

/// Accelerometer acoustic response used for synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResponseModel {
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub sensor_rate_hz: f64,
    /// Relative coupling of the x, y and z axes. z must be the largest.
    pub axis_gain: [f64; 3],
    pub noise_sigma: f64,
    pub volume_gain: f64,
    pub gravity_offset: f64,
    pub seed: u64,
}

impl Default for ResponseModel {
    fn default() -> Self {
        ResponseModel {
            band_lo_hz: 100.0,
            band_hi_hz: 3300.0,
            sensor_rate_hz: 200.0,
            axis_gain: [0.3, 0.3, 1.0],
            noise_sigma: 0.01,
            volume_gain: 1.0,
            gravity_offset: 9.81,
            seed: 1,
        }
    }
}

impl ResponseModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.band_lo_hz >= 0.0 && self.band_lo_hz < self.band_hi_hz) {
            return bad(format!(
                "band [{}, {}] Hz is empty or negative",
                self.band_lo_hz, self.band_hi_hz
            ));
        }
        if !(self.sensor_rate_hz.is_finite() && self.sensor_rate_hz > 0.0) {
            return bad(format!("sensor rate {} Hz", self.sensor_rate_hz));
        }
        if self.axis_gain.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return bad(format!(
                "axis gains {:?} must be non-negative",
                self.axis_gain
            ));
        }
        if self.axis_gain[2] < self.axis_gain[0] || self.axis_gain[2] < self.axis_gain[1] {
            return bad(format!("z gain must dominate, got {:?}", self.axis_gain));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise sigma {}", self.noise_sigma));
        }
        if !(self.volume_gain > 0.0 && self.volume_gain <= 1.0) {
            return bad(format!("volume gain {} outside (0, 1]", self.volume_gain));
        }
        if !self.gravity_offset.is_finite() {
            return bad("gravity offset must be finite".into());
        }
        Ok(())
    }

    fn record(&self, meta: &mut BTreeMap<String, String>) {
        meta.insert("synth.band_lo_hz".into(), self.band_lo_hz.to_string());
        meta.insert("synth.band_hi_hz".into(), self.band_hi_hz.to_string());
        meta.insert(
            "synth.sensor_rate_hz".into(),
            self.sensor_rate_hz.to_string(),
        );
        meta.insert(
            "synth.axis_gain".into(),
            format!(
                "{}:{}:{}",
                self.axis_gain[0], self.axis_gain[1], self.axis_gain[2]
            ),
        );
        meta.insert("synth.noise_sigma".into(), self.noise_sigma.to_string());
        meta.insert("synth.volume_gain".into(), self.volume_gain.to_string());
        meta.insert(
            "synth.gravity_offset".into(),
            self.gravity_offset.to_string(),
        );
        meta.insert("synth.seed".into(), self.seed.to_string());
    }
}

/// Frequency at which a tone `f` appears after sampling at `f_s` with no
/// anti-alias filter: `|f - N f_s|` with `N` chosen so the result lies in
/// `[0, f_s / 2]`.
pub fn alias_frequency(f: f64, f_s: f64) -> f64 {
    debug_assert!(f >= 0.0 && f_s > 0.0);
    let r = f.rem_euclid(f_s);
    r.min(f_s - r)
}

/// Zeroes every DFT bin outside `[lo, hi]` Hz.
fn band_mask(samples: &[f64], rate: f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = samples.len();
    let mut buf: Vec<Complex64> = samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        let f = bin as f64 * rate / n as f64;
        if f < lo || f > hi {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Sample-and-hold decimation: sensor sample `j` takes the most recent audio
/// sample at time `j / out_rate`.
fn sample_and_hold(samples: &[f64], in_rate: f64, out_rate: f64) -> Vec<f64> {
    let duration = samples.len() as f64 / in_rate;
    let m = ((duration * out_rate).floor() as usize).max(1);
    (0..m)
        .map(|j| {
            let idx = (j as f64 * in_rate / out_rate + 1e-9).floor() as usize;
            samples[idx.min(samples.len() - 1)]
        })
        .collect()
}

fn axis_noise(seed: u64, axis: usize, sigma: f64, len: usize) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; len];
    }
    let stream = seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(axis as u64 + 1));
    let mut rng = ChaCha8Rng::seed_from_u64(stream);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

/// The band-limited, decimated speech signal before axis coupling and noise.
pub fn sensor_signal(clip: &AudioClip, model: &ResponseModel) -> Result<Vec<f64>> {
    model.validate()?;
    let rate = clip.sample_rate_hz();
    if model.band_lo_hz >= rate / 2.0 {
        return Err(Error::InvalidArgument(format!(
            "band [{}, {}] Hz lies entirely above the audio Nyquist frequency {} Hz",
            model.band_lo_hz,
            model.band_hi_hz,
            rate / 2.0
        )));
    }
    let scaled: Vec<f64> = clip
        .samples()
        .iter()
        .map(|s| s * model.volume_gain)
        .collect();
    let banded = band_mask(&scaled, rate, model.band_lo_hz, model.band_hi_hz);
    Ok(sample_and_hold(&banded, rate, model.sensor_rate_hz))
}

/// Synthesizes the accelerometer trace a phone would record while playing
/// `clip`, with `lead_s` seconds of idle recording before playback and
/// `trail_s` after.
pub fn synthesize_trace(
    clip: &AudioClip,
    model: &ResponseModel,
    lead_s: f64,
    trail_s: f64,
) -> Result<SensorTrace> {
    if !(lead_s >= 0.0 && trail_s >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lead {lead_s} s / trail {trail_s} s must be non-negative"
        )));
    }
    let speech = sensor_signal(clip, model)?;
    let fs = model.sensor_rate_hz;
    let lead = (lead_s * fs).round() as usize;
    let trail = (trail_s * fs).round() as usize;
    let total = lead + speech.len() + trail;

    let mut channels: Vec<Vec<f64>> = (0..3)
        .map(|a| axis_noise(model.seed, a, model.noise_sigma, total))
        .collect();
    for (a, ch) in channels.iter_mut().enumerate() {
        let gain = model.axis_gain[a];
        for (v, s) in ch[lead..lead + speech.len()].iter_mut().zip(&speech) {
            *v += gain * s;
        }
    }
    for v in channels[2].iter_mut() {
        *v += model.gravity_offset;
    }

    let mut meta = BTreeMap::new();
    model.record(&mut meta);
    meta.insert("synth.lead_s".into(), lead_s.to_string());
    meta.insert("synth.trail_s".into(), trail_s.to_string());
    meta.insert("synth.speech_start_idx".into(), lead.to_string());
    meta.insert(
        "synth.speech_end_idx".into(),
        (lead + speech.len()).to_string(),
    );
    if let Some(label) = clip.label() {
        meta.insert("label".into(), label.to_string());
    }
    let z = channels.pop().unwrap();
    let y = channels.pop().unwrap();
    let x = channels.pop().unwrap();
    SensorTrace::uniform(fs, 0.0, x, y, z, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::population_variance;
    use std::f64::consts::PI;

    fn tone(freq: f64, rate: f64, secs: f64, amp: f64) -> AudioClip {
        let n = (rate * secs) as usize;
        AudioClip::new(
            rate,
            (0..n)
                .map(|i| amp * (2.0 * PI * freq * i as f64 / rate).sin())
                .collect(),
            None,
        )
        .unwrap()
    }

    fn quiet() -> ResponseModel {
        ResponseModel {
            noise_sigma: 0.0,
            ..ResponseModel::default()
        }
    }

    /// Peak DFT bin by direct evaluation, independent of the FFT path.
    fn peak_freq(signal: &[f64], rate: f64) -> (f64, f64) {
        let m = signal.len();
        let mut best = (0usize, -1.0f64);
        for k in 0..=m / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &v) in signal.iter().enumerate() {
                let ph = -2.0 * PI * (k * n) as f64 / m as f64;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            let mag = re.hypot(im);
            if mag > best.1 {
                best = (k, mag);
            }
        }
        (best.0 as f64 * rate / m as f64, rate / m as f64)
    }

    #[test]
    fn alias_examples() {
        assert_eq!(alias_frequency(440.0, 200.0), 40.0);
        assert_eq!(alias_frequency(90.0, 200.0), 90.0);
        assert_eq!(alias_frequency(3300.0, 250.0), 50.0);
    }

    #[test]
    fn alias_matches_brute_force_over_n() {
        for (f, fs) in [
            (3300.0, 250.0),
            (1234.5, 117.0),
            (99.0, 100.0),
            (0.0, 150.0),
        ] {
            let brute = (0..=(f / fs) as i64 + 1)
                .map(|n| (f - n as f64 * fs).abs())
                .filter(|fa| *fa <= fs / 2.0 + 1e-9)
                .fold(f64::INFINITY, f64::min);
            assert!((alias_frequency(f, fs) - brute).abs() < 1e-9, "{f} {fs}");
        }
    }

    #[test]
    fn tone_aliases_to_40hz() {
        let trace = synthesize_trace(&tone(440.0, 8000.0, 2.0, 0.5), &quiet(), 5.0, 2.0).unwrap();
        let z: Vec<f64> = trace.z()[1000..1400].iter().map(|v| v - 9.81).collect();
        let (peak, bin) = peak_freq(&z, 200.0);
        assert!((peak - 40.0).abs() <= bin, "{peak}");
    }

    #[test]
    fn tone_below_band_is_removed() {
        let amp = 0.5;
        let trace = synthesize_trace(&tone(50.0, 8000.0, 1.0, amp), &quiet(), 5.0, 2.0).unwrap();
        let dev: f64 = trace.z().iter().map(|v| (v - 9.81).powi(2)).sum::<f64>();
        let rms = (dev / trace.len() as f64).sqrt();
        assert!(rms < 1e-6 * amp, "{rms}");
    }

    #[test]
    fn volume_scales_variance_quadratically() {
        let clip = tone(700.0, 8000.0, 1.0, 0.6);
        let full = synthesize_trace(&clip, &quiet(), 5.0, 2.0).unwrap();
        let soft = synthesize_trace(
            &clip,
            &ResponseModel {
                volume_gain: 0.8,
                ..quiet()
            },
            5.0,
            2.0,
        )
        .unwrap();
        let v1 = population_variance(&full.z()[1000..1200]);
        let v2 = population_variance(&soft.z()[1000..1200]);
        assert!((v2 / v1 - 0.64).abs() < 0.64 * 0.05, "{}", v2 / v1);
    }

    #[test]
    fn z_dominates_and_layout_is_padded() {
        let clip = tone(900.0, 8000.0, 1.0, 0.6);
        let trace = synthesize_trace(&clip, &quiet(), 5.0, 2.0).unwrap();
        assert_eq!(trace.len(), 1000 + 200 + 400);
        assert_eq!(trace.meta()["synth.speech_start_idx"], "1000");
        let speech = 1000..1200;
        let vz = population_variance(&trace.z()[speech.clone()]);
        assert!(vz >= population_variance(&trace.x()[speech.clone()]));
        assert!(vz >= population_variance(&trace.y()[speech]));
        assert!(trace.z()[..1000].iter().all(|&v| v == 9.81));
    }

    #[test]
    fn deterministic_with_seed() {
        let clip = tone(900.0, 8000.0, 0.5, 0.6);
        let m = ResponseModel::default();
        let a = synthesize_trace(&clip, &m, 1.0, 1.0).unwrap();
        let b = synthesize_trace(&clip, &m, 1.0, 1.0).unwrap();
        assert!(a.same_samples(&b));
        let c = synthesize_trace(&clip, &ResponseModel { seed: 2, ..m }, 1.0, 1.0).unwrap();
        assert!(!a.same_samples(&c));
    }

    #[test]
    fn invalid_models_rejected() {
        let clip = tone(900.0, 8000.0, 0.5, 0.6);
        let bad = [
            ResponseModel {
                band_lo_hz: 500.0,
                band_hi_hz: 400.0,
                ..quiet()
            },
            ResponseModel {
                axis_gain: [1.0, 0.2, 0.5],
                ..quiet()
            },
            ResponseModel {
                volume_gain: 0.0,
                ..quiet()
            },
            ResponseModel {
                volume_gain: 1.5,
                ..quiet()
            },
            ResponseModel {
                band_lo_hz: 4500.0,
                band_hi_hz: 6000.0,
                ..quiet()
            },
        ];
        for m in bad {
            assert!(synthesize_trace(&clip, &m, 0.0, 0.0).is_err(), "{m:?}");
        }
    }
}
