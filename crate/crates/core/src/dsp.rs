//! FFT and filtering primitives.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Complex DFT of a real signal, all `m` bins.
pub fn real_dft(signal: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if buf.is_empty() {
        return buf;
    }
    FftPlanner::new()
        .plan_fft_forward(buf.len())
        .process(&mut buf);
    buf
}

/// Magnitudes `|F_k|` for `k = 0..=m/2`.
pub fn magnitude_spectrum(signal: &[f64]) -> Vec<f64> {
    let m = signal.len();
    real_dft(signal)
        .into_iter()
        .take(m / 2 + 1)
        .map(|c| c.norm())
        .collect()
}

/// Reusable forward transform of a fixed length, for framed analysis.
pub struct FrameFft {
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    buf: Vec<Complex64>,
}

impl FrameFft {
    pub fn new(len: usize) -> Self {
        FrameFft {
            fft: FftPlanner::new().plan_fft_forward(len),
            buf: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// Writes `|F_k|`, `k = 0..=len/2`, of `frame` into `out`.
    pub fn magnitudes(&mut self, frame: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(frame.len(), self.buf.len());
        for (b, &v) in self.buf.iter_mut().zip(frame) {
            *b = Complex64::new(v, 0.0);
        }
        self.fft.process(&mut self.buf);
        out.clear();
        out.extend(self.buf[..frame.len() / 2 + 1].iter().map(|c| c.norm()));
    }
}

pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (len - 1) as f64).cos())
        .collect()
}

pub fn hann(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Coefficients `(b, p)` of the bilinear-transform first-order high-pass
/// `y[n] = b (x[n] - x[n-1]) + p y[n-1]`, prewarped to `cutoff_hz`.
pub fn highpass_coefficients(cutoff_hz: f64, sample_rate_hz: f64) -> (f64, f64) {
    let k = (PI * cutoff_hz / sample_rate_hz).tan();
    (1.0 / (1.0 + k), (1.0 - k) / (1.0 + k))
}

/// One causal pass of the first-order high-pass, started in steady state for
/// a constant input (`x[-1] = x[0]`, `y[-1] = 0`).
fn highpass_pass(signal: &[f64], b: f64, p: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(signal.len());
    let mut prev_x = signal.first().copied().unwrap_or(0.0);
    let mut prev_y = 0.0;
    for &x in signal {
        let y = b * (x - prev_x) + p * prev_y;
        out.push(y);
        prev_x = x;
        prev_y = y;
    }
    out
}

/// Zero-phase first-order high-pass: forward pass, then backward pass.
pub fn highpass_zero_phase(signal: &[f64], cutoff_hz: f64, sample_rate_hz: f64) -> Vec<f64> {
    let (b, p) = highpass_coefficients(cutoff_hz, sample_rate_hz);
    let mut fwd = highpass_pass(signal, b, p);
    fwd.reverse();
    let mut back = highpass_pass(&fwd, b, p);
    back.reverse();
    back
}

/// Power gain `|H|^2` of the forward-backward high-pass at `freq_hz`
/// (equal to its amplitude gain, since the two passes multiply).
pub fn highpass_zero_phase_gain(cutoff_hz: f64, sample_rate_hz: f64, freq_hz: f64) -> f64 {
    let (b, p) = highpass_coefficients(cutoff_hz, sample_rate_hz);
    let w = 2.0 * PI * freq_hz / sample_rate_hz;
    let z1 = Complex64::from_polar(1.0, -w);
    let one = Complex64::new(1.0, 0.0);
    let h = b * (one - z1) / (one - p * z1);
    h.norm_sqr()
}
