//! Synthetic spoken-digit corpus used by the demo and the acceptance suite.
//!
//! Eleven word templates ("zero".."nine" and "oh") are built from voiced
//! segments with formant trajectories, noise-like fricatives and stop
//! closures. Each word has its own loudness and syllabic modulation depth.
//! Ten speakers (five per gender) differ in fundamental frequency
//! (100-150 Hz and 220-250 Hz, chosen so their aliases at 200 Hz are spread
//! apart), formant scaling, spectral tilt and breathiness. Every utterance
//! gets its own jitter in pitch, timing, loudness and phase, and is passed
//! through the accelerometer response model.
//!
//! The template numbers are loose approximations of English vowel formants;
//! they only need to give each word a stable, distinguishable signature.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{write_manifest, ManifestRow};
use crate::synth::{synthesize_trace, ResponseModel};
use crate::trace::{save_trace, AudioClip, SensorTrace, TraceFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Speaker {
    pub id: String,
    pub gender: Gender,
    pub f0_hz: f64,
    pub formant_scale: f64,
    /// Harmonic amplitude falls off as `h^-tilt`.
    pub tilt: f64,
    /// Level of aspiration noise mixed into voiced sounds.
    pub breath: f64,
}

/// One piece of a word template.
#[derive(Debug, Clone, PartialEq)]
pub enum Phone {
    /// Voiced sound whose first three formants glide linearly from `from` to `to`.
    Voiced {
        dur_s: f64,
        from: [f64; 3],
        to: [f64; 3],
        amp: f64,
    },
    /// Band-limited noise.
    Fricative {
        dur_s: f64,
        lo_hz: f64,
        hi_hz: f64,
        amp: f64,
    },
    /// Stop closure.
    Silence { dur_s: f64 },
}

impl Phone {
    fn dur_s(&self) -> f64 {
        match self {
            Phone::Voiced { dur_s, .. }
            | Phone::Fricative { dur_s, .. }
            | Phone::Silence { dur_s } => *dur_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordTemplate {
    pub name: String,
    /// Loudness in units of `RMS_PER_LEVEL`, before loudness jitter.
    pub level: f64,
    /// Depth of the syllabic amplitude modulation, in `[0, 1]`.
    pub tremolo: f64,
    pub phones: Vec<Phone>,
}

impl WordTemplate {
    pub fn duration_s(&self) -> f64 {
        self.phones.iter().map(Phone::dur_s).sum()
    }
}

pub fn speakers() -> Vec<Speaker> {
    let male = [
        (102.0, 1.00, 2.7, 0.0),
        (113.0, 0.94, 3.0, 0.4),
        (124.0, 1.05, 2.6, 0.0),
        (135.0, 0.97, 3.2, 0.4),
        (146.0, 1.03, 2.8, 0.0),
    ];
    let female = [
        (220.0, 1.14, 2.9, 0.4),
        (226.0, 1.20, 2.6, 0.0),
        (233.0, 1.10, 3.1, 0.4),
        (240.0, 1.17, 2.7, 0.0),
        (247.0, 1.23, 3.0, 0.4),
    ];
    let mut out = Vec::new();
    for (i, &(f0, scale, tilt, breath)) in male.iter().enumerate() {
        out.push(Speaker {
            id: format!("m{}", i + 1),
            gender: Gender::Male,
            f0_hz: f0,
            formant_scale: scale,
            tilt,
            breath,
        });
    }
    for (i, &(f0, scale, tilt, breath)) in female.iter().enumerate() {
        out.push(Speaker {
            id: format!("f{}", i + 1),
            gender: Gender::Female,
            f0_hz: f0,
            formant_scale: scale,
            tilt,
            breath,
        });
    }
    out
}

pub fn word_templates() -> Vec<WordTemplate> {
    fn v(dur_s: f64, from: [f64; 3], to: [f64; 3], amp: f64) -> Phone {
        Phone::Voiced {
            dur_s,
            from,
            to,
            amp,
        }
    }
    fn fr(dur_s: f64, lo_hz: f64, hi_hz: f64, amp: f64) -> Phone {
        Phone::Fricative {
            dur_s,
            lo_hz,
            hi_hz,
            amp,
        }
    }
    fn sil(dur_s: f64) -> Phone {
        Phone::Silence { dur_s }
    }
    const IH: [f64; 3] = [400.0, 1900.0, 2550.0];
    const IY: [f64; 3] = [280.0, 2250.0, 2900.0];
    const EH: [f64; 3] = [550.0, 1770.0, 2490.0];
    const AH: [f64; 3] = [650.0, 1100.0, 2400.0];
    const AA: [f64; 3] = [730.0, 1090.0, 2440.0];
    const AO: [f64; 3] = [570.0, 840.0, 2410.0];
    const OW: [f64; 3] = [500.0, 900.0, 2300.0];
    const UW: [f64; 3] = [300.0, 870.0, 2240.0];
    const ER: [f64; 3] = [490.0, 1350.0, 1690.0];
    const N: [f64; 3] = [250.0, 1500.0, 2500.0];
    const W: [f64; 3] = [300.0, 650.0, 2200.0];

    let words: Vec<(&str, f64, f64, Vec<Phone>)> = vec![
        ("oh", 0.50, 0.72, vec![v(0.55, OW, UW, 1.0)]),
        (
            "two",
            0.25,
            0.36,
            vec![
                fr(0.05, 2000.0, 3300.0, 0.6),
                sil(0.03),
                v(0.52, UW, UW, 1.0),
            ],
        ),
        (
            "eight",
            0.76,
            0.09,
            vec![
                v(0.52, EH, IY, 1.0),
                sil(0.05),
                fr(0.08, 2000.0, 3300.0, 0.5),
            ],
        ),
        (
            "one",
            0.38,
            0.90,
            vec![
                v(0.12, W, AH, 0.7),
                v(0.42, AH, AH, 1.0),
                v(0.16, N, N, 0.5),
            ],
        ),
        (
            "three",
            1.01,
            0.54,
            vec![
                fr(0.14, 1400.0, 2800.0, 0.3),
                v(0.10, ER, IY, 0.7),
                v(0.51, IY, IY, 1.0),
            ],
        ),
        (
            "nine",
            0.29,
            0.18,
            vec![v(0.12, N, N, 0.5), v(0.52, AA, IY, 1.0), v(0.16, N, N, 0.5)],
        ),
        (
            "four",
            0.58,
            0.81,
            vec![
                fr(0.16, 1200.0, 3300.0, 0.4),
                v(0.46, AO, AO, 1.0),
                v(0.23, AO, ER, 0.7),
            ],
        ),
        (
            "five",
            0.88,
            0.00,
            vec![
                fr(0.14, 1200.0, 3300.0, 0.4),
                v(0.60, AA, IY, 1.0),
                fr(0.16, 800.0, 2000.0, 0.3),
            ],
        ),
        (
            "zero",
            0.33,
            0.45,
            vec![
                fr(0.12, 2800.0, 3300.0, 0.5),
                v(0.24, IH, IH, 0.9),
                v(0.16, ER, ER, 0.8),
                v(0.43, OW, UW, 1.0),
            ],
        ),
        (
            "six",
            0.67,
            0.27,
            vec![
                fr(0.22, 3000.0, 3300.0, 0.6),
                v(0.33, IH, IH, 1.0),
                sil(0.08),
                fr(0.32, 3000.0, 3300.0, 0.6),
            ],
        ),
        (
            "seven",
            0.44,
            0.63,
            vec![
                fr(0.18, 3000.0, 3300.0, 0.6),
                v(0.30, EH, EH, 1.0),
                fr(0.07, 800.0, 2000.0, 0.3),
                v(0.26, AH, AH, 0.7),
                v(0.19, N, N, 0.5),
            ],
        ),
    ];
    words
        .into_iter()
        .map(|(name, level, tremolo, phones)| WordTemplate {
            name: name.into(),
            level,
            tremolo,
            phones,
        })
        .collect()
}

/// Rate of the syllabic amplitude modulation.
const TREMOLO_HZ: f64 = 3.0;

/// Word RMS per unit of `WordTemplate::level`.
const RMS_PER_LEVEL: f64 = 0.3;

/// Resonance envelope of a formant triple at frequency `f`.
fn formant_gain(f: f64, formants: &[f64; 3]) -> f64 {
    const BANDWIDTH: [f64; 3] = [90.0, 120.0, 180.0];
    const WEIGHT: [f64; 3] = [1.0, 0.6, 0.3];
    formants
        .iter()
        .zip(BANDWIDTH.iter().zip(WEIGHT))
        .map(|(&fc, (&bw, w))| w / (1.0 + ((f - fc) / bw).powi(2)))
        .sum::<f64>()
        + 1.0
}

fn raised_cosine_edges(i: usize, n: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(n / 2).max(1);
    let e = if i < ramp {
        i as f64 / ramp as f64
    } else if i >= n - ramp {
        (n - 1 - i) as f64 / ramp as f64
    } else {
        1.0
    };
    0.5 - 0.5 * (PI * e).cos()
}

/// Per-utterance variation drawn from the corpus random stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    pub pitch: f64,
    pub tempo: f64,
    pub loudness: f64,
    pub formant: f64,
}

impl Jitter {
    pub const NONE: Jitter = Jitter {
        pitch: 1.0,
        tempo: 1.0,
        loudness: 1.0,
        formant: 1.0,
    };

    pub fn draw<R: Rng>(rng: &mut R) -> Jitter {
        Jitter {
            pitch: 1.0 + rng.gen_range(-0.005..0.005),
            tempo: 1.0 + rng.gen_range(-0.02..0.02),
            loudness: 1.0 + rng.gen_range(-0.03..0.03),
            formant: 1.0 + rng.gen_range(-0.03..0.03),
        }
    }
}

/// Renders one word as audio samples at `rate` Hz, scaled to an RMS of
/// `word.level * jitter.loudness * RMS_PER_LEVEL` unless that would push the
/// peak past 0.99.
pub fn render_word<R: Rng>(
    word: &WordTemplate,
    speaker: &Speaker,
    jitter: Jitter,
    rate: f64,
    rng: &mut R,
) -> Vec<f64> {
    let nyquist = rate / 2.0;
    let top = nyquist.min(3400.0);
    let n_harm = (top / (speaker.f0_hz * jitter.pitch)).floor() as usize;
    let mut phases: Vec<f64> = (0..n_harm).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let ramp = (0.015 * rate) as usize;
    let mut out = Vec::new();
    let mut t_word = 0.0;
    let total = word.duration_s() * jitter.tempo;
    for phone in &word.phones {
        let n = ((phone.dur_s() * jitter.tempo) * rate).round() as usize;
        match phone {
            Phone::Silence { .. } => out.extend(std::iter::repeat_n(0.0, n)),
            Phone::Voiced { from, to, amp, .. } => {
                for i in 0..n {
                    let a = i as f64 / n.max(1) as f64;
                    let scale = speaker.formant_scale * jitter.formant;
                    let formants = [
                        (from[0] + a * (to[0] - from[0])) * scale,
                        (from[1] + a * (to[1] - from[1])) * scale,
                        (from[2] + a * (to[2] - from[2])) * scale,
                    ];
                    // Gentle pitch declination over the word.
                    let f0 = speaker.f0_hz * jitter.pitch * (1.0025 - 0.005 * t_word / total);
                    let mut s = 0.0;
                    for (h, ph) in phases.iter_mut().enumerate() {
                        let f = (h + 1) as f64 * f0;
                        *ph += 2.0 * PI * f / rate;
                        if f < top {
                            s += formant_gain(f, &formants)
                                * ((h + 1) as f64).powf(-speaker.tilt)
                                * ph.sin();
                        }
                    }
                    if speaker.breath > 0.0 {
                        s += speaker.breath * rng.sample::<f64, _>(StandardNormal);
                    }
                    out.push(amp * s * raised_cosine_edges(i, n, ramp));
                    t_word += 1.0 / rate;
                }
                continue;
            }
            Phone::Fricative {
                lo_hz, hi_hz, amp, ..
            } => {
                let tones: Vec<(f64, f64)> = (0..48)
                    .map(|_| {
                        (
                            rng.gen_range(*lo_hz..hi_hz.min(top)),
                            rng.gen_range(0.0..2.0 * PI),
                        )
                    })
                    .collect();
                for i in 0..n {
                    let t = i as f64 / rate;
                    let s: f64 = tones
                        .iter()
                        .map(|(f, p)| (2.0 * PI * f * t + p).sin())
                        .sum::<f64>()
                        / 48f64.sqrt();
                    out.push(amp * 0.3 * s * raised_cosine_edges(i, n, ramp));
                }
            }
        }
        t_word += n as f64 / rate;
    }
    if word.tremolo > 0.0 {
        for (i, v) in out.iter_mut().enumerate() {
            let t = i as f64 / rate;
            *v *= 1.0 - word.tremolo * (0.5 - 0.5 * (2.0 * PI * TREMOLO_HZ * t).cos());
        }
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / out.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        let mut gain = word.level * jitter.loudness * RMS_PER_LEVEL / rms;
        let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak * gain > 0.99 {
            gain = 0.99 / peak;
        }
        out.iter_mut().for_each(|v| *v *= gain);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub seed: u64,
    pub repetitions: usize,
    pub audio_rate_hz: f64,
    /// Idle recording before playback; must exceed the 5 s protocol trim.
    pub lead_s: f64,
    /// Idle recording after playback; must exceed the 2 s protocol trim.
    pub trail_s: f64,
    pub model: ResponseModel,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            seed: 7,
            repetitions: 10,
            audio_rate_hz: 8000.0,
            lead_s: 7.0,
            trail_s: 4.0,
            model: ResponseModel {
                noise_sigma: 0.02,
                ..ResponseModel::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Utterance {
    pub word: String,
    pub speaker: String,
    pub gender: Gender,
    pub repetition: usize,
    pub trace: SensorTrace,
}

impl Utterance {
    pub fn file_stem(&self) -> String {
        format!("{}_{}_{}", self.speaker, self.word, self.repetition)
    }

    pub fn manifest_row(&self, trace_path: PathBuf) -> ManifestRow {
        ManifestRow {
            trace_path,
            label: self.word.clone(),
            speaker: Some(self.speaker.clone()),
            gender: Some(self.gender.as_str().to_string()),
        }
    }
}

fn utterance_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Every (speaker, word, repetition) combination, in that nesting order.
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<Vec<Utterance>> {
    if cfg.repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    cfg.model.validate()?;
    let speakers = speakers();
    let words = word_templates();
    let mut jobs = Vec::new();
    for s in &speakers {
        for w in &words {
            for r in 0..cfg.repetitions {
                jobs.push((s, w, r));
            }
        }
    }
    jobs.par_iter()
        .enumerate()
        .map(|(i, &(s, w, r))| {
            let seed = utterance_seed(cfg.seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let jitter = Jitter::draw(&mut rng);
            let audio = render_word(w, s, jitter, cfg.audio_rate_hz, &mut rng);
            let clip = AudioClip::new(cfg.audio_rate_hz, audio, Some(w.name.clone()))?;
            let model = ResponseModel {
                seed,
                ..cfg.model.clone()
            };
            let trace = synthesize_trace(&clip, &model, cfg.lead_s, cfg.trail_s)?
                .with_meta("speaker", s.id.clone())
                .with_meta("gender", s.gender.as_str());
            Ok(Utterance {
                word: w.name.clone(),
                speaker: s.id.clone(),
                gender: s.gender,
                repetition: r,
                trace,
            })
        })
        .collect()
}

/// Writes every utterance as a CSV trace under `dir` plus `manifest.csv`
/// (word label, speaker and gender columns). Returns the manifest path.
pub fn write_corpus(utterances: &[Utterance], dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let traces = dir.join("traces");
    std::fs::create_dir_all(&traces).map_err(|e| Error::io(&traces, e))?;
    let rows = utterances
        .par_iter()
        .map(|u| {
            let rel = PathBuf::from("traces").join(format!("{}.csv", u.file_stem()));
            save_trace(&u.trace, dir.join(&rel), TraceFormat::Csv)?;
            Ok(u.manifest_row(rel))
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = dir.join("manifest.csv");
    write_manifest(&rows, &manifest)?;
    Ok(manifest)
}

/// A continuous recording of several words with known boundaries.
#[derive(Debug, Clone)]
pub struct Sentence {
    pub trace: SensorTrace,
    /// Ground-truth word extents in sensor samples, `[start, end)`.
    pub words: Vec<(usize, usize)>,
    pub labels: Vec<String>,
}

/// Renders `n_words` random words from one speaker separated by silent
/// gaps drawn from `[gap_min_s, gap_max_s]`, with `edge_s` of idle
/// recording on both sides.
pub fn synthesize_sentence(
    speaker: &Speaker,
    n_words: usize,
    gap_min_s: f64,
    gap_max_s: f64,
    edge_s: f64,
    model: &ResponseModel,
    audio_rate_hz: f64,
    seed: u64,
) -> Result<Sentence> {
    let words = word_templates();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut audio = Vec::new();
    let mut bounds = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n_words {
        if i > 0 {
            let gap = rng.gen_range(gap_min_s..=gap_max_s);
            audio.extend(std::iter::repeat_n(
                0.0,
                (gap * audio_rate_hz).round() as usize,
            ));
        }
        let w = &words[rng.gen_range(0..words.len())];
        let jitter = Jitter::draw(&mut rng);
        let samples = render_word(w, speaker, jitter, audio_rate_hz, &mut rng);
        let start = audio.len();
        audio.extend(samples);
        bounds.push((start, audio.len()));
        labels.push(w.name.clone());
    }
    let clip = AudioClip::new(audio_rate_hz, audio, None)?;
    let model = ResponseModel {
        seed,
        ..model.clone()
    };
    let trace = synthesize_trace(&clip, &model, edge_s, edge_s)?;
    let lead = (edge_s * model.sensor_rate_hz).round() as usize;
    let ratio = model.sensor_rate_hz / audio_rate_hz;
    let words = bounds
        .into_iter()
        .map(|(s, e)| {
            (
                lead + (s as f64 * ratio).ceil() as usize,
                lead + (e as f64 * ratio).ceil() as usize,
            )
        })
        .collect();
    Ok(Sentence {
        trace,
        words,
        labels,
    })
}
