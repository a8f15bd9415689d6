//! Accelerometer traces and audio clips: validation, file I/O and protocol trimming.
//!
//! Trace files are plain text. CSV carries a `t,x,y,z` header, JSONL one
//! `{"t":..,"x":..,"y":..,"z":..}` object per line. Both accept leading
//! `# key=value` comment lines; `# sample_rate_hz=200` supplies the nominal
//! rate when the caller does not pass one.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum allowed deviation of the median sampling interval from `1 / rate`.
pub const RATE_TOLERANCE: f64 = 0.2;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Csv,
    Jsonl,
}

impl TraceFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceFormat::Csv => "csv",
            TraceFormat::Jsonl => "jsonl",
        }
    }

    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("jsonl") => TraceFormat::Jsonl,
            _ => TraceFormat::Csv,
        }
    }
}

impl FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TraceFormat::Csv),
            "jsonl" => Ok(TraceFormat::Jsonl),
            other => Err(Error::InvalidArgument(format!(
                "unknown trace format `{other}`"
            ))),
        }
    }
}

/// Index of the three accelerometer axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// Timestamped tri-axial acceleration samples at a fixed nominal rate.
///
/// Every instance satisfies the trace invariants: equal-length non-empty
/// channels, strictly increasing timestamps, a median sampling interval within
/// 20% of `1 / sample_rate_hz`, and finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorTrace {
    sample_rate_hz: f64,
    t: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    meta: BTreeMap<String, String>,
}

impl SensorTrace {
    pub fn new(
        sample_rate_hz: f64,
        t: Vec<f64>,
        x: Vec<f64>,
        y: Vec<f64>,
        z: Vec<f64>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidTrace(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        let n = t.len();
        if n == 0 {
            return Err(Error::InvalidTrace("trace is empty".into()));
        }
        if x.len() != n || y.len() != n || z.len() != n {
            return Err(Error::InvalidTrace(format!(
                "channel lengths differ: t={n} x={} y={} z={}",
                x.len(),
                y.len(),
                z.len()
            )));
        }
        if let Some(i) = t.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTrace(format!(
                "non-finite timestamp at sample {i}"
            )));
        }
        for (name, ch) in [("x", &x), ("y", &y), ("z", &z)] {
            if let Some(i) = ch.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidTrace(format!(
                    "non-finite {name} value at sample {i}"
                )));
            }
        }
        if let Some(i) = t.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTrace(format!(
                "non-monotonic timestamps at sample {}: {} then {}",
                i + 1,
                t[i],
                t[i + 1]
            )));
        }
        if n >= 2 {
            let mut dt: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
            let median = crate::stats::median_in_place(&mut dt);
            let nominal = 1.0 / sample_rate_hz;
            if (median - nominal).abs() > RATE_TOLERANCE * nominal {
                return Err(Error::InvalidTrace(format!(
                    "median sample interval {median} s disagrees with declared rate {sample_rate_hz} Hz"
                )));
            }
        }
        Ok(SensorTrace {
            sample_rate_hz,
            t,
            x,
            y,
            z,
            meta,
        })
    }

    /// Builds a trace with uniform timestamps `t0 + i / rate`.
    pub fn uniform(
        sample_rate_hz: f64,
        t0: f64,
        x: Vec<f64>,
        y: Vec<f64>,
        z: Vec<f64>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        let t = (0..z.len())
            .map(|i| t0 + i as f64 / sample_rate_hz)
            .collect();
        Self::new(sample_rate_hz, t, x, y, z, meta)
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn axis(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
            Axis::Z => &self.z,
        }
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    /// Duration from first to last timestamp, in seconds.
    pub fn duration_s(&self) -> f64 {
        self.t[self.t.len() - 1] - self.t[0]
    }

    /// True when timestamps, rate and all three channels are bit-identical.
    /// Metadata is not compared.
    pub fn same_samples(&self, other: &SensorTrace) -> bool {
        fn bits(a: &[f64], b: &[f64]) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(p, q)| p.to_bits() == q.to_bits())
        }
        self.sample_rate_hz.to_bits() == other.sample_rate_hz.to_bits()
            && bits(&self.t, &other.t)
            && bits(&self.x, &other.x)
            && bits(&self.y, &other.y)
            && bits(&self.z, &other.z)
    }

    /// Sub-trace of samples `range`, keeping rate and metadata.
    pub fn slice(&self, start: usize, end: usize) -> Result<SensorTrace> {
        if start >= end || end > self.len() {
            return Err(Error::InvalidArgument(format!(
                "slice [{start}, {end}) outside trace of {} samples",
                self.len()
            )));
        }
        SensorTrace::new(
            self.sample_rate_hz,
            self.t[start..end].to_vec(),
            self.x[start..end].to_vec(),
            self.y[start..end].to_vec(),
            self.z[start..end].to_vec(),
            self.meta.clone(),
        )
    }

    /// Replaces the three channels, keeping timestamps and metadata.
    pub fn map_channels(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<SensorTrace> {
        SensorTrace::new(
            self.sample_rate_hz,
            self.t.clone(),
            f(&self.x),
            f(&self.y),
            f(&self.z),
            self.meta.clone(),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
}

/// Loads and validates a trace. `sample_rate_hz` overrides any
/// `# sample_rate_hz=` comment in the file.
pub fn load_trace(
    path: impl AsRef<Path>,
    format: TraceFormat,
    sample_rate_hz: Option<f64>,
) -> Result<SensorTrace> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;

    let mut meta = BTreeMap::new();
    let (mut t, mut x, mut y, mut z) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut saw_header = false;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.trim().split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        match format {
            TraceFormat::Csv => {
                if !saw_header
                    && t.is_empty()
                    && line.starts_with(|c: char| c.is_ascii_alphabetic())
                {
                    let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                    if cols != ["t", "x", "y", "z"] {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!("expected header `t,x,y,z`, found `{line}`"),
                        ));
                    }
                    saw_header = true;
                    continue;
                }
                let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                if fields.len() != 4 {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("expected 4 fields, found {}", fields.len()),
                    ));
                }
                let mut vals = [0.0f64; 4];
                for (slot, field) in vals.iter_mut().zip(&fields) {
                    *slot = field.parse().map_err(|_| {
                        Error::parse(path, line_no, format!("not a number: `{field}`"))
                    })?;
                }
                t.push(vals[0]);
                x.push(vals[1]);
                y.push(vals[2]);
                z.push(vals[3]);
            }
            TraceFormat::Jsonl => {
                let row: JsonRow = serde_json::from_str(line)
                    .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
                t.push(row.t);
                x.push(row.x);
                y.push(row.y);
                z.push(row.z);
            }
        }
    }

    if t.is_empty() {
        return Err(Error::parse(path, 0, "file contains no samples"));
    }

    let rate = match sample_rate_hz {
        Some(r) => r,
        None => meta
            .get("sample_rate_hz")
            .ok_or_else(|| {
                Error::parse(
                    path,
                    0,
                    "no sample rate: pass one explicitly or add `# sample_rate_hz=<hz>`",
                )
            })?
            .parse()
            .map_err(|_| Error::parse(path, 0, "malformed sample_rate_hz comment"))?,
    };
    meta.insert("sample_rate_hz".into(), rate.to_string());
    meta.insert("source".into(), path.display().to_string());
    meta.insert("format".into(), format.as_str().into());

    SensorTrace::new(rate, t, x, y, z, meta).map_err(|e| match e {
        Error::InvalidTrace(msg) => Error::InvalidTrace(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes a trace in the given format. Metadata is stored as `# key=value`
/// comment lines ahead of the samples.
pub fn save_trace(trace: &SensorTrace, path: impl AsRef<Path>, format: TraceFormat) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);

    writeln!(w, "# sample_rate_hz={}", trace.sample_rate_hz).map_err(io)?;
    for (k, v) in &trace.meta {
        if k == "sample_rate_hz" || k.contains('=') || k.contains('\n') || v.contains('\n') {
            continue;
        }
        writeln!(w, "# {k}={v}").map_err(io)?;
    }
    match format {
        TraceFormat::Csv => {
            writeln!(w, "t,x,y,z").map_err(io)?;
            for i in 0..trace.len() {
                writeln!(
                    w,
                    "{},{},{},{}",
                    trace.t[i], trace.x[i], trace.y[i], trace.z[i]
                )
                .map_err(io)?;
            }
        }
        TraceFormat::Jsonl => {
            for i in 0..trace.len() {
                let row = JsonRow {
                    t: trace.t[i],
                    x: trace.x[i],
                    y: trace.y[i],
                    z: trace.z[i],
                };
                let line =
                    serde_json::to_string(&row).map_err(|e| Error::Internal(e.to_string()))?;
                writeln!(w, "{line}").map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

/// Drops the first `head_s` and last `tail_s` seconds of a recording.
///
/// Keeps samples with `t0 + head_s <= t <= t_end - tail_s`.
pub fn trim_protocol_edges(trace: &SensorTrace, head_s: f64, tail_s: f64) -> Result<SensorTrace> {
    if !(head_s >= 0.0 && tail_s >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "trim lengths must be non-negative (head {head_s}, tail {tail_s})"
        )));
    }
    let duration = trace.duration_s();
    if head_s + tail_s > 0.0 && duration <= head_s + tail_s {
        return Err(Error::InvalidArgument(format!(
            "trace lasts {duration:.3} s, too short to trim {head_s} s + {tail_s} s"
        )));
    }
    let t = trace.t();
    let lo = t[0] + head_s - TIME_EPS;
    let hi = t[t.len() - 1] - tail_s + TIME_EPS;
    let start = t.partition_point(|&v| v < lo);
    let end = t.partition_point(|&v| v <= hi);
    if start >= end {
        return Err(Error::InvalidArgument("trim leaves no samples".into()));
    }
    trace.slice(start, end)
}

/// Mono speech clip with samples normalized to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    sample_rate_hz: f64,
    samples: Vec<f64>,
    label: Option<String>,
}

/// Lowest audio rate accepted for speech input.
pub const MIN_AUDIO_RATE_HZ: f64 = 8000.0;

impl AudioClip {
    pub fn new(sample_rate_hz: f64, samples: Vec<f64>, label: Option<String>) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz >= MIN_AUDIO_RATE_HZ) {
            return Err(Error::InvalidAudio(format!(
                "sample rate {sample_rate_hz} Hz below {MIN_AUDIO_RATE_HZ} Hz"
            )));
        }
        if samples.is_empty() {
            return Err(Error::InvalidAudio("clip is empty".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::InvalidAudio(format!(
                "sample {i} = {} outside [-1, 1]",
                samples[i]
            )));
        }
        Ok(AudioClip {
            sample_rate_hz,
            samples,
            label,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

/// Reads a mono 8- or 16-bit PCM WAV file. 16-bit samples are scaled by
/// 1/32768, 8-bit by 1/128.
pub fn load_audio(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let audio_err = |msg: String| Error::InvalidAudio(format!("{}: {msg}", path.display()));
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => audio_err(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(audio_err(format!(
            "multi-channel input unsupported ({} channels)",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(audio_err("only integer PCM is supported".into()));
    }
    let scale = match spec.bits_per_sample {
        8 => 128.0,
        16 => 32768.0,
        b => return Err(audio_err(format!("unsupported bit depth {b}"))),
    };
    let samples = reader
        .samples::<i32>()
        .map(|s| s.map(|v| v as f64 / scale))
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|e| audio_err(format!("truncated or corrupt sample data: {e}")))?;
    let label = path
        .file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string);
    AudioClip::new(spec.sample_rate as f64, samples, label).map_err(|e| audio_err(e.to_string()))
}

/// Writes a clip as 16-bit mono PCM. Samples are rounded and clipped to the
/// 16-bit range.
pub fn save_audio(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz.round() as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Internal(other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in &clip.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}
