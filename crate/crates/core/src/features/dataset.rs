use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{extract_mfcc_features, extract_tf_features, FeatureVector, MfccConfig};
use crate::segment::{
    detect_speech_region, highpass_motion_filter, isolate_words, IsolationConfig, RegionConfig,
    SpeechSegment,
};
use crate::trace::{load_trace, trim_protocol_edges, SensorTrace, TraceFormat};

/// Feature matrix with one label per row.
///
/// The vocabulary is the sorted set of labels seen at construction; subsets
/// keep the parent vocabulary so class indices stay comparable.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Vec<String>,
    vocab: Vec<String>,
    meta: BTreeMap<String, String>,
}

impl LabeledDataset {
    pub fn new(
        names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<String>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut vocab = labels.clone();
        vocab.sort();
        vocab.dedup();
        Self::with_vocab(names, rows, labels, vocab, meta)
    }

    fn with_vocab(
        names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<String>,
        vocab: Vec<String>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidDataset("empty dataset".into()));
        }
        if rows.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != names.len()) {
            return Err(Error::InvalidDataset(format!(
                "row {i} has {} values, expected {}",
                rows[i].len(),
                names.len()
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite feature value".into()));
        }
        if let Some(l) = labels.iter().find(|l| vocab.binary_search(l).is_err()) {
            return Err(Error::InvalidDataset(format!(
                "label `{l}` not in vocabulary"
            )));
        }
        Ok(LabeledDataset {
            names,
            rows,
            labels,
            vocab,
            meta,
        })
    }

    pub fn from_vectors(
        vectors: Vec<FeatureVector>,
        labels: Vec<String>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        let names = vectors
            .first()
            .map(|v| v.names().to_vec())
            .ok_or_else(|| Error::InvalidDataset("empty dataset".into()))?;
        if let Some(i) = vectors.iter().position(|v| v.names() != names.as_slice()) {
            return Err(Error::InvalidDataset(format!(
                "row {i} has a different feature layout"
            )));
        }
        let rows = vectors
            .into_iter()
            .map(FeatureVector::into_values)
            .collect();
        Self::new(names, rows, labels, meta)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut BTreeMap<String, String> {
        &mut self.meta
    }

    pub fn row(&self, i: usize) -> FeatureVector {
        FeatureVector::new(self.names.clone(), self.rows[i].clone())
            .expect("rows validated at construction")
    }

    /// Vocabulary index of every row's label.
    pub fn label_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .map(|l| self.vocab.binary_search(l).expect("label in vocab"))
            .collect()
    }

    /// Rows per vocabulary entry.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.vocab.len()];
        for c in self.label_indices() {
            counts[c] += 1;
        }
        counts
    }

    /// Rows at `indices`, keeping the full vocabulary.
    pub fn subset(&self, indices: &[usize]) -> Result<LabeledDataset> {
        Self::with_vocab(
            self.names.clone(),
            indices.iter().map(|&i| self.rows[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i].clone()).collect(),
            self.vocab.clone(),
            self.meta.clone(),
        )
    }

    /// Same rows with every label passed through `f`; vocabulary recomputed.
    pub fn relabel(&self, f: impl Fn(&str) -> String) -> Result<LabeledDataset> {
        Self::new(
            self.names.clone(),
            self.rows.clone(),
            self.labels.iter().map(|l| f(l)).collect(),
            self.meta.clone(),
        )
    }

    /// Writes `label,<feature names>` CSV, with metadata as leading
    /// `# key=value` comments.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for (k, v) in &self.meta {
            if !k.contains('=') && !k.contains('\n') && !v.contains('\n') {
                writeln!(out, "# {k}={v}").expect("write to vec");
            }
        }
        {
            let mut w = csv::Writer::from_writer(&mut out);
            let mut header = vec!["label".to_string()];
            header.extend(self.names.iter().cloned());
            w.write_record(&header)
                .map_err(|e| Error::Internal(e.to_string()))?;
            for (label, row) in self.labels.iter().zip(&self.rows) {
                let mut rec = vec![label.clone()];
                rec.extend(row.iter().map(|v| v.to_string()));
                w.write_record(&rec)
                    .map_err(|e| Error::Internal(e.to_string()))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut meta = BTreeMap::new();
        let mut body_start = 0;
        let mut skipped_lines = 0;
        for line in text.split_inclusive('\n') {
            let Some(comment) = line.strip_prefix('#') else {
                break;
            };
            if let Some((k, v)) = comment.trim().split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            body_start += line.len();
            skipped_lines += 1;
        }
        let mut rdr = csv::Reader::from_reader(&text.as_bytes()[body_start..]);
        let header = rdr
            .headers()
            .map_err(|e| Error::parse(path, skipped_lines + 1, e.to_string()))?
            .clone();
        if header.get(0) != Some("label") {
            return Err(Error::parse(
                path,
                skipped_lines + 1,
                "first column must be `label`",
            ));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = skipped_lines + i + 2;
            let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
            labels.push(rec.get(0).unwrap_or_default().to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::parse(path, line, format!("not a number: `{v}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::new(names, rows, labels, meta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentMode {
    /// One maximal-variance region per trace.
    Region,
    /// Every isolated word in the trace.
    Word,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    Tf,
    Mfcc,
}

/// Which manifest column supplies the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelColumn {
    Label,
    Speaker,
    Gender,
}

/// Everything between a raw trace and its feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub trace_format: Option<TraceFormat>,
    pub sample_rate_hz: Option<f64>,
    pub trim_head_s: f64,
    pub trim_tail_s: f64,
    pub highpass_cutoff_hz: f64,
    pub segmentation: SegmentMode,
    pub region: RegionConfig,
    pub isolation: IsolationConfig,
    pub features: FeatureMode,
    pub mfcc: MfccConfig,
    pub label_column: LabelColumn,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            trace_format: None,
            sample_rate_hz: None,
            trim_head_s: 5.0,
            trim_tail_s: 2.0,
            highpass_cutoff_hz: 2.0,
            segmentation: SegmentMode::Region,
            region: RegionConfig::default(),
            isolation: IsolationConfig::default(),
            features: FeatureMode::Tf,
            mfcc: MfccConfig::default(),
            label_column: LabelColumn::Label,
        }
    }
}

impl PipelineConfig {
    /// Short stable digest of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    fn min_segment_len(&self) -> usize {
        match self.features {
            FeatureMode::Tf => 4,
            FeatureMode::Mfcc => self.mfcc.frame_samples,
        }
    }
}

/// Trims, filters, segments and featurizes one trace.
///
/// Segmentation runs on the high-pass filtered trace; features are computed
/// on the trimmed but unfiltered readings. A region that fails the
/// peak-ratio gate produces no rows.
pub fn featurize_trace(trace: &SensorTrace, cfg: &PipelineConfig) -> Result<Vec<FeatureVector>> {
    let trimmed = trim_protocol_edges(trace, cfg.trim_head_s, cfg.trim_tail_s)?;
    let filtered = highpass_motion_filter(&trimmed, cfg.highpass_cutoff_hz)?;
    let segments: Vec<SpeechSegment> = match cfg.segmentation {
        SegmentMode::Region => {
            let seg = detect_speech_region(&filtered, &cfg.region)?;
            if seg.is_speech(cfg.region.min_peak_ratio) {
                vec![seg]
            } else {
                Vec::new()
            }
        }
        SegmentMode::Word => isolate_words(&filtered, &cfg.isolation)?,
    };
    segments
        .iter()
        .filter(|s| s.len() >= cfg.min_segment_len())
        .map(|s| match cfg.features {
            FeatureMode::Tf => extract_tf_features(&trimmed, s),
            FeatureMode::Mfcc => extract_mfcc_features(&trimmed, s, &cfg.mfcc),
        })
        .collect()
}

/// One manifest entry: where a trace lives and what it is labeled with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub trace_path: PathBuf,
    pub label: String,
    pub speaker: Option<String>,
    pub gender: Option<String>,
}

impl ManifestRow {
    pub fn label_for(&self, column: LabelColumn) -> Option<&str> {
        match column {
            LabelColumn::Label => Some(self.label.as_str()),
            LabelColumn::Speaker => self.speaker.as_deref(),
            LabelColumn::Gender => self.gender.as_deref(),
        }
    }
}

/// Reads `trace_path,label[,speaker,gender]`. Relative trace paths are
/// resolved against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let (Some(p_col), Some(l_col)) = (col("trace_path"), col("label")) else {
        return Err(Error::parse(
            path,
            1,
            "manifest header must contain `trace_path` and `label`",
        ));
    };
    let (s_col, g_col) = (col("speaker"), col("gender"));
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let field = |c: Option<usize>| {
            c.and_then(|c| rec.get(c))
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
        };
        let trace =
            field(Some(p_col)).ok_or_else(|| Error::parse(path, line, "missing trace_path"))?;
        let label = field(Some(l_col)).ok_or_else(|| Error::parse(path, line, "missing label"))?;
        let trace_path = PathBuf::from(trace);
        rows.push(ManifestRow {
            trace_path: if trace_path.is_absolute() {
                trace_path
            } else {
                base.join(trace_path)
            },
            label,
            speaker: field(s_col),
            gender: field(g_col),
        });
    }
    Ok(rows)
}

/// Writes a manifest; paths are written as given.
pub fn write_manifest(rows: &[ManifestRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Internal(e.to_string()))?;
    let err = |e: csv::Error| Error::Internal(format!("{}: {e}", path.display()));
    w.write_record(["trace_path", "label", "speaker", "gender"])
        .map_err(err)?;
    for r in rows {
        w.write_record([
            r.trace_path.to_string_lossy().as_ref(),
            r.label.as_str(),
            r.speaker.as_deref().unwrap_or(""),
            r.gender.as_deref().unwrap_or(""),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub source: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct DatasetBuild {
    pub dataset: LabeledDataset,
    /// Manifest entries that produced no rows, with the reason.
    pub skipped: Vec<SkipEntry>,
    /// Manifest index each dataset row came from.
    pub row_sources: Vec<usize>,
}

fn assemble(
    entries: Vec<(ManifestRow, Result<Vec<FeatureVector>>)>,
    cfg: &PipelineConfig,
) -> Result<DatasetBuild> {
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    let mut row_sources = Vec::new();
    let mut skipped = Vec::new();
    for (i, (row, result)) in entries.into_iter().enumerate() {
        let source = row.trace_path.display().to_string();
        let Some(label) = row.label_for(cfg.label_column) else {
            skipped.push(SkipEntry {
                source,
                reason: format!("no {:?} label", cfg.label_column).to_lowercase(),
            });
            continue;
        };
        match result {
            Ok(fvs) if fvs.is_empty() => skipped.push(SkipEntry {
                source,
                reason: "no speech segments found".into(),
            }),
            Ok(fvs) => {
                for fv in fvs {
                    vectors.push(fv);
                    labels.push(label.to_string());
                    row_sources.push(i);
                }
            }
            Err(e) => skipped.push(SkipEntry {
                source,
                reason: e.to_string(),
            }),
        }
    }
    if vectors.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "empty dataset ({} entries skipped)",
            skipped.len()
        )));
    }
    let mut meta = BTreeMap::new();
    meta.insert("pipeline_hash".into(), cfg.hash());
    meta.insert(
        "features".into(),
        format!("{:?}", cfg.features).to_lowercase(),
    );
    meta.insert(
        "label_column".into(),
        format!("{:?}", cfg.label_column).to_lowercase(),
    );
    meta.insert("skipped".into(), skipped.len().to_string());
    let dataset = LabeledDataset::from_vectors(vectors, labels, meta)?;
    Ok(DatasetBuild {
        dataset,
        skipped,
        row_sources,
    })
}

/// Builds a dataset from a manifest file, one row per detected segment.
///
/// Unreadable traces and traces without speech are recorded in
/// [`DatasetBuild::skipped`]. Row order follows manifest order regardless of
/// how many threads process the traces.
pub fn build_dataset(manifest: impl AsRef<Path>, cfg: &PipelineConfig) -> Result<DatasetBuild> {
    let rows = read_manifest(manifest)?;
    let entries: Vec<(ManifestRow, Result<Vec<FeatureVector>>)> = rows
        .into_par_iter()
        .map(|row| {
            let format = cfg
                .trace_format
                .unwrap_or_else(|| TraceFormat::from_path(&row.trace_path));
            let result = load_trace(&row.trace_path, format, cfg.sample_rate_hz)
                .and_then(|t| featurize_trace(&t, cfg));
            (row, result)
        })
        .collect();
    assemble(entries, cfg)
}

/// In-memory counterpart of [`build_dataset`].
pub fn build_dataset_from_traces(
    items: &[(ManifestRow, SensorTrace)],
    cfg: &PipelineConfig,
) -> Result<DatasetBuild> {
    let entries = items
        .par_iter()
        .map(|(row, trace)| (row.clone(), featurize_trace(trace, cfg)))
        .collect();
    assemble(entries, cfg)
}
