//! End-to-end experiment runner: manifest in, dataset, model, report and a
//! run manifest out.
//!
//! Configuration is TOML. Every field has a default, so a config only needs
//! the keys it changes:
//!
//! ```toml
//! seed = 1
//! manifest = "corpus/manifest.csv"
//! out_dir = "runs/speaker"
//! task = "speaker"        # gender | speaker | word | ovo:<speaker>
//! features = "tf"         # tf | mfcc
//! classifier = "forest"   # forest | tree | logistic
//! protocol = "cv10"       # cv10 | split66
//!
//! [forest]
//! n_trees = 100
//!
//! [pipeline]
//! segmentation = "region"
//!
//! [corpus]                # used by the demo corpus generator
//! repetitions = 6
//! [corpus.model]
//! noise_sigma = 0.03
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::CorpusConfig;
use crate::error::{Error, Result};
use crate::features::{
    build_dataset, FeatureMode, LabelColumn, LabeledDataset, PipelineConfig, SkipEntry,
};
use crate::learn::{
    binary_one_vs_others, calibrate_threshold, evaluate_cv, evaluate_split, predictions_for,
    stratified_split, ClassifierSpec, EvalReport, ForestConfig, LogisticConfig, Model, Prediction,
};
use crate::stats::{mean, sorted_copy};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Task {
    Gender,
    Speaker,
    Word,
    /// One speaker against all others.
    OneVsOthers(String),
}

impl Task {
    pub fn label_column(&self) -> LabelColumn {
        match self {
            Task::Gender => LabelColumn::Gender,
            Task::Speaker | Task::OneVsOthers(_) => LabelColumn::Speaker,
            Task::Word => LabelColumn::Label,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Gender => f.write_str("gender"),
            Task::Speaker => f.write_str("speaker"),
            Task::Word => f.write_str("word"),
            Task::OneVsOthers(t) => write!(f, "ovo:{t}"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Task> {
        match s {
            "gender" => Ok(Task::Gender),
            "speaker" => Ok(Task::Speaker),
            "word" => Ok(Task::Word),
            _ => match s.strip_prefix("ovo:") {
                Some(t) if !t.is_empty() => Ok(Task::OneVsOthers(t.to_string())),
                _ => Err(Error::Config(format!(
                    "unknown task `{s}` (expected gender, speaker, word or ovo:<label>)"
                ))),
            },
        }
    }
}

impl TryFrom<String> for Task {
    type Error = Error;

    fn try_from(s: String) -> Result<Task> {
        s.parse()
    }
}

impl From<Task> for String {
    fn from(t: Task) -> String {
        t.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Forest,
    Tree,
    Logistic,
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forest" => Ok(ClassifierKind::Forest),
            "tree" => Ok(ClassifierKind::Tree),
            "logistic" => Ok(ClassifierKind::Logistic),
            _ => Err(Error::Config(format!(
                "unknown classifier `{s}` (expected forest, tree or logistic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Cv10,
    Split66,
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cv10" => Ok(Protocol::Cv10),
            "split66" => Ok(Protocol::Split66),
            _ => Err(Error::Config(format!(
                "unknown protocol `{s}` (expected cv10 or split66)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub task: Task,
    pub features: FeatureMode,
    pub classifier: ClassifierKind,
    pub protocol: Protocol,
    pub forest: ForestConfig,
    pub logistic: LogisticConfig,
    pub pipeline: PipelineConfig,
    pub corpus: CorpusConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            manifest: None,
            out_dir: PathBuf::from("vibespeech-run"),
            task: Task::Speaker,
            features: FeatureMode::Tf,
            classifier: ClassifierKind::Forest,
            protocol: Protocol::Cv10,
            forest: ForestConfig::default(),
            logistic: LogisticConfig::default(),
            pipeline: PipelineConfig::default(),
            corpus: CorpusConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Internal(e.to_string()))
    }

    /// Loads a TOML config, or the config embedded in a `run.json` run
    /// manifest. Relative paths are resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            let run: RunManifest = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            run.config
        } else {
            Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(cfg.resolved_against(base))
    }

    fn resolved_against(mut self, base: &Path) -> Self {
        if let Some(m) = &self.manifest {
            if m.is_relative() {
                self.manifest = Some(base.join(m));
            }
        }
        if self.out_dir.is_relative() {
            self.out_dir = base.join(&self.out_dir);
        }
        self
    }

    /// Copy with the manifest and output paths made absolute, so a run
    /// manifest can be replayed from anywhere.
    pub fn with_absolute_paths(&self) -> Self {
        let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
        ExperimentConfig {
            manifest: self.manifest.as_deref().map(abs),
            out_dir: abs(&self.out_dir),
            ..self.clone()
        }
    }

    /// Classifier settings with the experiment seed applied.
    pub fn classifier_spec(&self) -> ClassifierSpec {
        match self.classifier {
            ClassifierKind::Forest => ClassifierSpec::Forest(ForestConfig {
                seed: self.seed,
                ..self.forest.clone()
            }),
            ClassifierKind::Tree => ClassifierSpec::Tree(ForestConfig {
                seed: self.seed,
                ..self.forest.clone()
            }),
            ClassifierKind::Logistic => ClassifierSpec::Logistic(self.logistic.clone()),
        }
    }

    /// Pipeline settings with the task's label column and feature mode applied.
    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            label_column: self.task.label_column(),
            features: self.features,
            ..self.pipeline.clone()
        }
    }

    /// Digest of the canonical JSON form, excluding where outputs go.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.manifest = c
            .manifest
            .as_ref()
            .and_then(|m| m.file_name())
            .map(PathBuf::from);
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    pub fn validate(&self) -> Result<()> {
        self.forest.validate()?;
        self.logistic.validate()?;
        self.corpus.model.validate()?;
        Ok(())
    }
}

/// Evaluates a labeled dataset under the configured protocol.
pub fn evaluate(
    ds: &LabeledDataset,
    spec: &ClassifierSpec,
    protocol: Protocol,
    seed: u64,
) -> Result<EvalReport> {
    match protocol {
        Protocol::Cv10 => evaluate_cv(ds, spec, 10, seed),
        Protocol::Split66 => evaluate_split(ds, spec, 0.66, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub file: String,
    pub sha256: String,
}

/// Record of one run, sufficient to repeat it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit: String,
    pub version: String,
    pub config_hash: String,
    pub pipeline_hash: String,
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    /// Files left behind by a failed run are partial.
    pub partial: bool,
    pub artifacts: Vec<Artifact>,
    pub dataset_rows: Option<usize>,
    pub skipped: Vec<SkipEntry>,
    pub weighted_f: Option<f64>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    pub dataset: LabeledDataset,
    pub model: Model,
    pub out_dir: PathBuf,
    pub run: RunManifest,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    manifest: RunManifest,
}

impl Run<'_> {
    fn record(&mut self, name: &str, file: &str) -> Result<()> {
        let sha256 = sha256_file(&self.cfg.out_dir.join(file))?;
        self.manifest.artifacts.push(Artifact {
            name: name.into(),
            file: file.into(),
            sha256,
        });
        Ok(())
    }

    fn write(&self) -> Result<()> {
        let path = self.cfg.out_dir.join("run.json");
        let mut text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::Internal(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Runs ingest, features, train, evaluate and writes `dataset.csv`,
/// `model.json`, `report.json` and `run.json` into `cfg.out_dir`.
///
/// Errors carry the stage they happened in. If the output directory exists
/// when a later stage fails, `run.json` is still written with
/// `status = "failed"` and `partial = true`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let pipeline = cfg.pipeline_config();
    let mut run = Run {
        cfg,
        manifest: RunManifest {
            toolkit: "vibespeech".into(),
            version: TOOLKIT_VERSION.into(),
            config_hash: cfg.hash(),
            pipeline_hash: pipeline.hash(),
            status: "running".into(),
            failed_stage: None,
            error: None,
            partial: false,
            artifacts: Vec::new(),
            dataset_rows: None,
            skipped: Vec::new(),
            weighted_f: None,
            config: cfg.with_absolute_paths(),
        },
    };
    let result = run_stages(cfg, &pipeline, &mut run);
    match result {
        Ok(outcome) => {
            run.manifest.status = "complete".into();
            run.write().map_err(|e| e.in_stage("write", "run.json"))?;
            Ok(ExperimentOutcome {
                run: run.manifest,
                ..outcome
            })
        }
        Err(e) => {
            if cfg.out_dir.is_dir() {
                run.manifest.status = "failed".into();
                run.manifest.failed_stage = e.stage().map(str::to_string);
                run.manifest.error = Some(e.to_string());
                run.manifest.partial = !run.manifest.artifacts.is_empty();
                let _ = run.write();
            }
            Err(e)
        }
    }
}

fn run_stages(
    cfg: &ExperimentConfig,
    pipeline: &PipelineConfig,
    run: &mut Run<'_>,
) -> Result<ExperimentOutcome> {
    let manifest = cfg.manifest.clone().ok_or_else(|| {
        Error::Config("no input manifest configured".into()).in_stage("ingest", "config")
    })?;
    let manifest_id = manifest.display().to_string();
    if !manifest.is_file() {
        return Err(Error::io(
            &manifest,
            std::io::Error::new(std::io::ErrorKind::NotFound, "manifest not found"),
        )
        .in_stage("ingest", manifest_id));
    }
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| {
        Error::io(&cfg.out_dir, e).in_stage("ingest", cfg.out_dir.display().to_string())
    })?;

    let build =
        build_dataset(&manifest, pipeline).map_err(|e| e.in_stage("features", &manifest_id))?;
    run.manifest.skipped = build.skipped.clone();
    let mut dataset = build.dataset;
    if let Task::OneVsOthers(target) = &cfg.task {
        dataset =
            binary_one_vs_others(&dataset, target).map_err(|e| e.in_stage("features", target))?;
    }
    run.manifest.dataset_rows = Some(dataset.len());
    dataset
        .write_csv(cfg.out_dir.join("dataset.csv"))
        .map_err(|e| e.in_stage("write", "dataset.csv"))?;
    run.record("dataset", "dataset.csv")?;

    let spec = cfg.classifier_spec();
    let model = spec
        .train(&dataset)
        .map_err(|e| e.in_stage("train", "dataset.csv"))?;
    model
        .save(cfg.out_dir.join("model.json"))
        .map_err(|e| e.in_stage("write", "model.json"))?;
    run.record("model", "model.json")?;

    let report = evaluate(&dataset, &spec, cfg.protocol, cfg.seed)
        .map_err(|e| e.in_stage("evaluate", "dataset.csv"))?;
    report
        .save(cfg.out_dir.join("report.json"))
        .map_err(|e| e.in_stage("write", "report.json"))?;
    run.record("report", "report.json")?;
    run.manifest.weighted_f = Some(report.weighted_f);

    Ok(ExperimentOutcome {
        report,
        dataset,
        model,
        out_dir: cfg.out_dir.clone(),
        run: run.manifest.clone(),
    })
}

/// Paired TF / MFCC runs on identical data and protocol.
#[derive(Debug, Clone)]
pub struct FeatureComparison {
    pub tf: ExperimentOutcome,
    pub mfcc: ExperimentOutcome,
    /// Tab-separated per-class F table with deltas (tf - mfcc).
    pub table: String,
}

/// Runs the experiment twice, with TF and with MFCC features, into
/// `out_dir/tf` and `out_dir/mfcc`, and writes `out_dir/compare.tsv`.
pub fn compare_feature_sets(cfg: &ExperimentConfig) -> Result<FeatureComparison> {
    let with = |mode: FeatureMode, sub: &str| ExperimentConfig {
        features: mode,
        out_dir: cfg.out_dir.join(sub),
        ..cfg.clone()
    };
    let tf = run_experiment(&with(FeatureMode::Tf, "tf"))?;
    let mfcc = run_experiment(&with(FeatureMode::Mfcc, "mfcc"))?;
    let mut table = String::from("class\tf_tf\tf_mfcc\tdelta\n");
    for (a, b) in tf.report.per_class.iter().zip(&mfcc.report.per_class) {
        table.push_str(&format!(
            "{}\t{:.4}\t{:.4}\t{:+.4}\n",
            a.label,
            a.f,
            b.f,
            a.f - b.f
        ));
    }
    for (name, a, b) in [
        ("weighted", tf.report.weighted_f, mfcc.report.weighted_f),
        ("macro", tf.report.macro_f, mfcc.report.macro_f),
    ] {
        table.push_str(&format!("{name}\t{a:.4}\t{b:.4}\t{:+.4}\n", a - b));
    }
    let path = cfg.out_dir.join("compare.tsv");
    std::fs::write(&path, &table)
        .map_err(|e| Error::io(&path, e).in_stage("write", "compare.tsv"))?;
    Ok(FeatureComparison { tf, mfcc, table })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeywordConfig {
    /// Keyword vocabulary; when empty, `keyword_fraction` of the words are
    /// drawn with the seed.
    pub keywords: Vec<String>,
    pub keyword_fraction: f64,
    /// Quantile of marginal-word confidences used as the threshold.
    pub quantile: f64,
    /// Share of keyword rows used for training.
    pub train_fraction: f64,
    /// Share of marginal rows used for threshold calibration; the rest
    /// measure false accepts.
    pub calibration_fraction: f64,
    pub seed: u64,
}

impl Default for KeywordConfig {
    fn default() -> Self {
        KeywordConfig {
            keywords: Vec::new(),
            keyword_fraction: 2.0 / 3.0,
            quantile: 0.95,
            train_fraction: 0.66,
            calibration_fraction: 0.5,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordReport {
    pub keywords: Vec<String>,
    pub marginals: Vec<String>,
    pub quantile: f64,
    pub threshold: f64,
    pub keyword_mean_confidence: f64,
    pub marginal_mean_confidence: f64,
    /// Held-out keyword segments accepted with the correct label.
    pub keyword_recall: f64,
    /// Accepted held-out keyword segments whose label is correct.
    pub keyword_precision: f64,
    /// Held-out marginal segments accepted as some keyword.
    pub marginal_false_accept_rate: f64,
    pub n_keyword_test: usize,
    pub n_marginal_calibration: usize,
    pub n_marginal_test: usize,
    pub keyword_confidences: Vec<f64>,
    pub marginal_confidences: Vec<f64>,
}

impl KeywordReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| Error::Internal(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn rows_for(ds: &LabeledDataset, idx: &[usize]) -> Result<LabeledDataset> {
    LabeledDataset::new(
        ds.feature_names().to_vec(),
        idx.iter().map(|&i| ds.rows()[i].clone()).collect(),
        idx.iter().map(|&i| ds.labels()[i].clone()).collect(),
        ds.meta().clone(),
    )
}

/// Trains on keyword words only, calibrates a confidence threshold on
/// marginal words and measures how well it separates the two on held-out
/// segments.
pub fn keyword_search(
    ds: &LabeledDataset,
    spec: &ClassifierSpec,
    cfg: &KeywordConfig,
) -> Result<KeywordReport> {
    let vocab = ds.vocab();
    let keywords: Vec<String> = if cfg.keywords.is_empty() {
        if !(cfg.keyword_fraction > 0.0 && cfg.keyword_fraction < 1.0) {
            return Err(Error::Config("keyword_fraction must be in (0, 1)".into()));
        }
        let k = ((vocab.len() as f64 * cfg.keyword_fraction).round() as usize)
            .clamp(1, vocab.len() - 1);
        let mut shuffled = vocab.to_vec();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
        let mut kw = shuffled[..k].to_vec();
        kw.sort();
        kw
    } else {
        let mut kw = cfg.keywords.clone();
        kw.sort();
        kw.dedup();
        if let Some(bad) = kw.iter().find(|k| !vocab.contains(k)) {
            return Err(Error::InvalidArgument(format!(
                "keyword `{bad}` is not in the dataset"
            )));
        }
        kw
    };
    let marginals: Vec<String> = vocab
        .iter()
        .filter(|v| !keywords.contains(v))
        .cloned()
        .collect();
    if marginals.is_empty() {
        return Err(Error::InvalidArgument(
            "every word is a keyword; nothing to calibrate on".into(),
        ));
    }
    let is_kw: Vec<bool> = ds.labels().iter().map(|l| keywords.contains(l)).collect();
    let kw_idx: Vec<usize> = (0..ds.len()).filter(|&i| is_kw[i]).collect();
    let mg_idx: Vec<usize> = (0..ds.len()).filter(|&i| !is_kw[i]).collect();

    let kw_ds = rows_for(ds, &kw_idx)?;
    let (train, test) = stratified_split(
        &kw_ds.label_indices(),
        kw_ds.vocab().len(),
        cfg.train_fraction,
        cfg.seed,
    )?;
    let model = spec.train(&kw_ds.subset(&train)?)?;

    let mg_ds = rows_for(ds, &mg_idx)?;
    let (calib, mg_test) = stratified_split(
        &mg_ds.label_indices(),
        mg_ds.vocab().len(),
        cfg.calibration_fraction,
        cfg.seed ^ 0x5DEE_CE66,
    )?;
    let predict = |d: &LabeledDataset, idx: &[usize]| -> Vec<Prediction> {
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| d.rows()[i].clone()).collect();
        predictions_for(&model, &rows)
    };
    let kw_preds = predict(&kw_ds, &test);
    let calib_conf: Vec<f64> = predict(&mg_ds, &calib)
        .iter()
        .map(|p| p.confidence)
        .collect();
    let mg_preds = predict(&mg_ds, &mg_test);
    let threshold = calibrate_threshold(&calib_conf, cfg.quantile)?;

    let accepted = |p: &Prediction| p.confidence >= threshold;
    let kw_correct_accepted = kw_preds
        .iter()
        .zip(&test)
        .filter(|(p, &i)| accepted(p) && p.label == kw_ds.labels()[i])
        .count();
    let kw_accepted = kw_preds.iter().filter(|p| accepted(p)).count();
    let mg_accepted = mg_preds.iter().filter(|p| accepted(p)).count();
    let kw_conf: Vec<f64> = kw_preds.iter().map(|p| p.confidence).collect();
    let mg_conf: Vec<f64> = mg_preds.iter().map(|p| p.confidence).collect();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(KeywordReport {
        keywords,
        marginals,
        quantile: cfg.quantile,
        threshold,
        keyword_mean_confidence: mean(&kw_conf),
        marginal_mean_confidence: mean(&mg_conf),
        keyword_recall: ratio(kw_correct_accepted, kw_preds.len()),
        keyword_precision: ratio(kw_correct_accepted, kw_accepted),
        marginal_false_accept_rate: ratio(mg_accepted, mg_preds.len()),
        n_keyword_test: kw_preds.len(),
        n_marginal_calibration: calib.len(),
        n_marginal_test: mg_preds.len(),
        keyword_confidences: sorted_copy(&kw_conf),
        marginal_confidences: sorted_copy(&mg_conf),
    })
}
