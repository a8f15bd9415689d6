use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use vibespeech_core::corpus::{generate_corpus, write_corpus};
use vibespeech_core::error::{Error, Result};
use vibespeech_core::experiment::{
    compare_feature_sets, keyword_search, run_experiment, ClassifierKind, ExperimentConfig,
    KeywordConfig, Protocol, Task,
};
use vibespeech_core::features::{
    build_dataset, write_manifest, FeatureMode, LabeledDataset, ManifestRow, SegmentMode,
};
use vibespeech_core::segment::{detect_speech_region, highpass_motion_filter, isolate_words};
use vibespeech_core::synth::{synthesize_trace, ResponseModel};
use vibespeech_core::trace::{
    load_audio, load_trace, save_trace, trim_protocol_edges, TraceFormat,
};

/// Accelerometer speech side-channel toolkit.
#[derive(Parser)]
#[command(name = "vibespeech", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn WAV recordings into accelerometer traces.
    Synth(SynthArgs),
    /// Find the speech region or isolate words in one trace.
    Segment(SegmentArgs),
    /// Build a feature dataset from a trace manifest.
    Features(FeaturesArgs),
    /// Train a classifier on a dataset file.
    Train(TrainArgs),
    /// Run a full experiment: features, training and evaluation.
    Eval(EvalArgs),
    /// Keyword search with a confidence threshold.
    Keywords(KeywordsArgs),
    /// Generate the synthetic corpus and run an experiment on it.
    Demo(DemoArgs),
}

/// Flags shared by every command; they override the config file.
#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment config (TOML, or a run.json from an earlier run).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long)]
    out: Option<PathBuf>,
    /// gender, speaker, word or ovo:<label>.
    #[arg(long)]
    task: Option<String>,
    /// tf or mfcc.
    #[arg(long)]
    features: Option<String>,
    /// forest, tree or logistic.
    #[arg(long)]
    classifier: Option<String>,
    /// cv10 or split66.
    #[arg(long)]
    protocol: Option<String>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(task) = &self.task {
            cfg.task = task.parse()?;
        }
        if let Some(f) = &self.features {
            cfg.features = match f.as_str() {
                "tf" => FeatureMode::Tf,
                "mfcc" => FeatureMode::Mfcc,
                _ => {
                    return Err(Error::Config(format!(
                        "unknown feature set `{f}` (expected tf or mfcc)"
                    )))
                }
            };
        }
        if let Some(c) = &self.classifier {
            cfg.classifier = c.parse::<ClassifierKind>()?;
        }
        if let Some(p) = &self.protocol {
            cfg.protocol = p.parse::<Protocol>()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Single WAV input; the trace goes to --out.
    #[arg(long, conflicts_with = "audio_dir")]
    audio: Option<PathBuf>,
    /// Directory of WAV files named `<label>[_<speaker>[_<gender>]]...`;
    /// traces go to the --out directory.
    #[arg(long, requires = "manifest")]
    audio_dir: Option<PathBuf>,
    /// Manifest written in batch mode.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Sensor sampling rate in Hz.
    #[arg(long)]
    rate: Option<f64>,
    /// Response band as `lo:hi` in Hz.
    #[arg(long)]
    band: Option<String>,
    #[arg(long)]
    volume: Option<f64>,
    /// Standard deviation of the sensor noise.
    #[arg(long)]
    noise: Option<f64>,
    /// Idle recording before and after playback, as `lead:trail` seconds.
    #[arg(long, default_value = "7:4")]
    idle: String,
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    trace: PathBuf,
    /// word or region.
    #[arg(long, default_value = "word")]
    mode: String,
    /// Seconds trimmed from head and tail first, as `head:tail`; defaults
    /// to the pipeline settings.
    #[arg(long)]
    trim: Option<String>,
    /// Sample rate for traces without a `sample_rate_hz` header.
    #[arg(long)]
    rate: Option<f64>,
    /// CSV of `start_idx,end_idx,start_s,end_s`, indices into the input trace.
    #[arg(long)]
    emit_bounds: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturesArgs {
    #[command(flatten)]
    common: Common,
    /// Trace manifest; overrides the config.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset CSV as written by `features`.
    #[arg(long)]
    dataset: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Run with both feature sets and write a comparison table.
    #[arg(long)]
    compare: bool,
}

#[derive(Args)]
struct KeywordsArgs {
    #[command(flatten)]
    common: Common,
    /// Word-labeled dataset CSV.
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated keywords; by default two thirds of the vocabulary
    /// are drawn with the seed.
    #[arg(long, value_delimiter = ',')]
    keywords: Vec<String>,
    /// Quantile of marginal-word confidences used as the threshold.
    #[arg(long, default_value_t = 0.95)]
    quantile: f64,
}

#[derive(Args)]
struct DemoArgs {
    #[command(flatten)]
    common: Common,
    /// Repetitions of each word per speaker; defaults to the config.
    #[arg(long)]
    reps: Option<usize>,
    /// Run with both feature sets and write a comparison table.
    #[arg(long)]
    compare: bool,
    /// Also run the keyword search on the word task.
    #[arg(long)]
    keywords: bool,
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("{what} must look like `a:b`, got `{s}`"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

fn require_out(common: &Common, what: &str) -> Result<PathBuf> {
    common
        .out
        .clone()
        .ok_or_else(|| Error::Config(format!("--out <{what}> is required")))
}

fn synth(args: &SynthArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let mut model = ResponseModel {
        seed: cfg.seed,
        ..cfg.corpus.model.clone()
    };
    if let Some(rate) = args.rate {
        model.sensor_rate_hz = rate;
    }
    if let Some(band) = &args.band {
        (model.band_lo_hz, model.band_hi_hz) = parse_pair(band, "--band")?;
    }
    if let Some(v) = args.volume {
        model.volume_gain = v;
    }
    if let Some(n) = args.noise {
        model.noise_sigma = n;
    }
    model.validate()?;
    let (lead, trail) = parse_pair(&args.idle, "--idle")?;
    let out = require_out(&args.common, "path")?;

    if let Some(audio) = &args.audio {
        let clip = load_audio(audio)?;
        let trace = synthesize_trace(&clip, &model, lead, trail)?
            .with_meta("source", audio.display().to_string());
        save_trace(&trace, &out, TraceFormat::from_path(&out))?;
        println!(
            "{} samples at {} Hz -> {}",
            trace.len(),
            trace.sample_rate_hz(),
            out.display()
        );
        return Ok(());
    }
    let Some(dir) = &args.audio_dir else {
        return Err(Error::Config(
            "either --audio or --audio-dir is required".into(),
        ));
    };
    let manifest = args.manifest.as_ref().expect("clap enforces --manifest");
    let mut wavs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    wavs.sort();
    if wavs.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "no .wav files in {}",
            dir.display()
        )));
    }
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let manifest_dir = manifest.parent().unwrap_or(Path::new(""));
    let rows = wavs
        .par_iter()
        .enumerate()
        .map(|(i, wav)| {
            let clip = load_audio(wav)?;
            let model = ResponseModel {
                seed: model.seed.wrapping_add(i as u64),
                ..model.clone()
            };
            let trace = synthesize_trace(&clip, &model, lead, trail)?;
            let stem = wav
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            let path = out.join(format!("{stem}.csv"));
            save_trace(&trace, &path, TraceFormat::Csv)?;
            let mut parts = stem.split('_').map(str::to_string);
            let label = parts.next().unwrap_or_default();
            let trace_path = pathdiff(&path, manifest_dir);
            Ok(ManifestRow {
                trace_path,
                label,
                speaker: parts.next(),
                gender: parts.next(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_manifest(&rows, manifest)?;
    println!(
        "{} traces -> {}, manifest {}",
        rows.len(),
        out.display(),
        manifest.display()
    );
    Ok(())
}

/// `path` relative to `base` when it lies below it, else absolute.
fn pathdiff(path: &Path, base: &Path) -> PathBuf {
    let abs = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let (p, b) = (
        abs(path),
        abs(if base.as_os_str().is_empty() {
            Path::new(".")
        } else {
            base
        }),
    );
    p.strip_prefix(&b).map(Path::to_path_buf).unwrap_or(p)
}

fn segment(args: &SegmentArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let pipeline = cfg.pipeline_config();
    let trace = load_trace(&args.trace, TraceFormat::from_path(&args.trace), args.rate)?;
    let (head, tail) = match &args.trim {
        Some(t) => parse_pair(t, "--trim")?,
        None => (pipeline.trim_head_s, pipeline.trim_tail_s),
    };
    let trimmed = trim_protocol_edges(&trace, head, tail)?;
    let offset = trace.t().partition_point(|&t| t < trimmed.t()[0]);
    let filtered = highpass_motion_filter(&trimmed, pipeline.highpass_cutoff_hz)?;
    let mode = match args.mode.as_str() {
        "word" => SegmentMode::Word,
        "region" => SegmentMode::Region,
        m => {
            return Err(Error::Config(format!(
                "unknown mode `{m}` (expected word or region)"
            )))
        }
    };
    let segments = match mode {
        SegmentMode::Word => isolate_words(&filtered, &pipeline.isolation)?,
        SegmentMode::Region => {
            let seg = detect_speech_region(&filtered, &pipeline.region)?;
            if !seg.is_speech(pipeline.region.min_peak_ratio) {
                eprintln!(
                    "warning: peak ratio {:.2} below {}; no speech found",
                    seg.peak_ratio, pipeline.region.min_peak_ratio
                );
            }
            vec![seg]
        }
    };
    let mut text = String::from("start_idx,end_idx,start_s,end_s\n");
    for s in &segments {
        let (a, b) = (s.start_idx + offset, s.end_idx + offset);
        let t = trace.t();
        let end_s = if b < t.len() {
            t[b]
        } else {
            t[t.len() - 1] + 1.0 / trace.sample_rate_hz()
        };
        text.push_str(&format!("{a},{b},{},{end_s}\n", t[a]));
    }
    match &args.emit_bounds {
        Some(path) => {
            fs::write(path, &text).map_err(|e| Error::io(path, e))?;
            println!("{} segments -> {}", segments.len(), path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn features(args: &FeaturesArgs) -> Result<()> {
    let mut cfg = args.common.config()?;
    if let Some(m) = &args.manifest {
        cfg.manifest = Some(m.clone());
    }
    let manifest = cfg
        .manifest
        .clone()
        .ok_or_else(|| Error::Config("--manifest is required".into()))?;
    let out = require_out(&args.common, "dataset.csv")?;
    let build = build_dataset(&manifest, &cfg.pipeline_config())?;
    for skip in &build.skipped {
        eprintln!("skipped {}: {}", skip.source, skip.reason);
    }
    build.dataset.write_csv(&out)?;
    println!(
        "{} rows x {} features ({} classes) -> {}",
        build.dataset.len(),
        build.dataset.n_features(),
        build.dataset.vocab().len(),
        out.display()
    );
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let out = require_out(&args.common, "model.json")?;
    let ds = LabeledDataset::read_csv(&args.dataset)?;
    let model = cfg.classifier_spec().train(&ds)?;
    model.save(&out)?;
    println!(
        "{} model on {} rows -> {}",
        model.kind(),
        ds.len(),
        out.display()
    );
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let mut cfg = args.common.config()?;
    if let Some(m) = &args.manifest {
        cfg.manifest = Some(m.clone());
    }
    run_and_print(&cfg, args.compare)
}

fn run_and_print(cfg: &ExperimentConfig, compare: bool) -> Result<()> {
    if compare {
        let cmp = compare_feature_sets(cfg)?;
        print!("{}", cmp.table);
        return Ok(());
    }
    let outcome = run_experiment(cfg)?;
    let r = &outcome.report;
    println!(
        "{} {} {} on {} rows: weighted F {:.4}, macro F {:.4}, accuracy {:.4}",
        cfg.task, r.classifier, r.protocol, r.n_rows, r.weighted_f, r.macro_f, r.accuracy
    );
    println!("report: {}", outcome.out_dir.join("report.json").display());
    Ok(())
}

fn keywords(args: &KeywordsArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let ds = LabeledDataset::read_csv(&args.dataset)?;
    let kcfg = KeywordConfig {
        keywords: args.keywords.clone(),
        quantile: args.quantile,
        seed: cfg.seed,
        ..KeywordConfig::default()
    };
    let report = keyword_search(&ds, &cfg.classifier_spec(), &kcfg)?;
    print_keywords(&report);
    if let Some(out) = &args.common.out {
        report.save(out)?;
    }
    Ok(())
}

fn print_keywords(r: &vibespeech_core::experiment::KeywordReport) {
    println!("keywords: {}", r.keywords.join(","));
    println!(
        "threshold {:.4} (q={}), mean confidence keyword {:.4} / marginal {:.4}",
        r.threshold, r.quantile, r.keyword_mean_confidence, r.marginal_mean_confidence
    );
    println!(
        "keyword recall {:.4}, precision {:.4}, marginal false accepts {:.4}",
        r.keyword_recall, r.keyword_precision, r.marginal_false_accept_rate
    );
}

fn demo(args: &DemoArgs) -> Result<()> {
    let mut cfg = args.common.config()?;
    if args.common.task.is_none() && args.common.config.is_none() {
        cfg.task = Task::Speaker;
    }
    if let Some(reps) = args.reps {
        cfg.corpus.repetitions = reps;
    }
    let root = cfg.out_dir.clone();
    let corpus = generate_corpus(&cfg.corpus)?;
    let manifest = write_corpus(&corpus, root.join("corpus"))?;
    println!("{} utterances -> {}", corpus.len(), manifest.display());
    cfg.manifest = Some(manifest);
    cfg.out_dir = root.join("run");
    run_and_print(&cfg, args.compare)?;
    if args.keywords {
        let word = ExperimentConfig {
            task: Task::Word,
            out_dir: root.join("keywords"),
            ..cfg.clone()
        };
        let build = build_dataset(
            word.manifest.as_ref().expect("set above"),
            &word.pipeline_config(),
        )?;
        let kcfg = KeywordConfig {
            seed: cfg.seed,
            ..KeywordConfig::default()
        };
        let report = keyword_search(&build.dataset, &word.classifier_spec(), &kcfg)?;
        print_keywords(&report);
        fs::create_dir_all(&word.out_dir).map_err(|e| Error::io(&word.out_dir, e))?;
        report.save(word.out_dir.join("keywords.json"))?;
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("VIBESPEECH_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!(
            "VIBESPEECH_THREADS must be a positive integer, got `{v}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Internal(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Segment(a) => segment(a),
        Command::Features(a) => features(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Keywords(a) => keywords(a),
        Command::Demo(a) => demo(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
