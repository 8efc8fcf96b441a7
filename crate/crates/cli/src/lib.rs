//! Command implementations behind the `diacritize` binary. Every command
//! writes its outputs plus a `<output>.manifest.json` run record.

pub mod args;
pub mod report;
pub mod tsv;

use std::path::{Path, PathBuf};

use diacritize::asr_sim::{corrupt_line, generate_toy_corpus, NoiseConfig, SimError, ToyCorpusConfig, ToyPair};
use diacritize::inference::{
    export_attention, predict_truncated, sliding_window_predict, InferenceConfig, InferenceError,
};
use diacritize::metrics::{cer, der, wer, DerReport, EditStats};
use diacritize::model::{
    grad_check, load_checkpoint, save_checkpoint, train, AttentionMap, GradCheckReport, ModelConfig, ModelError,
    TrainConfig, TrainHistory,
};
use diacritize::seeding::derive_seed;
use diacritize::text::{apply_labels, strip_diacritics, validate_diacritized};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use report::{metrics_report, write_json, Manifest};
use tsv::{format_tsv, read_tsv, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {reason}", path.display())]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("row {row}, field {field}: fields may not contain tabs or newlines")]
    BadField { row: usize, field: usize },
    #[error("{}: multimodal model needs an ASR column", path.display())]
    MissingAsrColumn { path: PathBuf },
    #[error("{}:{line}: invalid diacritized text: {violations}", path.display())]
    InvalidGold { path: PathBuf, line: usize, violations: String },
    #[error("{predictions} prediction lines but {gold} gold lines")]
    LineCountMismatch { predictions: usize, gold: usize },
    #[error("line {line}: prediction and gold differ in their undiacritized text")]
    BaseMismatch { line: usize },
    #[error("line {line}: {source}")]
    Inference { line: usize, source: InferenceError },
    #[error(transparent)]
    Export(InferenceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("configuration: {0}")]
    Config(String),
}

/// Optional config file; each section overrides the built-in defaults and
/// is in turn overridden by command-line flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<ModelConfig>,
    pub train: Option<TrainConfig>,
    pub inference: Option<InferenceConfig>,
    pub noise: Option<NoiseConfig>,
    pub toy: Option<ToyCorpusConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_owned(), source: e })?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io { path: path.to_owned(), source: e })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainOptions {
    pub train: PathBuf,
    pub dev: PathBuf,
    /// Checkpoint path; the history goes to `<output>.history.json`.
    pub output: PathBuf,
    pub model: ModelConfig,
    pub train_cfg: TrainConfig,
}

/// Per-epoch history as metrics-report documents.
pub fn history_document(h: &TrainHistory) -> Value {
    let epochs: Vec<Value> = h
        .epochs
        .iter()
        .map(|e| json!({ "epoch": e.epoch, "train_loss": e.train_loss, "dev": metrics_report(&e.dev_der, None) }))
        .collect();
    json!({ "best_epoch": h.best_epoch, "epochs": epochs })
}

pub fn cmd_train(o: &TrainOptions) -> Result<TrainHistory, CliError> {
    let mut manifest = Manifest::start("train", o);
    let need_asr = o.model.multimodal;
    let train_set = read_tsv(&o.train)?.examples(need_asr)?;
    let dev_set = read_tsv(&o.dev)?.examples(need_asr)?;
    manifest.input(&o.train)?;
    manifest.input(&o.dev)?;
    let (model, history) = train::<f32>(&train_set, &dev_set, &o.model, &o.train_cfg)?;
    save_checkpoint(&model, Some(&history), &o.output)?;
    let hist_path = with_suffix(&o.output, ".history.json");
    write_json(&hist_path, &history_document(&history))?;
    manifest.output(&o.output)?;
    manifest.output(&hist_path)?;
    manifest.finish(&o.output)?;
    Ok(history)
}

#[derive(Clone, Debug, Serialize)]
pub struct PredictOptions {
    pub checkpoint: PathBuf,
    pub input: PathBuf,
    pub output: PathBuf,
    pub inference: InferenceConfig,
    /// Predict on the first `max_len_text` characters only instead of
    /// windowing (for ablations).
    pub direct: bool,
}

/// Diacritized output lines, one per input line.
pub fn predict_lines(o: &PredictOptions) -> Result<Vec<String>, CliError> {
    let model = load_checkpoint(&o.checkpoint)?.model;
    let multimodal = model.config().multimodal;
    if !o.direct {
        o.inference.validate(model.config().max_len_text).map_err(CliError::Export)?;
    }
    let inputs = read_tsv(&o.input)?.prediction_inputs(multimodal)?;
    inputs
        .par_iter()
        .enumerate()
        .map(|(i, (raw, asr))| {
            let asr = if multimodal { asr.as_deref() } else { None };
            let lt = if o.direct {
                predict_truncated(&model, raw, asr)
            } else {
                sliding_window_predict(&model, raw, asr, &o.inference)
            };
            lt.map(|lt| apply_labels(&lt)).map_err(|source| CliError::Inference { line: i + 1, source })
        })
        .collect()
}

pub fn cmd_predict(o: &PredictOptions) -> Result<usize, CliError> {
    let mut manifest = Manifest::start("predict", o);
    manifest.input(&o.checkpoint)?;
    manifest.input(&o.input)?;
    let lines = predict_lines(o)?;
    let rows: Vec<Vec<&String>> = lines.iter().map(|l| vec![l]).collect();
    write_text(&o.output, &format_tsv(&rows)?)?;
    manifest.output(&o.output)?;
    manifest.finish(&o.output)?;
    Ok(lines.len())
}

#[derive(Clone, Debug, Serialize)]
pub struct EvaluateOptions {
    /// One diacritized line per utterance.
    pub predictions: PathBuf,
    /// TSV whose last column is the gold text; a three-column file also
    /// yields CER / WER of its ASR column.
    pub gold: PathBuf,
    pub output: Option<PathBuf>,
    pub per_line: bool,
}

/// Pooled DER over aligned prediction / gold lines, plus CER / WER of the
/// ASR column when the gold file has one.
pub fn evaluate_tables(pred: &Table, gold: &Table, per_line: bool) -> Result<Value, CliError> {
    let golds = gold.gold_column()?;
    if pred.rows.len() != golds.len() {
        return Err(CliError::LineCountMismatch { predictions: pred.rows.len(), gold: golds.len() });
    }
    let mut total = DerReport::default();
    let mut lines = Vec::new();
    for (i, (row, g)) in pred.rows.iter().zip(&golds).enumerate() {
        let line = i + 1;
        let p = row.join("\t");
        let violations = validate_diacritized(&p);
        if !violations.is_empty() {
            return Err(CliError::InvalidGold {
                path: pred.path.clone(),
                line,
                violations: violations.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "),
            });
        }
        let p = strip_diacritics(&p).expect("validated");
        let g = strip_diacritics(g).expect("validated");
        let r = der(&p, &g).map_err(|_| CliError::BaseMismatch { line })?;
        if per_line {
            let mut doc = report::der_report(&r);
            doc.insert("line".into(), json!(line));
            lines.push(Value::Object(doc));
        }
        total += r;
    }
    let asr = (gold.columns == 3).then(|| {
        let mut c = EditStats::default();
        let mut w = EditStats::default();
        for (row, g) in gold.rows.iter().zip(&golds) {
            c += cer(&row[1], g);
            w += wer(&row[1], g);
        }
        (c, w)
    });
    let mut doc = metrics_report(&total, asr.as_ref().map(|(c, w)| (c, w)));
    doc["lines"] = json!(golds.len());
    if per_line {
        doc["per_line"] = Value::Array(lines);
    }
    Ok(doc)
}

pub fn cmd_evaluate(o: &EvaluateOptions) -> Result<Value, CliError> {
    let mut manifest = Manifest::start("evaluate", o);
    let doc = evaluate_tables(&read_tsv(&o.predictions)?, &read_tsv(&o.gold)?, o.per_line)?;
    if let Some(out) = &o.output {
        manifest.input(&o.predictions)?;
        manifest.input(&o.gold)?;
        write_json(out, &doc)?;
        manifest.output(out)?;
        manifest.finish(out)?;
    }
    Ok(doc)
}

#[derive(Clone, Debug, Serialize)]
pub struct CorruptOptions {
    /// TSV whose last column is the gold text.
    pub input: PathBuf,
    /// `raw, asr, gold` TSV.
    pub output: PathBuf,
    pub noise: NoiseConfig,
}

/// `raw, asr, gold` rows for `golds`, line `i` using noise stream `i`.
pub fn corrupt_rows(golds: &[String], noise: &NoiseConfig) -> Result<(Vec<Vec<String>>, EditStats), CliError> {
    let results = golds
        .par_iter()
        .enumerate()
        .map(|(i, g)| corrupt_line(g, noise, i as u64))
        .collect::<Result<Vec<_>, _>>()?;
    let mut pooled = EditStats::default();
    let rows = golds
        .iter()
        .zip(results)
        .map(|(g, (hyp, stats))| {
            pooled += stats;
            let raw = strip_diacritics(g).expect("validated").base_string();
            vec![raw, hyp, g.clone()]
        })
        .collect();
    Ok((rows, pooled))
}

pub fn cmd_corrupt(o: &CorruptOptions) -> Result<EditStats, CliError> {
    o.noise.validate()?;
    let mut manifest = Manifest::start("corrupt", o);
    manifest.input(&o.input)?;
    let golds = read_tsv(&o.input)?.gold_column()?;
    let (rows, pooled) = corrupt_rows(&golds, &o.noise)?;
    write_text(&o.output, &format_tsv(&rows)?)?;
    manifest.output(&o.output)?;
    manifest.finish(&o.output)?;
    Ok(pooled)
}

#[derive(Clone, Debug, Serialize)]
pub struct GenToyOptions {
    pub output_dir: PathBuf,
    pub toy: ToyCorpusConfig,
    /// Base noise config; split `s` (0 train, 1 dev, 2 test) uses seed
    /// `derive_seed(noise.seed, [s])`.
    pub noise: NoiseConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenToySummary {
    pub text_only_floor: f64,
    pub split_noise_seeds: [u64; 3],
    pub asr_cer: [Option<f64>; 3],
}

pub const SPLITS: [&str; 3] = ["train", "dev", "test"];

pub fn cmd_gen_toy(o: &GenToyOptions) -> Result<GenToySummary, CliError> {
    o.noise.validate()?;
    let corpus = generate_toy_corpus(&o.toy)?;
    std::fs::create_dir_all(&o.output_dir).map_err(|e| CliError::Io { path: o.output_dir.clone(), source: e })?;
    let mut manifest = Manifest::start("gen-toy", o);
    let splits: [&[ToyPair]; 3] = [&corpus.train, &corpus.dev, &corpus.test];
    let mut summary =
        GenToySummary { text_only_floor: corpus.text_only_floor(), split_noise_seeds: [0; 3], asr_cer: [None; 3] };
    for (s, pairs) in splits.iter().enumerate() {
        let noise = NoiseConfig { seed: derive_seed(o.noise.seed, &[s as u64]), ..o.noise.clone() };
        let golds: Vec<String> = pairs.iter().map(|p| p.gold.clone()).collect();
        let (rows, pooled) = corrupt_rows(&golds, &noise)?;
        let path = o.output_dir.join(format!("{}.tsv", SPLITS[s]));
        write_text(&path, &format_tsv(&rows)?)?;
        manifest.output(&path)?;
        summary.split_noise_seeds[s] = noise.seed;
        summary.asr_cer[s] = pooled.rate();
    }
    let summary_path = o.output_dir.join("summary.json");
    write_json(&summary_path, &serde_json::to_value(&summary).expect("summary serializes"))?;
    manifest.output(&summary_path)?;
    manifest.finish(&o.output_dir.join("corpus"))?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckOptions {
    pub model: ModelConfig,
    pub eps: f64,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

/// Small architecture used by `grad-check` unless overridden.
pub fn grad_check_model() -> ModelConfig {
    ModelConfig { d_model: 8, n_heads: 2, ff_dim: 8, max_len_text: 12, max_len_asr: 16, ..ModelConfig::default() }
}

pub fn cmd_grad_check(o: &GradCheckOptions) -> Result<GradCheckReport, CliError> {
    let report = grad_check(&o.model, o.eps, o.seed)?;
    if let Some(out) = &o.output {
        let mut manifest = Manifest::start("grad-check", o);
        write_json(out, &serde_json::to_value(&report).expect("report serializes"))?;
        manifest.output(out)?;
        manifest.finish(out)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExportOptions {
    pub checkpoint: PathBuf,
    pub raw: String,
    pub asr: String,
    pub output: PathBuf,
}

pub fn cmd_export_attention(o: &ExportOptions) -> Result<AttentionMap, CliError> {
    let mut manifest = Manifest::start("export-attention", o);
    manifest.input(&o.checkpoint)?;
    let model = load_checkpoint(&o.checkpoint)?.model;
    let map = export_attention(&model, &o.raw, &o.asr, &o.output).map_err(CliError::Export)?;
    manifest.output(&o.output)?;
    manifest.finish(&o.output)?;
    Ok(map)
}
