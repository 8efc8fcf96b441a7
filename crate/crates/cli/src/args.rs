//! Command-line surface. Flags override the optional `--config` TOML file,
//! which overrides the built-in defaults.

use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use diacritize::asr_sim::{NoiseConfig, ToyCorpusConfig};
use diacritize::inference::InferenceConfig;
use diacritize::model::{Backbone, ModelConfig, TrainConfig};

use crate::{
    grad_check_model, CliError, CorruptOptions, EvaluateOptions, ExportOptions, FileConfig, GenToyOptions,
    GradCheckOptions, PredictOptions, TrainOptions,
};

#[derive(Debug, Parser)]
#[command(name = "diacritize", version, about = "Arabic diacritic restoration with ASR-hypothesis fusion")]
pub struct Cli {
    /// TOML file with [model], [train], [inference], [noise] and [toy] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write the best-dev checkpoint.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        train_flags: TrainFlags,
    },
    /// Diacritize a TSV of raw lines (optionally with an ASR column).
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        inference: InferenceFlags,
        /// Predict the first max_len_text characters in one pass instead of
        /// using the sliding window.
        #[arg(long)]
        direct: bool,
    },
    /// Score predictions against gold; prints the metrics report.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Include per-line DER entries.
        #[arg(long)]
        per_line: bool,
    },
    /// Generate synthetic ASR hypotheses from gold text.
    Corrupt {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        noise: NoiseFlags,
    },
    /// Generate the ambiguous toy corpus with synthetic ASR.
    GenToy {
        #[arg(long, short)]
        output_dir: PathBuf,
        #[command(flatten)]
        toy: ToyFlags,
        #[command(flatten)]
        noise: NoiseFlags,
    },
    /// Compare analytic and finite-difference gradients on a small model.
    GradCheck {
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fail when the maximum relative error reaches this value.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        model: ModelFlags,
    },
    /// Write the cross-attention weights of one utterance.
    ExportAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        raw: String,
        #[arg(long)]
        asr: String,
        #[arg(long, short)]
        output: PathBuf,
    },
}

#[derive(Debug, Default, Args)]
pub struct ModelFlags {
    #[arg(long, value_parser = parse_backbone)]
    pub backbone: Option<Backbone>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub n_heads: Option<usize>,
    #[arg(long)]
    pub n_blocks: Option<usize>,
    #[arg(long)]
    pub ff_dim: Option<usize>,
    /// Dropout of the selected backbone.
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub lstm_layers: Option<usize>,
    #[arg(long)]
    pub dense_layers: Option<usize>,
    #[arg(long, action = ArgAction::Set)]
    pub fuse_concat: Option<bool>,
    /// Also sets max_len_asr to twice this unless that is given.
    #[arg(long)]
    pub max_len_text: Option<usize>,
    #[arg(long)]
    pub max_len_asr: Option<usize>,
    /// `false` trains the Text-Only model.
    #[arg(long, action = ArgAction::Set)]
    pub multimodal: Option<bool>,
}

fn parse_backbone(s: &str) -> Result<Backbone, String> {
    match s {
        "transformer" => Ok(Backbone::Transformer),
        "lstm" => Ok(Backbone::Lstm),
        _ => Err(format!("unknown backbone {s:?}; expected transformer or lstm")),
    }
}

impl ModelFlags {
    pub fn apply(&self, mut c: ModelConfig) -> ModelConfig {
        if let Some(v) = self.backbone {
            c.backbone = v;
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(d_model, n_heads, n_blocks, ff_dim, lstm_layers, dense_layers, fuse_concat, multimodal);
        if let Some(p) = self.dropout {
            match c.backbone {
                Backbone::Transformer => c.dropout_transformer = p,
                Backbone::Lstm => c.dropout_lstm = p,
            }
        }
        if let Some(v) = self.max_len_text {
            c.max_len_text = v;
            c.max_len_asr = 2 * v;
        }
        if let Some(v) = self.max_len_asr {
            c.max_len_asr = v;
        }
        c
    }
}

#[derive(Debug, Default, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub shard_size: Option<usize>,
}

impl TrainFlags {
    pub fn apply(&self, mut c: TrainConfig) -> TrainConfig {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(epochs, batch_size, learning_rate, seed, shard_size);
        c
    }
}

#[derive(Debug, Default, Args)]
pub struct InferenceFlags {
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub buffer: Option<usize>,
}

impl InferenceFlags {
    pub fn apply(&self, mut c: InferenceConfig) -> InferenceConfig {
        if let Some(v) = self.window {
            c.window = v;
        }
        if let Some(v) = self.buffer {
            c.buffer = v;
        }
        c
    }
}

#[derive(Debug, Default, Args)]
pub struct NoiseFlags {
    #[arg(long)]
    pub p_sub: Option<f64>,
    #[arg(long)]
    pub p_del: Option<f64>,
    #[arg(long)]
    pub p_ins: Option<f64>,
    #[arg(long, action = ArgAction::Set)]
    pub class_preserving: Option<bool>,
    #[arg(long)]
    pub noise_seed: Option<u64>,
}

impl NoiseFlags {
    pub fn apply(&self, mut c: NoiseConfig) -> NoiseConfig {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(p_sub, p_del, p_ins, class_preserving);
        if let Some(v) = self.noise_seed {
            c.seed = v;
        }
        c
    }
}

#[derive(Debug, Default, Args)]
pub struct ToyFlags {
    #[arg(long)]
    pub lexicon_size: Option<usize>,
    #[arg(long)]
    pub ambiguity_fraction: Option<f64>,
    #[arg(long)]
    pub sentence_length: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_dev: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub toy_seed: Option<u64>,
}

impl ToyFlags {
    pub fn apply(&self, mut c: ToyCorpusConfig) -> ToyCorpusConfig {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(lexicon_size, ambiguity_fraction, sentence_length, n_train, n_dev, n_test);
        if let Some(v) = self.toy_seed {
            c.seed = v;
        }
        c
    }
}

/// A fully resolved command.
#[derive(Debug)]
pub enum Resolved {
    Train(TrainOptions),
    Predict(PredictOptions),
    Evaluate(EvaluateOptions),
    Corrupt(CorruptOptions),
    GenToy(GenToyOptions),
    GradCheck(GradCheckOptions, f64),
    ExportAttention(ExportOptions),
}

impl Cli {
    pub fn resolve(self) -> Result<Resolved, CliError> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        Ok(match self.command {
            Command::Train { train, dev, output, model, train_flags } => Resolved::Train(TrainOptions {
                train,
                dev,
                output,
                model: model.apply(file.model.unwrap_or_default()),
                train_cfg: train_flags.apply(file.train.unwrap_or_default()),
            }),
            Command::Predict { checkpoint, input, output, inference, direct } => Resolved::Predict(PredictOptions {
                checkpoint,
                input,
                output,
                inference: inference.apply(file.inference.unwrap_or_default()),
                direct,
            }),
            Command::Evaluate { predictions, gold, output, per_line } => {
                Resolved::Evaluate(EvaluateOptions { predictions, gold, output, per_line })
            }
            Command::Corrupt { input, output, noise } => Resolved::Corrupt(CorruptOptions {
                input,
                output,
                noise: noise.apply(file.noise.unwrap_or_default()),
            }),
            Command::GenToy { output_dir, toy, noise } => Resolved::GenToy(GenToyOptions {
                output_dir,
                toy: toy.apply(file.toy.unwrap_or_default()),
                noise: noise.apply(file.noise.unwrap_or_default()),
            }),
            Command::GradCheck { eps, seed, tolerance, output, model } => Resolved::GradCheck(
                GradCheckOptions { model: model.apply(file.model.unwrap_or_else(grad_check_model)), eps, seed, output },
                tolerance,
            ),
            Command::ExportAttention { checkpoint, raw, asr, output } => {
                Resolved::ExportAttention(ExportOptions { checkpoint, raw, asr, output })
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(&cfg, "[model]\nd_model = 32\nn_heads = 2\n[train]\nepochs = 3\n").unwrap();
        let cli = Cli::parse_from([
            "diacritize",
            "--config",
            cfg.to_str().unwrap(),
            "train",
            "--train",
            "a.tsv",
            "--dev",
            "b.tsv",
            "-o",
            "m.ckpt",
            "--epochs",
            "7",
            "--fuse-concat",
            "false",
        ]);
        let Resolved::Train(o) = cli.resolve().unwrap() else { panic!("expected train") };
        assert_eq!(o.model.d_model, 32);
        assert_eq!(o.model.n_heads, 2);
        assert!(!o.model.fuse_concat);
        assert_eq!(o.train_cfg.epochs, 7);
        assert_eq!(o.train_cfg.batch_size, 32);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(&cfg, "[modle]\nd_model = 32\n").unwrap();
        let cli = Cli::parse_from(["diacritize", "--config", cfg.to_str().unwrap(), "gen-toy", "-o", "x"]);
        assert!(matches!(cli.resolve(), Err(CliError::Config(_))));
    }

    #[test]
    fn grad_check_defaults_to_a_small_model() {
        let cli = Cli::parse_from(["diacritize", "grad-check", "--backbone", "transformer"]);
        let Resolved::GradCheck(o, tol) = cli.resolve().unwrap() else { panic!("expected grad-check") };
        assert_eq!(o.model.d_model, 8);
        assert_eq!(o.model.backbone, Backbone::Transformer);
        assert_eq!(tol, 1e-4);
    }
}
