//! Finite-difference check of the hand-written backward pass.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::batch::{encode_batch, EncodedBatch, Example};
use super::config::ModelConfig;
use super::network::{DiacriticModel, Mode};
use super::vocab::Vocabulary;
use super::ModelError;
use crate::asr_sim::TOY_LETTERS;
use crate::seeding::rng_for;
use crate::text::{apply_labels, DiacriticLabel, LabeledText};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    /// Analytic and numeric derivative at the worst parameter.
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub n_checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn random_gold<R: Rng>(rng: &mut R, len: usize) -> String {
    let base: Vec<char> =
        (0..len).map(|i| if i == 2 { ' ' } else { *TOY_LETTERS.choose(rng).expect("letters") }).collect();
    let labels = base
        .iter()
        .map(|&c| if c == ' ' { DiacriticLabel::None } else { *DiacriticLabel::ALL.choose(rng).expect("labels") })
        .collect();
    apply_labels(&LabeledText::new(base, labels).expect("valid by construction"))
}

/// A tiny batch of three rows with different text and ASR lengths; one
/// position of the first row is left out of the loss.
fn tiny_batch(cfg: &ModelConfig, seed: u64) -> Result<(Vocabulary, EncodedBatch), ModelError> {
    let mut rng = rng_for(seed, &[7]);
    let examples: Vec<Example> = [5usize, 3, 4]
        .iter()
        .enumerate()
        .map(|(i, &len)| {
            let gold = random_gold(&mut rng, len.min(cfg.max_len_text));
            let raw = crate::text::remove_diacritics(&gold);
            let asr = random_gold(&mut rng, (len + i).min(cfg.max_len_asr));
            Example { raw, asr, gold }
        })
        .collect();
    let vocab = Vocabulary::build(examples.iter().map(|e| (e.raw.as_str(), Some(e.asr.as_str()))))?;
    let mut batch = encode_batch(&examples, &vocab, cfg)?;
    batch.loss_mask[0] = false;
    Ok((vocab, batch))
}

/// Compares analytic gradients against central differences
/// `(f(p + eps) - f(p - eps)) / 2 eps` for every parameter, in double
/// precision with dropout off.
pub fn grad_check(cfg: &ModelConfig, eps: f64, seed: u64) -> Result<GradCheckReport, ModelError> {
    if cfg.d_model > 8 {
        return Err(ModelError::Config(format!("grad_check needs d_model <= 8, got {}", cfg.d_model)));
    }
    let (vocab, batch) = tiny_batch(cfg, seed)?;
    let mut model = DiacriticModel::<f64>::new(cfg.clone(), vocab, seed)?;
    // Zero-initialised biases put ReLU inputs exactly on the kink whenever a
    // whole input row is zero, where the two one-sided derivatives differ.
    // Jitter every parameter so the check runs at a differentiable point.
    let mut rng = rng_for(seed, &[8]);
    for p in model.params_mut() {
        *p += rng.gen_range(-0.1..0.1);
    }
    let (_, analytic) = model.loss_and_gradient(&batch, Mode::Eval, usize::MAX)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        n_checked: 0,
    };
    for i in 0..model.num_parameters() {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + eps;
        let up = model.batch_loss(&batch, Mode::Eval)?;
        model.params_mut()[i] = orig - eps;
        let down = model.batch_loss(&batch, Mode::Eval)?;
        model.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || report.worst_param.is_empty() {
            report.max_rel_error = err;
            report.worst_param = format!("{}[{}]", model.param_name_at(i), i);
            report.worst_analytic = analytic[i];
            report.worst_numeric = numeric;
        }
        report.n_checked += 1;
    }
    Ok(report)
}
