//! Synthetic stand-in for a diacritized ASR system, plus a toy corpus whose
//! diacritization is partly unpredictable from text alone.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{cer, EditStats};
use crate::seeding::rng_for;
use crate::text::{
    canonicalize,
    apply_labels, is_arabic_letter, is_diacritic, repair_diacritized, strip_diacritics,
    validate_diacritized, DiacriticLabel, LabeledText, TextError, DIACRITICS,
};

/// The 28 letters of the basic Arabic alphabet.
pub const ALPHABET: [char; 28] = [
    'ا', 'ب', 'ت', 'ث', 'ج', 'ح', 'خ', 'د', 'ذ', 'ر', 'ز', 'س', 'ش', 'ص', 'ض', 'ط', 'ظ', 'ع', 'غ', 'ف',
    'ق', 'ك', 'ل', 'م', 'ن', 'ه', 'و', 'ي',
];

const SEPARATORS: [char; 5] = [' ', '.', '،', '؛', '؟'];

/// Letters used for toy word shapes.
pub const TOY_LETTERS: [char; 20] = [
    'ب', 'ت', 'ث', 'ج', 'ح', 'خ', 'د', 'ذ', 'ر', 'ز', 'س', 'ش', 'ص', 'ض', 'ط', 'ع', 'ف', 'ق', 'ل', 'م',
];

const INNER_LABELS: [DiacriticLabel; 8] = [
    DiacriticLabel::None,
    DiacriticLabel::Fatha,
    DiacriticLabel::Damma,
    DiacriticLabel::Kasra,
    DiacriticLabel::Sukun,
    DiacriticLabel::ShaddaFatha,
    DiacriticLabel::ShaddaDamma,
    DiacriticLabel::ShaddaKasra,
];

const FINAL_LABELS: [DiacriticLabel; 7] = [
    DiacriticLabel::Fatha,
    DiacriticLabel::Damma,
    DiacriticLabel::Kasra,
    DiacriticLabel::Fathatan,
    DiacriticLabel::Dammatan,
    DiacriticLabel::Kasratan,
    DiacriticLabel::Sukun,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid noise config: {0}")]
    InvalidNoise(String),
    #[error("invalid toy corpus config: {0}")]
    InvalidToy(String),
    #[error("gold text is not valid diacritized text: {0}")]
    InvalidGold(#[from] TextError),
}

/// Character-level corruption probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub p_sub: f64,
    pub p_del: f64,
    pub p_ins: f64,
    /// Substitute/insert within the character's own class (letter, diacritic, other).
    pub class_preserving: bool,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { p_sub: 0.02, p_del: 0.01, p_ins: 0.01, class_preserving: true, seed: 0 }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        for (name, p) in [("p_sub", self.p_sub), ("p_del", self.p_del), ("p_ins", self.p_ins)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::InvalidNoise(format!("{name}={p} outside [0, 1]")));
            }
        }
        if self.p_sub + self.p_del > 1.0 {
            return Err(SimError::InvalidNoise("p_sub + p_del exceeds 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Letter,
    Mark,
    Other,
}

fn class_of(c: char) -> CharClass {
    if is_diacritic(c) {
        CharClass::Mark
    } else if is_arabic_letter(c) {
        CharClass::Letter
    } else {
        CharClass::Other
    }
}

fn pool(class: CharClass) -> &'static [char] {
    match class {
        CharClass::Letter => &ALPHABET,
        CharClass::Mark => &DIACRITICS,
        CharClass::Other => &SEPARATORS,
    }
}

fn draw_any<R: Rng>(rng: &mut R) -> char {
    let n = ALPHABET.len() + DIACRITICS.len() + SEPARATORS.len();
    let i = rng.gen_range(0..n);
    if i < ALPHABET.len() {
        ALPHABET[i]
    } else if i < ALPHABET.len() + DIACRITICS.len() {
        DIACRITICS[i - ALPHABET.len()]
    } else {
        SEPARATORS[i - ALPHABET.len() - DIACRITICS.len()]
    }
}

fn substitute<R: Rng>(c: char, class_preserving: bool, rng: &mut R) -> char {
    loop {
        let d = if class_preserving {
            *pool(class_of(c)).choose(rng).expect("non-empty pool")
        } else {
            draw_any(rng)
        };
        if d != c {
            return d;
        }
    }
}

/// Corrupts `gold` with the config's own seed. The gold is first rewritten
/// in canonical mark order; the achieved CER is measured against that form.
pub fn corrupt(gold: &str, cfg: &NoiseConfig) -> Result<(String, EditStats), SimError> {
    corrupt_stream(gold, cfg, &[])
}

/// Corrupts line `index` of a file: the line's stream seed is derived from
/// `(cfg.seed, index)` so lines can be processed in any order.
pub fn corrupt_line(gold: &str, cfg: &NoiseConfig, index: u64) -> Result<(String, EditStats), SimError> {
    corrupt_stream(gold, cfg, &[index])
}

fn corrupt_stream(gold: &str, cfg: &NoiseConfig, path: &[u64]) -> Result<(String, EditStats), SimError> {
    cfg.validate()?;
    if let Some(v) = validate_diacritized(gold).first() {
        return Err(SimError::InvalidGold((*v).into()));
    }
    let gold = canonicalize(gold).map_err(SimError::InvalidGold)?;
    let mut rng = rng_for(cfg.seed, path);
    let mut out = String::with_capacity(gold.len() + 8);
    for c in gold.chars() {
        let u: f64 = rng.gen();
        if u < cfg.p_del {
            // dropped
        } else if u < cfg.p_del + cfg.p_sub {
            out.push(substitute(c, cfg.class_preserving, &mut rng));
        } else {
            out.push(c);
        }
        if rng.gen::<f64>() < cfg.p_ins {
            let extra = if cfg.class_preserving {
                *pool(class_of(c)).choose(&mut rng).expect("non-empty pool")
            } else {
                draw_any(&mut rng)
            };
            out.push(extra);
        }
    }
    let hyp = repair_diacritized(&out);
    let achieved = cer(&hyp, &gold);
    Ok((hyp, achieved))
}

/// Shape of the toy corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyCorpusConfig {
    pub lexicon_size: usize,
    pub ambiguity_fraction: f64,
    pub sentence_length: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for ToyCorpusConfig {
    fn default() -> Self {
        Self {
            lexicon_size: 40,
            ambiguity_fraction: 0.5,
            sentence_length: 8,
            n_train: 2000,
            n_dev: 200,
            n_test: 200,
            seed: 0,
        }
    }
}

impl ToyCorpusConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.ambiguity_fraction) {
            return Err(SimError::InvalidToy("ambiguity_fraction outside [0, 1]".into()));
        }
        let counts = [
            self.lexicon_size,
            self.sentence_length,
            self.n_train,
            self.n_dev,
            self.n_test,
        ];
        if counts.iter().any(|&c| c == 0) {
            return Err(SimError::InvalidToy("all counts must be at least 1".into()));
        }
        // 20 letters, lengths 3..=5: far more shapes than any sane lexicon
        if self.lexicon_size > 100_000 {
            return Err(SimError::InvalidToy("lexicon_size too large".into()));
        }
        Ok(())
    }
}

/// One lexicon entry: a raw shape and its one or two gold diacritizations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyWord {
    pub raw: String,
    pub variants: Vec<String>,
}

impl ToyWord {
    pub fn is_ambiguous(&self) -> bool {
        self.variants.len() > 1
    }

    /// Letters whose label differs between the two variants.
    pub fn differing_positions(&self) -> usize {
        if !self.is_ambiguous() {
            return 0;
        }
        let a = strip_diacritics(&self.variants[0]).expect("toy variants are valid");
        let b = strip_diacritics(&self.variants[1]).expect("toy variants are valid");
        a.labels().iter().zip(b.labels()).filter(|(x, y)| x != y).count()
    }
}

/// A `(raw, gold)` utterance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyPair {
    pub raw: String,
    pub gold: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyCorpus {
    pub lexicon: Vec<ToyWord>,
    pub train: Vec<ToyPair>,
    pub dev: Vec<ToyPair>,
    pub test: Vec<ToyPair>,
}

impl ToyCorpus {
    /// Expected DER (including `NONE`, with case endings) of the best
    /// predictor that sees only the undiacritized text: each ambiguous word
    /// gets half of its differing positions wrong on average.
    pub fn text_only_floor(&self) -> f64 {
        let errors: f64 = self.lexicon.iter().map(|w| 0.5 * w.differing_positions() as f64).sum();
        let letters: usize = self.lexicon.iter().map(|w| w.raw.chars().count()).sum();
        errors / letters as f64
    }
}

fn random_word<R: Rng>(rng: &mut R) -> (String, Vec<DiacriticLabel>) {
    let len = rng.gen_range(3..=5);
    let letters: String = (0..len).map(|_| *TOY_LETTERS.choose(rng).expect("letters")).collect();
    let labels = (0..len)
        .map(|i| {
            let pool: &[DiacriticLabel] = if i + 1 == len { &FINAL_LABELS } else { &INNER_LABELS };
            *pool.choose(rng).expect("labels")
        })
        .collect();
    (letters, labels)
}

fn render(raw: &str, labels: Vec<DiacriticLabel>) -> String {
    apply_labels(&LabeledText::new(raw.chars().collect(), labels).expect("toy words are letters only"))
}

fn alternate_labels<R: Rng>(labels: &[DiacriticLabel], rng: &mut R) -> Vec<DiacriticLabel> {
    let len = labels.len();
    let k = rng.gen_range(2..=3).min(len);
    let mut positions: Vec<usize> = (0..len).collect();
    positions.shuffle(rng);
    let mut out = labels.to_vec();
    for &p in &positions[..k] {
        let pool: &[DiacriticLabel] = if p + 1 == len { &FINAL_LABELS } else { &INNER_LABELS };
        loop {
            let l = *pool.choose(rng).expect("labels");
            if l != labels[p] {
                out[p] = l;
                break;
            }
        }
    }
    out
}

/// Builds the lexicon and the three splits. Fully determined by `cfg`.
pub fn generate_toy_corpus(cfg: &ToyCorpusConfig) -> Result<ToyCorpus, SimError> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, &[0]);
    let mut seen = std::collections::HashSet::new();
    let mut shapes = Vec::with_capacity(cfg.lexicon_size);
    while shapes.len() < cfg.lexicon_size {
        let (raw, labels) = random_word(&mut rng);
        if seen.insert(raw.clone()) {
            shapes.push((raw, labels));
        }
    }
    let n_ambiguous = (cfg.ambiguity_fraction * cfg.lexicon_size as f64).round() as usize;
    let mut order: Vec<usize> = (0..cfg.lexicon_size).collect();
    order.shuffle(&mut rng);
    let mut ambiguous = vec![false; cfg.lexicon_size];
    for &i in &order[..n_ambiguous] {
        ambiguous[i] = true;
    }
    let lexicon: Vec<ToyWord> = shapes
        .into_iter()
        .zip(ambiguous)
        .map(|((raw, labels), amb)| {
            let mut variants = vec![render(&raw, labels.clone())];
            if amb {
                variants.push(render(&raw, alternate_labels(&labels, &mut rng)));
            }
            ToyWord { raw, variants }
        })
        .collect();

    let split = |tag: u64, n: usize| -> Vec<ToyPair> {
        (0..n as u64)
            .map(|i| {
                let mut rng = rng_for(cfg.seed, &[1, tag, i]);
                let mut raws = Vec::with_capacity(cfg.sentence_length);
                let mut golds = Vec::with_capacity(cfg.sentence_length);
                for _ in 0..cfg.sentence_length {
                    let w = lexicon.choose(&mut rng).expect("non-empty lexicon");
                    raws.push(w.raw.as_str());
                    golds.push(w.variants.choose(&mut rng).expect("variant").as_str());
                }
                ToyPair { raw: raws.join(" "), gold: golds.join(" ") }
            })
            .collect()
    };
    let train = split(0, cfg.n_train);
    let dev = split(1, cfg.n_dev);
    let test = split(2, cfg.n_test);
    Ok(ToyCorpus { lexicon, train, dev, test })
}
