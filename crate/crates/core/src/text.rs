//! Arabic diacritic handling: stripping, label application, word spans and
//! case-ending positions.
//!
//! The diacritic alphabet is exactly U+064B..=U+0652. Every other character,
//! including other Arabic marks such as superscript alef, is a base character.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FATHATAN: char = '\u{064B}';
pub const DAMMATAN: char = '\u{064C}';
pub const KASRATAN: char = '\u{064D}';
pub const FATHA: char = '\u{064E}';
pub const DAMMA: char = '\u{064F}';
pub const KASRA: char = '\u{0650}';
pub const SHADDA: char = '\u{0651}';
pub const SUKUN: char = '\u{0652}';

/// All diacritic codepoints, in codepoint order.
pub const DIACRITICS: [char; 8] = [FATHATAN, DAMMATAN, KASRATAN, FATHA, DAMMA, KASRA, SHADDA, SUKUN];

/// Number of distinct diacritic labels.
pub const LABEL_COUNT: usize = 15;

#[inline]
pub fn is_diacritic(c: char) -> bool {
    ('\u{064B}'..='\u{0652}').contains(&c)
}

/// Arabic letters that may carry a diacritic (basic block letters plus the
/// extended-letter range), excluding tatweel and all marks.
#[inline]
pub fn is_arabic_letter(c: char) -> bool {
    matches!(c,
        '\u{0621}'..='\u{063A}'
        | '\u{0641}'..='\u{064A}'
        | '\u{0671}'..='\u{06D3}'
        | '\u{06D5}'
        | '\u{06EE}'..='\u{06EF}'
        | '\u{06FA}'..='\u{06FC}'
        | '\u{06FF}')
}

/// Per-character diacritic class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum DiacriticLabel {
    #[default]
    None = 0,
    Fatha,
    Damma,
    Kasra,
    Fathatan,
    Dammatan,
    Kasratan,
    Sukun,
    Shadda,
    ShaddaFatha,
    ShaddaDamma,
    ShaddaKasra,
    ShaddaFathatan,
    ShaddaDammatan,
    ShaddaKasratan,
}

impl DiacriticLabel {
    pub const ALL: [DiacriticLabel; LABEL_COUNT] = [
        Self::None,
        Self::Fatha,
        Self::Damma,
        Self::Kasra,
        Self::Fathatan,
        Self::Dammatan,
        Self::Kasratan,
        Self::Sukun,
        Self::Shadda,
        Self::ShaddaFatha,
        Self::ShaddaDamma,
        Self::ShaddaKasra,
        Self::ShaddaFathatan,
        Self::ShaddaDammatan,
        Self::ShaddaKasratan,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Canonical rendering, shadda first.
    pub fn codepoints(self) -> &'static [char] {
        match self {
            Self::None => &[],
            Self::Fatha => &[FATHA],
            Self::Damma => &[DAMMA],
            Self::Kasra => &[KASRA],
            Self::Fathatan => &[FATHATAN],
            Self::Dammatan => &[DAMMATAN],
            Self::Kasratan => &[KASRATAN],
            Self::Sukun => &[SUKUN],
            Self::Shadda => &[SHADDA],
            Self::ShaddaFatha => &[SHADDA, FATHA],
            Self::ShaddaDamma => &[SHADDA, DAMMA],
            Self::ShaddaKasra => &[SHADDA, KASRA],
            Self::ShaddaFathatan => &[SHADDA, FATHATAN],
            Self::ShaddaDammatan => &[SHADDA, DAMMATAN],
            Self::ShaddaKasratan => &[SHADDA, KASRATAN],
        }
    }

    /// Label for a mark cluster; `None` when the combination is not legal
    /// (e.g. shadda + sukun) or `mark` is not a non-shadda diacritic.
    pub fn from_marks(shadda: bool, mark: Option<char>) -> Option<Self> {
        use DiacriticLabel::*;
        Some(match (shadda, mark) {
            (false, Option::None) => DiacriticLabel::None,
            (true, Option::None) => Shadda,
            (false, Some(FATHA)) => Fatha,
            (false, Some(DAMMA)) => Damma,
            (false, Some(KASRA)) => Kasra,
            (false, Some(FATHATAN)) => Fathatan,
            (false, Some(DAMMATAN)) => Dammatan,
            (false, Some(KASRATAN)) => Kasratan,
            (false, Some(SUKUN)) => Sukun,
            (true, Some(FATHA)) => ShaddaFatha,
            (true, Some(DAMMA)) => ShaddaDamma,
            (true, Some(KASRA)) => ShaddaKasra,
            (true, Some(FATHATAN)) => ShaddaFathatan,
            (true, Some(DAMMATAN)) => ShaddaDammatan,
            (true, Some(KASRATAN)) => ShaddaKasratan,
            _ => return Option::None,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Self::None => "NONE",
            Self::Fatha => "FATHA",
            Self::Damma => "DAMMA",
            Self::Kasra => "KASRA",
            Self::Fathatan => "FATHATAN",
            Self::Dammatan => "DAMMATAN",
            Self::Kasratan => "KASRATAN",
            Self::Sukun => "SUKUN",
            Self::Shadda => "SHADDA",
            Self::ShaddaFatha => "SHADDA_FATHA",
            Self::ShaddaDamma => "SHADDA_DAMMA",
            Self::ShaddaKasra => "SHADDA_KASRA",
            Self::ShaddaFathatan => "SHADDA_FATHATAN",
            Self::ShaddaDammatan => "SHADDA_DAMMATAN",
            Self::ShaddaKasratan => "SHADDA_KASRATAN",
        }
    }
}

impl fmt::Display for DiacriticLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    DanglingDiacritic,
    IllegalCombination,
}

/// A problem found in a diacritized string; `position` is a char index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub position: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}@{}", self.kind, self.position)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TextError {
    #[error("diacritic at char {0} is not attached to an Arabic letter")]
    DanglingDiacritic(usize),
    #[error("illegal diacritic combination at char {0}")]
    IllegalCombination(usize),
    #[error("base has {base} characters but {labels} labels were given")]
    LengthMismatch { base: usize, labels: usize },
    #[error("non-letter at position {0} carries a diacritic label")]
    LabelOnNonLetter(usize),
    #[error("base text contains diacritic codepoint at position {0}")]
    DiacriticInBase(usize),
}

impl From<Violation> for TextError {
    fn from(v: Violation) -> Self {
        match v.kind {
            ViolationKind::DanglingDiacritic => TextError::DanglingDiacritic(v.position),
            ViolationKind::IllegalCombination => TextError::IllegalCombination(v.position),
        }
    }
}

/// Undiacritized characters paired with one label each.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct LabeledText {
    base: Vec<char>,
    labels: Vec<DiacriticLabel>,
    scorable: Vec<bool>,
    words: Vec<Range<usize>>,
}

impl LabeledText {
    /// Builds a labeled text, rejecting diacritics in `base` and labels on
    /// non-letters.
    pub fn new(base: Vec<char>, labels: Vec<DiacriticLabel>) -> Result<Self, TextError> {
        if base.len() != labels.len() {
            return Err(TextError::LengthMismatch { base: base.len(), labels: labels.len() });
        }
        if let Some(i) = base.iter().position(|&c| is_diacritic(c)) {
            return Err(TextError::DiacriticInBase(i));
        }
        let scorable: Vec<bool> = base.iter().map(|&c| is_arabic_letter(c)).collect();
        if let Some(i) = (0..base.len()).find(|&i| !scorable[i] && labels[i] != DiacriticLabel::None) {
            return Err(TextError::LabelOnNonLetter(i));
        }
        let words = letter_runs(&scorable);
        Ok(Self { base, labels, scorable, words })
    }

    /// Like [`LabeledText::new`] but silently forces `None` on non-letters.
    pub fn with_forced_labels(base: Vec<char>, mut labels: Vec<DiacriticLabel>) -> Result<Self, TextError> {
        if base.len() == labels.len() {
            for (l, &c) in labels.iter_mut().zip(&base) {
                if !is_arabic_letter(c) {
                    *l = DiacriticLabel::None;
                }
            }
        }
        Self::new(base, labels)
    }

    /// All-`None` labels over `base`.
    pub fn unlabeled(base: &str) -> Result<Self, TextError> {
        let base: Vec<char> = base.chars().collect();
        let n = base.len();
        Self::new(base, vec![DiacriticLabel::None; n])
    }

    pub fn base(&self) -> &[char] {
        &self.base
    }

    pub fn base_string(&self) -> String {
        self.base.iter().collect()
    }

    pub fn labels(&self) -> &[DiacriticLabel] {
        &self.labels
    }

    pub fn scorable(&self) -> &[bool] {
        &self.scorable
    }

    /// Maximal runs of Arabic letters, as `[start, end)` spans.
    pub fn words(&self) -> &[Range<usize>] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }
}

fn letter_runs(scorable: &[bool]) -> Vec<Range<usize>> {
    let mut words = Vec::new();
    let mut start = None;
    for (i, &s) in scorable.iter().enumerate() {
        match (s, start) {
            (true, None) => start = Some(i),
            (false, Some(st)) => {
                words.push(st..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(st) = start {
        words.push(st..scorable.len());
    }
    words
}

struct Scan {
    base: Vec<char>,
    labels: Vec<DiacriticLabel>,
    violations: Vec<Violation>,
}

/// Single pass shared by the stripper and the validator. Recovery keeps the
/// first legal marks of a cluster and drops the offending one.
fn scan(s: &str) -> Scan {
    let mut base = Vec::with_capacity(s.len());
    let mut labels = Vec::with_capacity(s.len());
    let mut violations = Vec::new();
    let mut owner = false;
    let mut shadda = false;
    let mut mark: Option<char> = None;

    for (pos, c) in s.chars().enumerate() {
        if is_diacritic(c) {
            if !owner {
                violations.push(Violation { position: pos, kind: ViolationKind::DanglingDiacritic });
                continue;
            }
            let (next_shadda, next_mark) = if c == SHADDA {
                (true, mark)
            } else {
                match mark {
                    Some(m) if m != c => {
                        violations.push(Violation { position: pos, kind: ViolationKind::IllegalCombination });
                        continue;
                    }
                    _ => (shadda, Some(c)),
                }
            };
            match DiacriticLabel::from_marks(next_shadda, next_mark) {
                Some(l) => {
                    shadda = next_shadda;
                    mark = next_mark;
                    *labels.last_mut().expect("owner implies a base char") = l;
                }
                None => violations.push(Violation { position: pos, kind: ViolationKind::IllegalCombination }),
            }
        } else {
            base.push(c);
            labels.push(DiacriticLabel::None);
            owner = is_arabic_letter(c);
            shadda = false;
            mark = None;
        }
    }
    Scan { base, labels, violations }
}

/// Splits a diacritized string into base characters and per-character labels.
///
/// Shadda and its companion mark are accepted in either order and repeated
/// identical marks collapse to one.
pub fn strip_diacritics(s: &str) -> Result<LabeledText, TextError> {
    let scan = scan(s);
    if let Some(v) = scan.violations.first() {
        return Err((*v).into());
    }
    LabeledText::new(scan.base, scan.labels)
}

/// Renders each base character followed by the canonical marks of its label.
pub fn apply_labels(lt: &LabeledText) -> String {
    let mut out = String::with_capacity(lt.base.len() * 3);
    for (&c, &l) in lt.base.iter().zip(&lt.labels) {
        out.push(c);
        out.extend(l.codepoints());
    }
    out
}

/// Canonical byte form of a diacritized string (shadda first, duplicates
/// collapsed).
pub fn canonicalize(s: &str) -> Result<String, TextError> {
    strip_diacritics(s).map(|lt| apply_labels(&lt))
}

/// Removes every diacritic codepoint without validating placement.
pub fn remove_diacritics(s: &str) -> String {
    s.chars().filter(|&c| !is_diacritic(c)).collect()
}

/// Drops dangling and conflicting marks (keeping the first legal marks of
/// each cluster) and returns the canonical rendering. Always valid.
pub fn repair_diacritized(s: &str) -> String {
    let scan = scan(s);
    let lt = LabeledText::new(scan.base, scan.labels).expect("scan output is well formed");
    apply_labels(&lt)
}

/// Index of the last Arabic letter of every word span.
pub fn case_ending_positions(lt: &LabeledText) -> BTreeSet<usize> {
    lt.words.iter().map(|w| w.end - 1).collect()
}

/// Every placement problem in `s`; empty iff [`strip_diacritics`] succeeds.
pub fn validate_diacritized(s: &str) -> Vec<Violation> {
    scan(s).violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use DiacriticLabel as L;

    #[test]
    fn strips_simple_word() {
        let lt = strip_diacritics("كَتَبَ").unwrap();
        assert_eq!(lt.base_string(), "كتب");
        assert_eq!(lt.labels(), &[L::Fatha, L::Fatha, L::Fatha]);
    }

    #[test]
    fn shadda_order_is_normalized() {
        let a = strip_diacritics("م\u{0651}\u{064F}").unwrap();
        let b = strip_diacritics("م\u{064F}\u{0651}").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.labels(), &[L::ShaddaDamma]);
        assert_eq!(a.base_string(), "م");
    }

    #[test]
    fn repeated_marks_collapse() {
        let lt = strip_diacritics("ب\u{064E}\u{064E}\u{0651}\u{0651}").unwrap();
        assert_eq!(lt.labels(), &[L::ShaddaFatha]);
    }

    #[test]
    fn mixed_script_flags() {
        let lt = strip_diacritics("abc كتب").unwrap();
        assert!(lt.labels().iter().all(|&l| l == L::None));
        assert_eq!(lt.scorable(), &[false, false, false, false, true, true, true]);
        assert_eq!(lt.words(), &[4..7]);
    }

    #[test]
    fn apply_labels_inverts_strip() {
        let lt = LabeledText::new("كتب".chars().collect(), vec![L::Fatha; 3]).unwrap();
        assert_eq!(apply_labels(&lt), "كَتَبَ");
        let plain = LabeledText::unlabeled("abc كتب").unwrap();
        assert_eq!(apply_labels(&plain), "abc كتب");
    }

    #[test]
    fn case_endings() {
        let lt = LabeledText::unlabeled("كتب الولد").unwrap();
        assert_eq!(case_ending_positions(&lt).into_iter().collect::<Vec<_>>(), vec![2, 8]);
        let one = LabeledText::unlabeled("كتب").unwrap();
        assert_eq!(case_ending_positions(&one).into_iter().collect::<Vec<_>>(), vec![2]);
        assert!(case_ending_positions(&LabeledText::unlabeled("").unwrap()).is_empty());
        assert!(case_ending_positions(&LabeledText::unlabeled("123 ,").unwrap()).is_empty());
    }

    #[test]
    fn validator_cases() {
        assert!(validate_diacritized("كَتَبَ").is_empty());
        assert_eq!(
            validate_diacritized("\u{064E}كتب"),
            vec![Violation { position: 0, kind: ViolationKind::DanglingDiacritic }]
        );
        assert_eq!(
            validate_diacritized("ك\u{064E}\u{064F}"),
            vec![Violation { position: 2, kind: ViolationKind::IllegalCombination }]
        );
        // shadda + sukun has no label
        assert_eq!(
            validate_diacritized("ك\u{0651}\u{0652}")[0].kind,
            ViolationKind::IllegalCombination
        );
        // marks after a space or Latin letter dangle
        assert_eq!(validate_diacritized("a\u{064E}")[0].kind, ViolationKind::DanglingDiacritic);
        assert_eq!(validate_diacritized("ك \u{064E}")[0].position, 2);
        assert!(matches!(strip_diacritics("ك\u{064E}\u{064F}"), Err(TextError::IllegalCombination(2))));
    }

    #[test]
    fn superscript_alef_is_base() {
        let lt = strip_diacritics("ه\u{0670}ذا").unwrap();
        assert_eq!(lt.len(), 4);
        assert!(!lt.scorable()[1]);
        assert_eq!(lt.words(), &[0..1, 2..4]);
    }

    #[test]
    fn new_rejects_bad_parts() {
        assert!(matches!(
            LabeledText::new(vec!['a'], vec![L::Fatha]),
            Err(TextError::LabelOnNonLetter(0))
        ));
        assert!(matches!(
            LabeledText::new(vec!['ك'], vec![]),
            Err(TextError::LengthMismatch { .. })
        ));
        let forced = LabeledText::with_forced_labels(vec!['a', 'ك'], vec![L::Fatha, L::Kasra]).unwrap();
        assert_eq!(forced.labels(), &[L::None, L::Kasra]);
    }

    #[test]
    fn label_codepoints_are_unique_and_round_trip() {
        let mut seen = std::collections::HashSet::new();
        for l in L::ALL {
            assert!(seen.insert(l.codepoints()));
            let shadda = l.codepoints().first() == Some(&SHADDA);
            let mark = l.codepoints().iter().copied().find(|&c| c != SHADDA);
            assert_eq!(L::from_marks(shadda, mark), Some(l));
            assert_eq!(L::from_index(l.index()), Some(l));
        }
        assert_eq!(seen.len(), LABEL_COUNT);
    }
}
