//! Diacritic error rate in its four reporting variants, and Levenshtein
//! based character / word error rates.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{case_ending_positions, DiacriticLabel, LabeledText};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("prediction and gold base text differ")]
    BaseMismatch,
}

/// Error count over a counted population. The rate is undefined (`None`)
/// when nothing was counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerEntry {
    pub errors: usize,
    pub total: usize,
}

impl DerEntry {
    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.errors as f64 / self.total as f64)
    }

    pub fn percent(&self) -> Option<f64> {
        self.rate().map(|r| 100.0 * r)
    }
}

impl AddAssign for DerEntry {
    fn add_assign(&mut self, o: Self) {
        self.errors += o.errors;
        self.total += o.total;
    }
}

/// The four DER variants: including/excluding gold `NONE` positions, with and
/// without case endings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerReport {
    pub incl_nodiac_with_ce: DerEntry,
    pub incl_nodiac_wo_ce: DerEntry,
    pub excl_nodiac_with_ce: DerEntry,
    pub excl_nodiac_wo_ce: DerEntry,
}

impl AddAssign for DerReport {
    fn add_assign(&mut self, o: Self) {
        self.incl_nodiac_with_ce += o.incl_nodiac_with_ce;
        self.incl_nodiac_wo_ce += o.incl_nodiac_wo_ce;
        self.excl_nodiac_with_ce += o.excl_nodiac_with_ce;
        self.excl_nodiac_wo_ce += o.excl_nodiac_wo_ce;
    }
}

impl Add for DerReport {
    type Output = DerReport;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl std::iter::Sum for DerReport {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(DerReport::default(), Add::add)
    }
}

/// Scores `pred` against `gold` over the gold text's Arabic-letter positions.
pub fn der(pred: &LabeledText, gold: &LabeledText) -> Result<DerReport, MetricsError> {
    if pred.base() != gold.base() {
        return Err(MetricsError::BaseMismatch);
    }
    let endings = case_ending_positions(gold);
    let mut r = DerReport::default();
    for i in 0..gold.len() {
        if !gold.scorable()[i] {
            continue;
        }
        let wrong = usize::from(pred.labels()[i] != gold.labels()[i]);
        let ce = endings.contains(&i);
        let has_diac = gold.labels()[i] != DiacriticLabel::None;
        let count = |e: &mut DerEntry| {
            e.errors += wrong;
            e.total += 1;
        };
        count(&mut r.incl_nodiac_with_ce);
        if !ce {
            count(&mut r.incl_nodiac_wo_ce);
        }
        if has_diac {
            count(&mut r.excl_nodiac_with_ce);
            if !ce {
                count(&mut r.excl_nodiac_wo_ce);
            }
        }
    }
    Ok(r)
}

/// Edit operations aligning a hypothesis to a reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditStats {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_length: usize,
}

impl EditStats {
    pub fn edits(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// `(S + I + D) / N`; undefined for an empty reference.
    pub fn rate(&self) -> Option<f64> {
        (self.reference_length > 0).then(|| self.edits() as f64 / self.reference_length as f64)
    }
}

impl AddAssign for EditStats {
    fn add_assign(&mut self, o: Self) {
        self.substitutions += o.substitutions;
        self.insertions += o.insertions;
        self.deletions += o.deletions;
        self.reference_length += o.reference_length;
    }
}

/// Unit-cost Levenshtein alignment. On the backtrace a diagonal step is
/// preferred over insertion or deletion when costs tie.
pub fn levenshtein<T: PartialEq>(hyp: &[T], reference: &[T]) -> EditStats {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let del = d[(i - 1) * w + j] + 1;
            let ins = d[i * w + j - 1] + 1;
            d[i * w + j] = sub.min(del).min(ins);
        }
    }

    let mut stats = EditStats { reference_length: n, ..Default::default() };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hyp[j - 1];
            if d[(i - 1) * w + j - 1] + usize::from(!same) == here {
                stats.substitutions += usize::from(!same);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * w + j] + 1 == here {
            stats.deletions += 1;
            i -= 1;
        } else {
            stats.insertions += 1;
            j -= 1;
        }
    }
    stats
}

/// Character error rate over Unicode scalar values.
pub fn cer(hyp: &str, reference: &str) -> EditStats {
    let h: Vec<char> = hyp.chars().collect();
    let r: Vec<char> = reference.chars().collect();
    levenshtein(&h, &r)
}

/// Word error rate over whitespace-delimited tokens.
pub fn wer(hyp: &str, reference: &str) -> EditStats {
    let h: Vec<&str> = hyp.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    levenshtein(&h, &r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::strip_diacritics;
    use DiacriticLabel as L;

    fn lt(base: &str, labels: &[L]) -> LabeledText {
        LabeledText::new(base.chars().collect(), labels.to_vec()).unwrap()
    }

    #[test]
    fn identity_scores_zero() {
        let g = strip_diacritics("كَتَبَ الوَلَدُ").unwrap();
        let r = der(&g, &g).unwrap();
        for e in [r.incl_nodiac_with_ce, r.incl_nodiac_wo_ce, r.excl_nodiac_with_ce, r.excl_nodiac_wo_ce] {
            assert_eq!(e.errors, 0);
            assert_eq!(e.rate(), Some(0.0));
        }
    }

    #[test]
    fn hand_counted_der() {
        let gold = lt("كتب", &[L::Fatha, L::Fatha, L::Fatha]);
        let pred = lt("كتب", &[L::Fatha, L::Damma, L::Fatha]);
        let r = der(&pred, &gold).unwrap();
        assert_eq!(r.incl_nodiac_with_ce, DerEntry { errors: 1, total: 3 });
        assert_eq!(r.incl_nodiac_wo_ce, DerEntry { errors: 1, total: 2 });
        assert_eq!(r.excl_nodiac_with_ce, r.incl_nodiac_with_ce);
        assert_eq!(r.excl_nodiac_wo_ce, r.incl_nodiac_wo_ce);

        let gold = lt("كتب", &[L::Fatha, L::None, L::Fatha]);
        let pred = lt("كتب", &[L::Fatha, L::Fatha, L::Fatha]);
        let r = der(&pred, &gold).unwrap();
        assert_eq!(r.incl_nodiac_with_ce, DerEntry { errors: 1, total: 3 });
        assert_eq!(r.excl_nodiac_with_ce, DerEntry { errors: 0, total: 2 });
    }

    #[test]
    fn base_mismatch() {
        let a = LabeledText::unlabeled("كتب").unwrap();
        let b = LabeledText::unlabeled("كتا").unwrap();
        assert_eq!(der(&a, &b), Err(MetricsError::BaseMismatch));
    }

    #[test]
    fn empty_rate_is_undefined() {
        let a = LabeledText::unlabeled("123").unwrap();
        assert_eq!(der(&a, &a).unwrap().incl_nodiac_with_ce.rate(), None);
        assert_eq!(cer("", "").rate(), None);
        assert_eq!(cer("abc", "").rate(), None);
    }

    #[test]
    fn cer_examples() {
        assert_eq!(cer("كتب", "كتب").rate(), Some(0.0));
        let s = cer("كتاب", "كتب");
        assert_eq!((s.substitutions, s.insertions, s.deletions), (0, 1, 0));
        assert!((s.rate().unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let s = cer("", "كتب");
        assert_eq!(s.deletions, 3);
        assert_eq!(s.rate(), Some(1.0));
    }

    #[test]
    fn wer_examples() {
        assert_eq!(wer("كتب الولد", "كتب الولد").rate(), Some(0.0));
        let s = wer("كتب ولد", "كتب الولد");
        assert_eq!((s.substitutions, s.insertions, s.deletions), (1, 0, 0));
        assert_eq!(s.rate(), Some(0.5));
        let s = wer("كتب الولد", "كتب");
        assert_eq!(s.insertions, 1);
        assert_eq!(s.rate(), Some(1.0));
    }

    #[test]
    fn substitution_preferred_on_ties() {
        // "ab" -> "ba": distance 2, either 2 subs or del+ins; subs win
        let s = cer("ba", "ab");
        assert_eq!((s.substitutions, s.insertions, s.deletions), (2, 0, 0));
    }
}
