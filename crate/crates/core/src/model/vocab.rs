use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ModelError;
use crate::text::{DIACRITICS, LABEL_COUNT};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;

/// One side's character inventory. Ids 0 and 1 are PAD and UNK; the rest
/// follow codepoint order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharMap {
    chars: Vec<char>,
    #[serde(skip)]
    index: BTreeMap<char, u32>,
}

impl CharMap {
    fn from_set(set: BTreeSet<char>) -> Self {
        let chars: Vec<char> = set.into_iter().collect();
        let mut m = Self { chars, index: BTreeMap::new() };
        m.reindex();
        m
    }

    fn reindex(&mut self) {
        self.index = self.chars.iter().enumerate().map(|(i, &c)| (c, i as u32 + 2)).collect();
    }

    #[inline]
    pub fn id(&self, c: char) -> u32 {
        self.index.get(&c).copied().unwrap_or(UNK)
    }

    pub fn encode(&self, s: &[char]) -> Vec<u32> {
        s.iter().map(|&c| self.id(c)).collect()
    }

    /// Number of ids including PAD and UNK.
    pub fn len(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Characters with ids 2.. in order.
    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }
}

/// Text-side and ASR-side inventories.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub text: CharMap,
    pub asr: CharMap,
    pub label_count: usize,
}

impl Vocabulary {
    /// Builds both inventories from `(raw, asr)` lines. ASR side always
    /// includes every text character and every diacritic mark.
    pub fn build<'a, I>(lines: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (&'a str, Option<&'a str>)>,
    {
        let mut text = BTreeSet::new();
        let mut asr = BTreeSet::new();
        let mut any = false;
        for (raw, hyp) in lines {
            any = true;
            text.extend(raw.chars());
            if let Some(h) = hyp {
                asr.extend(h.chars());
            }
        }
        if !any {
            return Err(ModelError::EmptyCorpus);
        }
        asr.extend(text.iter().copied());
        asr.extend(DIACRITICS);
        Ok(Self { text: CharMap::from_set(text), asr: CharMap::from_set(asr), label_count: LABEL_COUNT })
    }

    /// Restores lookup tables after deserialization.
    pub(crate) fn reindex(&mut self) {
        self.text.reindex();
        self.asr.reindex();
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("vocabulary serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
