use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::StoryQA;

/// Index 0 of every vocabulary.
pub const UNKNOWN_TOKEN: &str = "<unk>";

/// Dense word→index map. Index 0 is reserved for unknown words; the rest are
/// assigned in sorted order, so the mapping depends only on the token set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        Self::from_ordered(words)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

impl Vocabulary {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = words
            .into_iter()
            .map(Into::into)
            .filter(|w| w != UNKNOWN_TOKEN)
            .collect();
        let mut all = Vec::with_capacity(set.len() + 1);
        all.push(UNKNOWN_TOKEN.to_string());
        all.extend(set);
        Self::from_ordered(all)
    }

    /// Rebuild from a stored word list (index = position).
    pub fn from_ordered(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocabulary { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn unknown(&self) -> usize {
        0
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn lookup(&self, word: &str) -> usize {
        self.get(word).unwrap_or(0)
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn encode<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        tokens.into_iter().map(|t| self.lookup(t)).collect()
    }
}

/// Vocabulary over every context, question and answer token plus `extra`
/// sentences (feedback templates, KB facts).
pub fn build_vocab<'a>(
    items: impl IntoIterator<Item = &'a StoryQA>,
    extra: &[Vec<String>],
) -> Vocabulary {
    let mut words = BTreeSet::new();
    for item in items {
        for s in &item.context {
            words.extend(s.iter().cloned());
        }
        words.extend(item.question.iter().cloned());
        for a in &item.answers {
            words.extend(a.split(' ').map(str::to_string));
        }
        for s in &item.evidence {
            words.extend(s.iter().cloned());
        }
        if let Some(c) = &item.answer_class {
            words.insert(c.clone());
        }
    }
    for s in extra {
        words.extend(s.iter().cloned());
    }
    Vocabulary::from_words(words)
}
