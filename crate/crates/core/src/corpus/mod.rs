//! Datasets: bAbI stories and WikiMovies KB questions.
//!
//! Everything here is a pure function of its inputs. Text is lowercased and
//! split on whitespace and punctuation (apostrophes inside a word are kept, so
//! `that's` stays one token).

mod babi;
mod candidates;
pub mod synth;
mod vocab;
mod wikimovies;

use serde::{Deserialize, Serialize};

pub use babi::{parse_babi, write_babi};
pub use candidates::CandidateSet;
pub use vocab::{build_vocab, Vocabulary, UNKNOWN_TOKEN};
pub use wikimovies::{
    parse_kb, parse_wikimovies, relation_class, retrieve_facts, Fact, KbFacts, WikiMoviesLimits,
};

/// Default number of KB facts placed in memory per WikiMovies question.
pub const DEFAULT_MEMORY_CAP: usize = 50;

/// Lowercase and split on whitespace and punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '_' || (ch == '\'' && !cur.is_empty()) {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    for tok in out.iter_mut() {
        while tok.ends_with('\'') {
            tok.pop();
        }
    }
    out.retain(|t| !t.is_empty());
    out
}

/// Canonical form of an answer string: its tokens joined by single spaces.
pub fn normalize_answer(text: &str) -> String {
    tokenize(text).join(" ")
}

/// One question with its context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryQA {
    pub id: String,
    /// Statements preceding the question, oldest first. Empty for KB questions.
    pub context: Vec<Vec<String>>,
    pub question: Vec<String>,
    /// Normalized gold answers; never empty.
    pub answers: Vec<String>,
    /// Indices into `context` of the supporting statements (bAbI).
    pub supporting: Vec<usize>,
    /// Answer type used by hint feedback ("location", "actor", ...).
    pub answer_class: Option<String>,
    /// KB sentences that justify the answer (WikiMovies).
    pub evidence: Vec<Vec<String>>,
}

impl StoryQA {
    pub fn is_correct(&self, answer: &str) -> bool {
        self.answers.iter().any(|a| a == answer)
    }

    /// The sentence a teacher points at when explaining the answer.
    pub fn supporting_fact(&self) -> Option<&[String]> {
        self.supporting
            .first()
            .and_then(|&i| self.context.get(i))
            .or_else(|| self.evidence.first())
            .map(|s| s.as_slice())
    }
}

/// A question with every token already mapped to vocabulary indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedItem {
    pub question: Vec<usize>,
    /// Oldest first, at most the memory cap.
    pub memories: Vec<Vec<usize>>,
    /// Candidate indices of the gold answers.
    pub gold: Vec<usize>,
}

/// Which loader produced a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Babi,
    Wikimovies,
}

/// A loaded dataset with its vocabulary, candidate set and encoded splits.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub kind: DatasetKind,
    pub vocab: Vocabulary,
    pub candidates: CandidateSet,
    pub kb: Option<KbFacts>,
    pub memory_cap: usize,
    pub train: Split,
    pub valid: Split,
    pub test: Split,
}

#[derive(Debug, Clone, Default)]
pub struct Split {
    pub items: Vec<StoryQA>,
    pub encoded: Vec<EncodedItem>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

impl Corpus {
    /// Assemble a corpus from parsed splits.
    ///
    /// `extra_text` lists sentences that must be in the vocabulary without
    /// appearing in the data (feedback templates, the help request).
    /// `max_candidates` keeps the most frequent gold answers; items whose
    /// answers all fall outside the cap are dropped and the remaining items
    /// have their gold sets pruned, so every gold answer is a candidate.
    pub fn assemble(
        kind: DatasetKind,
        train: Vec<StoryQA>,
        valid: Vec<StoryQA>,
        test: Vec<StoryQA>,
        kb: Option<KbFacts>,
        memory_cap: usize,
        max_candidates: Option<usize>,
        extra_text: &[String],
    ) -> crate::Result<Self> {
        let all: Vec<&StoryQA> = train.iter().chain(&valid).chain(&test).collect();
        if all.is_empty() {
            return Err(crate::Error::Config("corpus has no items".into()));
        }
        let candidates = CandidateSet::build(all.iter().copied(), max_candidates);
        let prune = |items: Vec<StoryQA>| -> Vec<StoryQA> {
            items
                .into_iter()
                .filter_map(|mut it| {
                    it.answers.retain(|a| candidates.index_of(a).is_some());
                    (!it.answers.is_empty()).then_some(it)
                })
                .collect()
        };
        let (train, valid, test) = (prune(train), prune(valid), prune(test));

        let mut extra: Vec<Vec<String>> = extra_text.iter().map(|s| tokenize(s)).collect();
        if let Some(kb) = &kb {
            extra.extend(kb.facts.iter().map(|f| f.tokens.clone()));
        }
        let vocab = build_vocab(train.iter().chain(&valid).chain(&test), &extra);

        let encode_split = |items: Vec<StoryQA>| -> Split {
            let encoded = items
                .iter()
                .map(|it| encode_item(it, &vocab, &candidates, kb.as_ref(), memory_cap))
                .collect();
            Split { items, encoded }
        };
        Ok(Corpus {
            kind,
            train: encode_split(train),
            valid: encode_split(valid),
            test: encode_split(test),
            vocab,
            candidates,
            kb,
            memory_cap,
        })
    }

    /// Candidate answers as vocabulary index sequences.
    pub fn candidate_tokens(&self) -> Vec<Vec<usize>> {
        self.candidates
            .iter()
            .map(|c| self.vocab.encode(c.split(' ')))
            .collect()
    }

    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        self.vocab.encode(tokenize(text).iter().map(String::as_str))
    }

    pub fn encode(&self, item: &StoryQA) -> EncodedItem {
        encode_item(item, &self.vocab, &self.candidates, self.kb.as_ref(), self.memory_cap)
    }
}

/// Memories are the story context followed by retrieved KB facts, keeping
/// the most recent `memory_cap` sentences.
pub fn encode_item(
    item: &StoryQA,
    vocab: &Vocabulary,
    candidates: &CandidateSet,
    kb: Option<&KbFacts>,
    memory_cap: usize,
) -> EncodedItem {
    let mut sentences: Vec<&[String]> = item.context.iter().map(|s| s.as_slice()).collect();
    let retrieved;
    if let Some(kb) = kb {
        retrieved = retrieve_facts(kb, &item.question, memory_cap);
        sentences.extend(retrieved.iter().map(|s| s.as_slice()));
    }
    let skip = sentences.len().saturating_sub(memory_cap);
    EncodedItem {
        question: vocab.encode(item.question.iter().map(String::as_str)),
        memories: sentences[skip..]
            .iter()
            .map(|s| vocab.encode(s.iter().map(String::as_str)))
            .collect(),
        gold: item
            .answers
            .iter()
            .filter_map(|a| candidates.index_of(a))
            .collect(),
    }
}
