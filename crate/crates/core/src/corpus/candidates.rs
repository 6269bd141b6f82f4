use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::StoryQA;

/// Ordered, duplicate-free list of answer strings the model chooses from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct CandidateSet {
    answers: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for CandidateSet {
    fn from(answers: Vec<String>) -> Self {
        Self::from_answers(answers)
    }
}

impl From<CandidateSet> for Vec<String> {
    fn from(c: CandidateSet) -> Self {
        c.answers
    }
}

impl CandidateSet {
    pub fn from_answers(answers: Vec<String>) -> Self {
        let mut seen = HashMap::new();
        let mut uniq = Vec::new();
        for a in answers {
            if !seen.contains_key(&a) {
                seen.insert(a.clone(), uniq.len());
                uniq.push(a);
            }
        }
        CandidateSet { answers: uniq, index: seen }
    }

    /// Every gold answer of `items`, sorted. With a cap, only the `cap` most
    /// frequent answers are kept (ties broken alphabetically).
    pub fn build<'a>(items: impl IntoIterator<Item = &'a StoryQA>, cap: Option<usize>) -> Self {
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for it in items {
            for a in &it.answers {
                *freq.entry(a.as_str()).or_default() += 1;
            }
        }
        let mut keep: Vec<(&str, usize)> = freq.into_iter().collect();
        if let Some(cap) = cap {
            if keep.len() > cap {
                keep.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
                keep.truncate(cap);
            }
        }
        let mut answers: Vec<String> = keep.into_iter().map(|(a, _)| a.to_string()).collect();
        answers.sort();
        Self::from_answers(answers)
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn index_of(&self, answer: &str) -> Option<usize> {
        self.index.get(answer).copied()
    }

    pub fn get(&self, idx: usize) -> &str {
        &self.answers[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.answers.iter().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(answers: &[&str]) -> StoryQA {
        StoryQA {
            id: "i".into(),
            context: vec![],
            question: vec!["q".into()],
            answers: answers.iter().map(|s| s.to_string()).collect(),
            supporting: vec![],
            answer_class: None,
            evidence: vec![],
        }
    }

    #[test]
    fn covers_every_gold_without_duplicates() {
        let items = [item(&["kitchen"]), item(&["garden", "kitchen"]), item(&["office"])];
        let c = CandidateSet::build(&items, None);
        assert_eq!(c.len(), 3);
        for it in &items {
            for a in &it.answers {
                assert!(c.index_of(a).is_some());
            }
        }
    }

    #[test]
    fn cap_keeps_most_frequent() {
        let items = [item(&["a"]), item(&["b"]), item(&["b"]), item(&["c"]), item(&["c"])];
        let c = CandidateSet::build(&items, Some(2));
        assert_eq!(c.iter().collect::<Vec<_>>(), ["b", "c"]);
    }
}
