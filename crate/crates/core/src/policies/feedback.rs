//! Teacher responses as forward-prediction targets, and clustering of
//! replies for balanced replay.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Episode;
use crate::corpus::{tokenize, CandidateSet};
use crate::memnet::{response_index, ResponseTemplate};

/// Cluster of episodes that carry no textual feedback.
pub const NO_FEEDBACK_CLUSTER: &str = "(none)";

/// Placeholder for an answer span inside a cluster key.
const ANSWER_PLACEHOLDER: &str = "{answer}";

/// Longest candidate occurring as a contiguous span of `hay`, as
/// `(candidate, start, len)`. Ties go to the lower candidate index, then
/// the earlier position.
pub fn find_answer_span<T: PartialEq>(hay: &[T], candidates: &[Vec<T>]) -> Option<(usize, usize, usize)> {
    let mut best: Option<(usize, usize, usize)> = None;
    for (ci, c) in candidates.iter().enumerate() {
        if c.is_empty() || c.len() > hay.len() || best.is_some_and(|b| b.2 >= c.len()) {
            continue;
        }
        if let Some(start) = hay.windows(c.len()).position(|w| w == c.as_slice()) {
            best = Some((ci, start, c.len()));
        }
    }
    best
}

/// Where a reply sits in the response softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolved {
    pub template: usize,
    /// Candidate filling the answer slot.
    pub answer: Option<usize>,
    /// Flat index among the expanded responses.
    pub response: usize,
}

type PoolKey = (Vec<usize>, Option<usize>);

/// Distinct teacher responses seen so far. A reply that mentions a
/// candidate answer is stored with that span cut out, as a slotted
/// template; the response softmax then offers it once per candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "PoolData", into = "PoolData")]
pub struct FeedbackPool {
    templates: Vec<ResponseTemplate>,
    keys: HashMap<PoolKey, usize>,
    slots: Vec<Option<usize>>,
    cap: usize,
}

#[derive(Serialize, Deserialize)]
struct PoolData {
    cap: usize,
    templates: Vec<(ResponseTemplate, Option<usize>)>,
}

impl From<PoolData> for FeedbackPool {
    fn from(d: PoolData) -> Self {
        let mut pool = FeedbackPool::new(d.cap);
        for (t, slot) in d.templates {
            pool.push(t.tokens, slot);
        }
        pool
    }
}

impl From<FeedbackPool> for PoolData {
    fn from(p: FeedbackPool) -> Self {
        PoolData { cap: p.cap, templates: p.templates.into_iter().zip(p.slots).collect() }
    }
}

impl Default for FeedbackPool {
    fn default() -> Self {
        FeedbackPool::new(1000)
    }
}

impl FeedbackPool {
    pub fn new(cap: usize) -> Self {
        FeedbackPool { templates: Vec::new(), keys: HashMap::new(), slots: Vec::new(), cap }
    }

    pub fn templates(&self) -> &[ResponseTemplate] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    fn push(&mut self, tokens: Vec<usize>, slot: Option<usize>) -> usize {
        let key = (tokens, slot);
        if let Some(&i) = self.keys.get(&key) {
            return i;
        }
        let i = self.templates.len();
        self.templates.push(ResponseTemplate { tokens: key.0.clone(), answer_slot: slot.is_some() });
        self.slots.push(slot);
        self.keys.insert(key, i);
        i
    }

    fn key(tokens: &[usize], candidates: &[Vec<usize>]) -> (PoolKey, Option<usize>) {
        match find_answer_span(tokens, candidates) {
            Some((c, start, len)) => {
                let mut t = tokens[..start].to_vec();
                t.extend_from_slice(&tokens[start + len..]);
                ((t, Some(start)), Some(c))
            }
            None => ((tokens.to_vec(), None), None),
        }
    }

    fn resolved(&self, template: usize, answer: Option<usize>, num_answers: usize) -> Resolved {
        Resolved {
            template,
            answer,
            response: response_index(&self.templates, num_answers, template, answer),
        }
    }

    /// Locate `tokens` in the pool, adding it when new and below the cap.
    pub fn resolve(&mut self, tokens: &[usize], candidates: &[Vec<usize>]) -> Option<Resolved> {
        if tokens.is_empty() {
            return None;
        }
        let (key, answer) = Self::key(tokens, candidates);
        let t = match self.keys.get(&key) {
            Some(&t) => t,
            None if self.templates.len() < self.cap => self.push(key.0, key.1),
            None => return None,
        };
        Some(self.resolved(t, answer, candidates.len()))
    }

    /// Locate `tokens` without growing the pool.
    pub fn lookup(&self, tokens: &[usize], candidates: &[Vec<usize>]) -> Option<Resolved> {
        let (key, answer) = Self::key(tokens, candidates);
        self.keys.get(&key).map(|&t| self.resolved(t, answer, candidates.len()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sentiment {
    Positive,
    Negative,
    Other,
}

const NEGATIVE_WORDS: &[&str] = &[
    "no", "not", "nope", "nah", "wrong", "incorrect", "sorry", "never", "false", "bad", "isn't",
    "wasn't", "aren't", "don't", "doesn't", "didn't", "can't", "nothing", "mistake",
];
const POSITIVE_WORDS: &[&str] = &[
    "yes", "yep", "yeah", "yup", "correct", "right", "good", "great", "exactly", "perfect", "true",
    "excellent", "nice", "awesome", "indeed", "well", "done", "bingo",
];

/// Lexicon polarity; any negative word wins over positive ones.
pub fn sentiment(tokens: &[String]) -> Sentiment {
    if tokens.iter().any(|t| NEGATIVE_WORDS.contains(&t.as_str())) {
        Sentiment::Negative
    } else if tokens.iter().any(|t| POSITIVE_WORDS.contains(&t.as_str())) {
        Sentiment::Positive
    } else {
        Sentiment::Other
    }
}

/// Every episode seen, grouped by the cluster of its feedback.
#[derive(Debug, Clone, Default)]
pub struct FeedbackClusterIndex {
    episodes: Vec<Episode>,
    clusters: BTreeMap<String, Vec<usize>>,
    /// Free-text keys beyond this many clusters fall back to sentiment.
    max_clusters: Option<usize>,
}

impl FeedbackClusterIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_max_clusters(max: usize) -> Self {
        FeedbackClusterIndex { max_clusters: Some(max), ..Self::default() }
    }

    pub fn insert(&mut self, episode: Episode) {
        let key = episode.feedback.as_ref().map_or(NO_FEEDBACK_CLUSTER, |f| f.cluster.as_str()).to_owned();
        self.clusters.entry(key).or_default().push(self.episodes.len());
        self.episodes.push(episode);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    /// Cluster keys with their sizes, in key order.
    pub fn cluster_sizes(&self) -> Vec<(&str, usize)> {
        self.clusters.iter().map(|(k, v)| (k.as_str(), v.len())).collect()
    }

    /// Cluster key for human-written feedback: the normalized text with the
    /// longest candidate answer span replaced by a placeholder, or the
    /// sentiment bucket once the cluster budget is spent.
    pub fn human_key(&self, text: &str, candidates: &CandidateSet) -> String {
        let tokens = tokenize(text);
        let cands: Vec<Vec<String>> = candidates.iter().map(|c| tokenize(c)).collect();
        let key = match find_answer_span(&tokens, &cands) {
            Some((_, start, len)) => {
                let mut t: Vec<&str> = tokens[..start].iter().map(String::as_str).collect();
                t.push(ANSWER_PLACEHOLDER);
                t.extend(tokens[start + len..].iter().map(String::as_str));
                t.join(" ")
            }
            None => tokens.join(" "),
        };
        match self.max_clusters {
            Some(max) if !self.clusters.contains_key(&key) && self.clusters.len() >= max => {
                match sentiment(&tokens) {
                    Sentiment::Positive => "sentiment:positive",
                    Sentiment::Negative => "sentiment:negative",
                    Sentiment::Other => "sentiment:other",
                }
                .to_owned()
            }
            _ => key,
        }
    }

    /// Draw `n` episodes: a cluster uniformly, then an episode uniformly
    /// within it.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Episode> {
        if self.clusters.is_empty() {
            return Vec::new();
        }
        let groups: Vec<&Vec<usize>> = self.clusters.values().collect();
        (0..n)
            .map(|_| {
                let g = groups[rng.random_range(0..groups.len())];
                &self.episodes[g[rng.random_range(0..g.len())]]
            })
            .collect()
    }
}

/// Store `new` in the history, then draw a cluster-balanced batch from all
/// episodes seen so far.
pub fn balance_store_and_sample<'a, R: Rng + ?Sized>(
    index: &'a mut FeedbackClusterIndex,
    new: impl IntoIterator<Item = Episode>,
    n: usize,
    rng: &mut R,
) -> Vec<&'a Episode> {
    for e in new {
        index.insert(e);
    }
    index.sample(n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::{Feedback, Reward};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn episode(item: usize, cluster: Option<&str>) -> Episode {
        Episode {
            question_id: format!("q{item}"),
            item,
            question: vec![1],
            memories: vec![],
            action: 0,
            prob: 1.0,
            reward: Reward::Zero,
            feedback: cluster.map(|c| Feedback {
                text: c.into(),
                tokens: vec![],
                cluster: c.into(),
                prelude: vec![],
            }),
            imitation: None,
            snapshot: 0,
        }
    }

    #[test]
    fn span_prefers_longest_then_lowest_index() {
        let hay = [9, 1, 2, 3, 9];
        assert_eq!(find_answer_span(&hay, &[vec![2], vec![1, 2], vec![2, 3]]), Some((1, 1, 2)));
        assert_eq!(find_answer_span(&hay, &[vec![4]]), None);
        assert_eq!(find_answer_span(&hay, &[vec![], vec![9]]), Some((1, 0, 1)));
    }

    #[test]
    fn pool_slots_answers() {
        let cands = vec![vec![10], vec![11, 12]];
        let mut pool = FeedbackPool::new(10);
        let neg = pool.resolve(&[1, 2, 11, 12], &cands).unwrap();
        assert_eq!(neg, Resolved { template: 0, answer: Some(1), response: 1 });
        let pos = pool.resolve(&[3, 4], &cands).unwrap();
        assert_eq!(pos, Resolved { template: 1, answer: None, response: 2 });
        // same template, other answer
        let neg0 = pool.resolve(&[1, 2, 10], &cands).unwrap();
        assert_eq!((neg0.template, neg0.response), (0, 0));
        assert_eq!(pool.len(), 2);
        assert!(pool.templates()[0].answer_slot);
        assert_eq!(pool.lookup(&[3, 4], &cands), Some(pos));
        assert_eq!(pool.lookup(&[5], &cands), None);
    }

    #[test]
    fn pool_cap_makes_new_text_unresolvable() {
        let mut pool = FeedbackPool::new(1);
        assert!(pool.resolve(&[1], &[]).is_some());
        assert!(pool.resolve(&[2], &[]).is_none());
        assert!(pool.resolve(&[1], &[]).is_some());
        assert!(pool.resolve(&[], &[]).is_none());
    }

    #[test]
    fn pool_serde_round_trip() {
        let cands = vec![vec![10]];
        let mut pool = FeedbackPool::new(5);
        pool.resolve(&[1, 10], &cands);
        pool.resolve(&[2], &cands);
        let back: FeedbackPool = serde_json::from_str(&serde_json::to_string(&pool).unwrap()).unwrap();
        assert_eq!(back.templates(), pool.templates());
        assert_eq!(back.lookup(&[1, 10], &cands), pool.lookup(&[1, 10], &cands));
    }

    #[test]
    fn sentiment_buckets() {
        let t = |s: &str| tokenize(s);
        assert_eq!(sentiment(&t("Yes, that's right!")), Sentiment::Positive);
        assert_eq!(sentiment(&t("no that's not right")), Sentiment::Negative);
        assert_eq!(sentiment(&t("it was Tom Hanks")), Sentiment::Other);
    }

    #[test]
    fn human_keys_mask_answers_and_fall_back() {
        let cands = CandidateSet::from_answers(vec!["tom hanks".into(), "drama".into()]);
        let mut idx = FeedbackClusterIndex::with_max_clusters(1);
        assert_eq!(idx.human_key("Nope, it was Tom Hanks!", &cands), "nope it was {answer}");
        let mut e = episode(0, None);
        e.feedback = Some(Feedback {
            text: String::new(),
            tokens: vec![],
            cluster: idx.human_key("Nope, it was Tom Hanks!", &cands),
            prelude: vec![],
        });
        idx.insert(e);
        assert_eq!(idx.human_key("nope it was drama", &cands), "nope it was {answer}");
        assert_eq!(idx.human_key("Great job", &cands), "sentiment:positive");
    }

    #[test]
    fn balanced_sampling_is_uniform_over_clusters() {
        let mut idx = FeedbackClusterIndex::new();
        let new = (0..1000).map(|i| episode(i, Some("big"))).chain((0..10).map(|i| episode(1000 + i, Some("small"))));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch = balance_store_and_sample(&mut idx, new, 10_000, &mut rng);
        let small = batch.iter().filter(|e| e.item >= 1000).count() as f64 / 1e4;
        assert!((small - 0.5).abs() < 0.02, "{small}");
        assert_eq!(idx.len(), 1010);
    }

    #[test]
    fn single_cluster_is_uniform_replay() {
        let mut idx = FeedbackClusterIndex::new();
        for i in 0..4 {
            idx.insert(episode(i, None));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut c = [0usize; 4];
        for e in idx.sample(8000, &mut rng) {
            c[e.item] += 1;
        }
        assert!(c.iter().all(|&k| (k as f64 / 8000.0 - 0.25).abs() < 0.02), "{c:?}");
        assert_eq!(idx.cluster_sizes(), vec![(NO_FEEDBACK_CLUSTER, 4)]);
    }

    #[test]
    fn each_episode_in_exactly_one_cluster() {
        let mut idx = FeedbackClusterIndex::new();
        for (i, c) in ["a", "b", "a", "c"].iter().enumerate() {
            idx.insert(episode(i, Some(c)));
        }
        let total: usize = idx.cluster_sizes().iter().map(|c| c.1).sum();
        assert_eq!(total, idx.len());
    }
}
