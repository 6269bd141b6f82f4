//! Action selection and the learning algorithms.
//!
//! A [`Learner`] owns the model, the tokenized answer candidates and the pool
//! of teacher responses used by forward prediction. Episodes are collected
//! with a frozen copy of the parameters and handed to [`Learner::update`]
//! afterwards, which is what makes large batches off-policy.

mod feedback;
mod log;
mod update;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use feedback::{
    balance_store_and_sample, find_answer_span, sentiment, FeedbackClusterIndex, FeedbackPool,
    Resolved, Sentiment, NO_FEEDBACK_CLUSTER,
};
pub use log::{read_episode_log, read_json_log, EpisodeLog};
pub use update::{Learner, UpdateConfig, UpdateReport};

use crate::memnet::math::argmax;
use crate::{Error, Result};

/// Numeric reward attached to an episode.
///
/// `Zero` is ambiguous on purpose: under partial rewards it can mean either
/// a wrong answer or a right answer whose reward was withheld.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reward {
    Positive,
    Zero,
    Absent,
}

impl Reward {
    pub fn value(self) -> Option<f64> {
        match self {
            Reward::Positive => Some(1.0),
            Reward::Zero => Some(0.0),
            Reward::Absent => None,
        }
    }
}

/// A teacher reply in text form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub text: String,
    /// `text` as vocabulary indices.
    pub tokens: Vec<usize>,
    /// Balancing cluster: the exact text of a simulated reply, or a
    /// normalized key for human text.
    pub cluster: String,
    /// Turns said after the answer and before this reply (the help request
    /// exchange), appended to memory when predicting it.
    pub prelude: Vec<Vec<usize>>,
}

/// One question, the bot's answer and what the teacher said about it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub question_id: String,
    /// Index of the question in the split it was drawn from.
    pub item: usize,
    pub question: Vec<usize>,
    pub memories: Vec<Vec<usize>>,
    pub action: usize,
    /// Model probability of `action` when it was chosen.
    pub prob: f64,
    pub reward: Reward,
    pub feedback: Option<Feedback>,
    /// Candidate the teacher demonstrated (imitation turns).
    pub imitation: Option<usize>,
    pub snapshot: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Cross-entropy on the bot's own answers, whatever the outcome.
    Imitation,
    /// Cross-entropy on answers demonstrated by the teacher.
    Supervised,
    /// Reward-based imitation: cross-entropy on positively rewarded answers.
    Rbi,
    Reinforce,
    /// Forward prediction of the teacher's reply.
    Fp,
    RbiFp,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Imitation => "imitation",
            Algorithm::Supervised => "supervised",
            Algorithm::Rbi => "rbi",
            Algorithm::Reinforce => "reinforce",
            Algorithm::Fp => "fp",
            Algorithm::RbiFp => "rbi-fp",
        }
    }

    pub fn uses_feedback(self) -> bool {
        matches!(self, Algorithm::Fp | Algorithm::RbiFp)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "imitation" => Algorithm::Imitation,
            "supervised" => Algorithm::Supervised,
            "rbi" => Algorithm::Rbi,
            "reinforce" => Algorithm::Reinforce,
            "fp" => Algorithm::Fp,
            "rbi-fp" | "rbi+fp" | "rbifp" => Algorithm::RbiFp,
            _ => return Err(Error::Config(format!("unknown algorithm {s:?}"))),
        })
    }
}

/// Episodes per update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "size")]
pub enum BatchMode {
    /// Collect this many episodes, then make one pass over them.
    Online(usize),
    /// Collect the whole training set, then train to convergence.
    Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub algorithm: Algorithm,
    pub epsilon: f64,
    /// Replay past episodes uniformly across feedback clusters.
    #[serde(default)]
    pub balanced: bool,
    pub batch: BatchMode,
    #[serde(flatten)]
    pub update: UpdateConfig,
}

impl PolicyConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        PolicyConfig {
            algorithm,
            epsilon: 0.0,
            balanced: false,
            batch: BatchMode::Dataset,
            update: UpdateConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon must be in [0,1], got {}", self.epsilon)));
        }
        if self.batch == BatchMode::Online(0) {
            return Err(Error::Config("online batch size must be at least 1".into()));
        }
        self.update.validate()
    }

    pub fn selector(&self) -> Selector {
        match self.algorithm {
            Algorithm::Reinforce => Selector::Sample,
            _ if self.epsilon > 0.0 => Selector::EGreedy(self.epsilon),
            _ => Selector::Greedy,
        }
    }
}

/// How the bot turns its answer distribution into an answer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selector {
    Greedy,
    EGreedy(f64),
    Sample,
}

impl Selector {
    pub fn select<R: Rng + ?Sized>(self, dist: &[f64], rng: &mut R) -> usize {
        match self {
            Selector::Greedy => argmax(dist),
            Selector::EGreedy(eps) => select_egreedy(dist, eps, rng),
            Selector::Sample => select_sample(dist, rng),
        }
    }
}

/// Argmax with probability 1−ε, otherwise a uniformly random index.
pub fn select_egreedy<R: Rng + ?Sized>(dist: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..dist.len())
    } else {
        argmax(dist)
    }
}

/// Exact categorical draw.
pub fn select_sample<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let total: f64 = dist.iter().sum();
    let mut x = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            last = i;
            if x < p {
                return i;
            }
            x -= p;
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn counts(n: usize, l: usize, mut f: impl FnMut() -> usize) -> Vec<usize> {
        let mut c = vec![0; l];
        for _ in 0..n {
            c[f()] += 1;
        }
        c
    }

    #[test]
    fn greedy_without_exploration() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(select_egreedy(&[0.2, 0.5, 0.3], 0.0, &mut rng), 1);
        }
        assert_eq!(select_egreedy(&[0.4, 0.4, 0.2], 0.0, &mut rng), 0);
    }

    #[test]
    fn egreedy_mixes_argmax_and_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = counts(10_000, 2, || select_egreedy(&[0.9, 0.1], 0.5, &mut rng));
        let rate = c[0] as f64 / 10_000.0;
        assert!((rate - 0.75).abs() < 0.02, "{rate}");
    }

    #[test]
    fn sample_matches_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = counts(10_000, 2, || select_sample(&[0.7, 0.3], &mut rng));
        assert!((c[0] as f64 / 1e4 - 0.7).abs() < 0.02);
        let c = counts(1000, 3, || select_sample(&[1.0, 0.0, 0.0], &mut rng));
        assert_eq!(c, [1000, 0, 0]);
        let c = counts(10_000, 4, || select_sample(&[0.25; 4], &mut rng));
        assert!(c.iter().all(|&k| (k as f64 / 1e4 - 0.25).abs() < 0.02), "{c:?}");
    }

    #[test]
    fn sample_never_picks_zero_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_ne!(select_sample(&[0.5, 0.0, 0.5, 0.0], &mut rng) % 2, 1);
        }
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in [
            Algorithm::Imitation,
            Algorithm::Supervised,
            Algorithm::Rbi,
            Algorithm::Reinforce,
            Algorithm::Fp,
            Algorithm::RbiFp,
        ] {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("sarsa".parse::<Algorithm>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = PolicyConfig::new(Algorithm::Rbi);
        c.validate().unwrap();
        c.epsilon = 1.5;
        assert!(c.validate().is_err());
        c.epsilon = 0.1;
        c.batch = BatchMode::Online(0);
        assert!(c.validate().is_err());
        assert_eq!(PolicyConfig::new(Algorithm::Reinforce).selector(), Selector::Sample);
    }
}
