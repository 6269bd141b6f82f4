use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{teacher_respond, TaskSpec, TeacherTurn};
use crate::corpus::{Corpus, Split};
use crate::harness::evaluate;
use crate::policies::{
    balance_store_and_sample, BatchMode, Episode, Feedback, FeedbackClusterIndex, Learner, PolicyConfig, Selector,
};
use crate::Result;

/// Mix several integers into one seed (splitmix64 finalizer per part).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Turn a teacher reply into an episode for item `index` of `split`.
pub fn episode_from_turn(
    corpus: &Corpus,
    split: &Split,
    index: usize,
    action: usize,
    prob: f64,
    turn: TeacherTurn,
    snapshot: u64,
) -> Episode {
    let item = &split.items[index];
    let enc = &split.encoded[index];
    let feedback = turn.text.map(|text| Feedback {
        tokens: corpus.encode_text(&text),
        cluster: text.clone(),
        prelude: turn.prelude.iter().map(|t| corpus.encode_text(t)).collect(),
        text,
    });
    Episode {
        question_id: item.id.clone(),
        item: index,
        question: enc.question.clone(),
        memories: enc.memories.clone(),
        action,
        prob,
        reward: turn.reward,
        feedback,
        imitation: turn.imitation.and_then(|a| corpus.candidates.index_of(&a)),
        snapshot,
    }
}

/// Ask item `index`, let the bot answer and the teacher reply.
pub fn run_episode<R: Rng + ?Sized>(
    learner: &Learner,
    task: &TaskSpec,
    corpus: &Corpus,
    split: &Split,
    index: usize,
    selector: Selector,
    rng: &mut R,
) -> Episode {
    let enc = &split.encoded[index];
    let (action, prob) = learner.act(&enc.question, &enc.memories, selector, rng);
    let turn = teacher_respond(task, &split.items[index], corpus.candidates.get(action), rng);
    episode_from_turn(corpus, split, index, action, prob, turn, learner.snapshot)
}

/// Episodes for `indices` under the current (frozen) parameters. Each item
/// gets its own random stream derived from `seed`, so the result does not
/// depend on how the work is split across threads.
pub fn collect_episodes(
    learner: &Learner,
    task: &TaskSpec,
    corpus: &Corpus,
    split: &Split,
    indices: &[usize],
    selector: Selector,
    seed: u64,
) -> Vec<Episode> {
    let one = |&i: &usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, i as u64]));
        run_episode(learner, task, corpus, split, i, selector, &mut rng)
    };
    if indices.len() >= 64 {
        indices.par_iter().map(one).collect()
    } else {
        indices.iter().map(one).collect()
    }
}

/// Early stopping for dataset-sized batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub max_epochs: usize,
    /// Stop after this many epochs without improvement.
    pub patience: usize,
    /// Smallest validation gain that counts as improvement.
    pub min_delta: f64,
}

impl Default for Convergence {
    fn default() -> Self {
        Convergence { max_epochs: 100, patience: 5, min_delta: 0.001 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub seed: u64,
    /// Online mode: passes over the training questions.
    pub epochs: usize,
    /// Online mode: evaluate every this many epochs.
    pub eval_every: usize,
    /// Dataset-batch mode: collect/train rounds.
    pub iterations: usize,
    pub convergence: Convergence,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings { seed: 0, epochs: 20, eval_every: 1, iterations: 6, convergence: Convergence::default() }
    }
}

/// Test accuracy after an epoch (online) or an iteration (dataset batch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iteration: usize,
    pub epoch: usize,
    pub accuracy: f64,
    /// Episodes collected so far.
    pub episodes: usize,
    /// Wall time since the run started.
    pub seconds: f64,
}

/// Update after every `batch` episodes, one pass each; evaluate on the
/// test split every `eval_every` epochs (and before training).
pub fn run_online(
    learner: &mut Learner,
    policy: &PolicyConfig,
    task: &TaskSpec,
    corpus: &Corpus,
    settings: &RunSettings,
) -> Result<Vec<EvalPoint>> {
    policy.validate()?;
    let n = corpus.train.len();
    let size = match policy.batch {
        BatchMode::Online(b) => b,
        BatchMode::Dataset => n,
    };
    let selector = policy.selector();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[settings.seed, 1]));
    let mut index = FeedbackClusterIndex::new();
    let mut episodes = 0;
    let mut batch_no = 0u64;
    let start = Instant::now();
    let mut points = vec![EvalPoint { iteration: 0, epoch: 0, accuracy: evaluate(learner, &corpus.test)?, episodes, seconds: 0.0 }];
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=settings.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(size.max(1)) {
            let seed = derive_seed(&[settings.seed, 2, batch_no]);
            batch_no += 1;
            let eps = collect_episodes(learner, task, corpus, &corpus.train, chunk, selector, seed);
            episodes += eps.len();
            if policy.balanced {
                let k = eps.len();
                let batch = balance_store_and_sample(&mut index, eps, k, &mut rng);
                learner.update(policy.algorithm, batch, &policy.update)?;
            } else {
                learner.update(policy.algorithm, &eps, &policy.update)?;
            }
            learner.snapshot += 1;
        }
        if epoch % settings.eval_every.max(1) == 0 || epoch == settings.epochs {
            let accuracy = evaluate(learner, &corpus.test)?;
            points.push(EvalPoint { iteration: 0, epoch, accuracy, episodes, seconds: start.elapsed().as_secs_f64() });
        }
    }
    Ok(points)
}

/// Train on `episodes` (or balanced draws from `index`) until validation
/// accuracy stops improving; returns the number of epochs run.
pub fn train_to_convergence<R: Rng + ?Sized>(
    learner: &mut Learner,
    policy: &PolicyConfig,
    corpus: &Corpus,
    episodes: &[Episode],
    index: Option<&FeedbackClusterIndex>,
    convergence: &Convergence,
    rng: &mut R,
) -> Result<usize> {
    let mut order: Vec<&Episode> = episodes.iter().collect();
    let mut best = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut epochs = 0;
    while epochs < convergence.max_epochs {
        epochs += 1;
        match index {
            Some(idx) => order = idx.sample(episodes.len(), rng),
            None => order.shuffle(rng),
        }
        learner.update(policy.algorithm, order.iter().copied(), &policy.update)?;
        let acc = evaluate(learner, &corpus.valid)?;
        if acc > best + convergence.min_delta {
            best = acc;
            stale = 0;
        } else {
            stale += 1;
            if stale >= convergence.patience {
                break;
            }
        }
    }
    Ok(epochs)
}

/// Collect a dataset-sized batch with the current model, train on it to
/// convergence, redeploy, repeat. One test accuracy per iteration.
pub fn run_dataset_batch(
    learner: &mut Learner,
    policy: &PolicyConfig,
    task: &TaskSpec,
    corpus: &Corpus,
    settings: &RunSettings,
) -> Result<Vec<EvalPoint>> {
    policy.validate()?;
    let selector = policy.selector();
    let all: Vec<usize> = (0..corpus.train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[settings.seed, 3]));
    let mut history = FeedbackClusterIndex::new();
    let start = Instant::now();
    let mut points = Vec::new();
    let mut episodes = 0;
    for it in 1..=settings.iterations {
        let seed = derive_seed(&[settings.seed, 4, it as u64]);
        let batch = collect_episodes(learner, task, corpus, &corpus.train, &all, selector, seed);
        episodes += batch.len();
        if policy.balanced {
            for e in &batch {
                history.insert(e.clone());
            }
        }
        let index = policy.balanced.then_some(&history);
        let epochs = train_to_convergence(learner, policy, corpus, &batch, index, &settings.convergence, &mut rng)?;
        learner.snapshot += 1;
        let accuracy = evaluate(learner, &corpus.test)?;
        points.push(EvalPoint { iteration: it, epoch: epochs, accuracy, episodes, seconds: start.elapsed().as_secs_f64() });
    }
    Ok(points)
}
