use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_learner, evaluate, load_corpus, run_on_corpus, DatasetConfig, ExperimentConfig, MetricsRecord, ModelSettings};
use crate::corpus::{Corpus, Split};
use crate::policies::{Algorithm, BatchMode, Episode, Learner, PolicyConfig, Reward, Selector, UpdateConfig};
use crate::simulator::{
    derive_seed, episode_from_turn, make_synthetic_feedback, train_to_convergence, Convergence, SyntheticMode,
    TemplateSet,
};
use crate::{Error, Result};

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// The dataset-batch comparison: every row trained for `base.run.iterations`
/// iterations under each seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub base: ExperimentConfig,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub label: String,
    /// Test accuracy per seed, per iteration.
    pub runs: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Table1 {
    /// Row labels and policies, in table order.
    pub fn rows(&self) -> Vec<(&'static str, PolicyConfig)> {
        let update = self.base.policy.update;
        let p = |algorithm, epsilon, balanced| PolicyConfig {
            algorithm,
            epsilon,
            balanced,
            batch: BatchMode::Dataset,
            update,
        };
        vec![
            ("Imitation", p(Algorithm::Imitation, 0.0, false)),
            ("RBI", p(Algorithm::Rbi, 0.0, false)),
            ("FP", p(Algorithm::Fp, 0.0, false)),
            ("RBI+FP", p(Algorithm::RbiFp, 0.0, false)),
            ("FP (balanced)", p(Algorithm::Fp, 0.0, true)),
            ("FP (eps=0.25)", p(Algorithm::Fp, 0.25, false)),
            ("FP (eps=0.5)", p(Algorithm::Fp, 0.5, false)),
        ]
    }
}

pub fn run_table1(table: &Table1, data_root: Option<&Path>) -> Result<Vec<Table1Row>> {
    table.base.validate()?;
    let templates = TemplateSet::builtin();
    let corpus = load_corpus(&table.base.dataset, data_root, &templates)?;
    let rows = table.rows();
    let jobs: Vec<(usize, u64)> = (0..rows.len()).flat_map(|r| table.seeds.iter().map(move |&s| (r, s))).collect();
    let results: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(r, seed)| {
            let cfg = ExperimentConfig {
                name: format!("{}/{}", table.base.name, rows[r].0),
                seed,
                policy: rows[r].1.clone(),
                ..table.base.clone()
            };
            let out = run_on_corpus(&cfg, &corpus, &templates)?;
            Ok(out.records.iter().map(|m| m.accuracy).collect())
        })
        .collect::<Result<_>>()?;
    let iterations = table.base.run.iterations;
    Ok(rows
        .iter()
        .enumerate()
        .map(|(r, (label, _))| {
            let runs: Vec<Vec<f64>> =
                jobs.iter().zip(&results).filter(|((row, _), _)| *row == r).map(|(_, acc)| acc.clone()).collect();
            let (mean, sd) = (0..iterations)
                .map(|i| mean_sd(&runs.iter().map(|acc| acc[i]).collect::<Vec<_>>()))
                .unzip();
            Table1Row { label: label.to_string(), runs, mean, sd }
        })
        .collect())
}

/// Plain-text rendering with one `mean±sd` cell per iteration.
pub fn format_table1(rows: &[Table1Row]) -> String {
    let mut out = String::new();
    let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0);
    if let Some(first) = rows.first() {
        out.push_str(&format!("{:width$}", "iteration"));
        for i in 1..=first.mean.len() {
            out.push_str(&format!(" | {i:^11}"));
        }
        out.push('\n');
    }
    for row in rows {
        out.push_str(&format!("{:width$}", row.label));
        for (m, s) in row.mean.iter().zip(&row.sd) {
            out.push_str(&format!(" | {m:.3}±{s:.3}"));
        }
        out.push('\n');
    }
    out
}

/// One axis of the online-learning curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "kebab-case")]
pub enum Sweep {
    Epsilon(Vec<f64>),
    BatchSize(Vec<BatchMode>),
    Algorithm(Vec<Algorithm>),
}

impl Sweep {
    pub fn default_epsilon() -> Self {
        Sweep::Epsilon(vec![0.0, 0.1, 0.25, 0.5, 1.0])
    }

    pub fn default_batch_size() -> Self {
        Sweep::BatchSize(vec![BatchMode::Online(1), BatchMode::Online(32), BatchMode::Dataset])
    }

    pub fn default_algorithm() -> Self {
        Sweep::Algorithm(vec![Algorithm::Rbi, Algorithm::Fp, Algorithm::Reinforce])
    }

    fn settings(&self, base: &PolicyConfig) -> Vec<(String, PolicyConfig)> {
        match self {
            Sweep::Epsilon(v) => {
                v.iter().map(|&epsilon| (format!("epsilon={epsilon}"), PolicyConfig { epsilon, ..base.clone() })).collect()
            }
            Sweep::BatchSize(v) => v
                .iter()
                .map(|&batch| {
                    let label = match batch {
                        BatchMode::Online(n) => format!("batch={n}"),
                        BatchMode::Dataset => "batch=full".to_string(),
                    };
                    (label, PolicyConfig { batch, ..base.clone() })
                })
                .collect(),
            Sweep::Algorithm(v) => v
                .iter()
                .map(|&algorithm| (format!("algorithm={}", algorithm.name()), PolicyConfig { algorithm, ..base.clone() }))
                .collect(),
        }
    }
}

/// One curve of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub label: String,
    pub seed: u64,
    pub run_id: String,
    pub records: Vec<MetricsRecord>,
}

impl SweepRun {
    pub fn final_accuracy(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.accuracy)
    }
}

/// Online runs of `base` with one setting changed, in parallel. Each run
/// writes its own metrics file when `base.output_dir` is set.
pub fn run_figure_sweep(
    base: &ExperimentConfig,
    sweep: &Sweep,
    seeds: &[u64],
    data_root: Option<&Path>,
) -> Result<Vec<SweepRun>> {
    base.validate()?;
    let templates = TemplateSet::builtin();
    let corpus = load_corpus(&base.dataset, data_root, &templates)?;
    let jobs: Vec<(String, PolicyConfig, u64)> = sweep
        .settings(&base.policy)
        .into_iter()
        .flat_map(|(label, p)| seeds.iter().map(move |&s| (label.clone(), p.clone(), s)))
        .collect();
    jobs.into_par_iter()
        .map(|(label, policy, seed)| {
            let cfg = ExperimentConfig { name: format!("{}/{label}", base.name), seed, policy, ..base.clone() };
            cfg.validate()?;
            let out = run_on_corpus(&cfg, &corpus, &templates)?;
            Ok(SweepRun { label, seed, run_id: out.run_id, records: out.records })
        })
        .collect()
}

/// Learning from feedback on a deployed model's answers: pretrain on a
/// labelled pool, collect feedback on further questions, then retrain with
/// rewards revealed on a fraction `r` of the correct answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanExperiment {
    pub seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelSettings,
    /// Labelled questions used for pretraining (taken from the start of train).
    pub pool: usize,
    /// Questions answered by the pretrained model and given feedback.
    pub feedback: usize,
    pub mode: SyntheticMode,
    pub r_values: Vec<f64>,
    #[serde(default)]
    pub update: UpdateConfig,
    #[serde(default)]
    pub convergence: Convergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanExperimentResult {
    pub r_values: Vec<f64>,
    /// Test accuracy of the model trained on the labelled pool only.
    pub pretrained: f64,
    pub rbi: Vec<f64>,
    pub fp: Vec<f64>,
    pub rbi_fp: Vec<f64>,
}

/// Episodes for gold answers, usable by supervised training and RBI alike.
pub fn gold_episodes(split: &Split, indices: impl IntoIterator<Item = usize>) -> Vec<Episode> {
    indices
        .into_iter()
        .filter(|&i| !split.encoded[i].gold.is_empty())
        .map(|i| {
            let enc = &split.encoded[i];
            Episode {
                question_id: split.items[i].id.clone(),
                item: i,
                question: enc.question.clone(),
                memories: enc.memories.clone(),
                action: enc.gold[0],
                prob: 1.0,
                reward: Reward::Positive,
                feedback: None,
                imitation: Some(enc.gold[0]),
                snapshot: 0,
            }
        })
        .collect()
}

/// Feedback episodes with synthetic teacher text; rewards are left `Zero`
/// and revealed later. Returns the episodes and whether each answer was right.
pub fn collect_synthetic_feedback(
    learner: &Learner,
    corpus: &Corpus,
    templates: &TemplateSet,
    indices: &[usize],
    mode: SyntheticMode,
    selector: Selector,
    seed: u64,
) -> (Vec<Episode>, Vec<bool>) {
    indices
        .par_iter()
        .map(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, i as u64]));
            let enc = &corpus.train.encoded[i];
            let (action, prob) = learner.act(&enc.question, &enc.memories, selector, &mut rng);
            let item = &corpus.train.items[i];
            let turn = make_synthetic_feedback(mode, templates, item, corpus.candidates.get(action), &mut rng);
            let mut ep = episode_from_turn(corpus, &corpus.train, i, action, prob, turn, learner.snapshot);
            ep.reward = Reward::Zero;
            (ep, enc.gold.contains(&action))
        })
        .unzip()
}

/// Give a positive reward to correct answers whose reveal draw `u` is below `r`.
/// With fixed draws the revealed sets are nested in `r`.
pub fn reveal_rewards(episodes: &[Episode], correct: &[bool], draws: &[f64], r: f64) -> Vec<Episode> {
    episodes
        .iter()
        .zip(correct)
        .zip(draws)
        .map(|((e, &ok), &u)| {
            let mut e = e.clone();
            e.reward = if ok && u < r { Reward::Positive } else { Reward::Zero };
            e
        })
        .collect()
}

fn dataset_policy(algorithm: Algorithm, update: UpdateConfig) -> PolicyConfig {
    PolicyConfig { algorithm, epsilon: 0.0, balanced: false, batch: BatchMode::Dataset, update }
}

/// Continue training `start` on `episodes` to convergence. `start` is
/// returned untouched when none of the episodes can teach `algorithm`
/// anything.
fn retrain(
    start: &Learner,
    algorithm: Algorithm,
    episodes: &[Episode],
    corpus: &Corpus,
    update: UpdateConfig,
    convergence: &Convergence,
    seed: u64,
) -> Result<Learner> {
    let mut learner = start.clone();
    let useful = episodes.iter().any(|e| match algorithm {
        Algorithm::Rbi => e.reward == Reward::Positive,
        Algorithm::Fp => e.feedback.is_some(),
        _ => true,
    });
    if useful {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        train_to_convergence(&mut learner, &dataset_policy(algorithm, update), corpus, episodes, None, convergence, &mut rng)?;
        learner.snapshot += 1;
    }
    Ok(learner)
}

struct FirstIteration {
    corpus: Corpus,
    templates: TemplateSet,
    pretrained: Learner,
    pool: Vec<Episode>,
    episodes: Vec<Episode>,
    correct: Vec<bool>,
    draws: Vec<f64>,
}

fn first_iteration(cfg: &HumanExperiment, data_root: Option<&Path>) -> Result<FirstIteration> {
    let templates = TemplateSet::builtin();
    let corpus = load_corpus(&cfg.dataset, data_root, &templates)?;
    if cfg.pool + cfg.feedback > corpus.train.len() {
        return Err(Error::Config(format!(
            "pool {} plus feedback {} exceeds {} training questions",
            cfg.pool,
            cfg.feedback,
            corpus.train.len()
        )));
    }
    let mut pretrained = build_learner(&corpus, &cfg.model, derive_seed(&[cfg.seed, 100]))?;
    let pool = gold_episodes(&corpus.train, 0..cfg.pool);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, 10]));
    train_to_convergence(
        &mut pretrained,
        &dataset_policy(Algorithm::Supervised, cfg.update),
        &corpus,
        &pool,
        None,
        &cfg.convergence,
        &mut rng,
    )?;
    pretrained.snapshot += 1;
    let indices: Vec<usize> = (cfg.pool..cfg.pool + cfg.feedback).collect();
    let (episodes, correct) = collect_synthetic_feedback(
        &pretrained,
        &corpus,
        &templates,
        &indices,
        cfg.mode,
        Selector::Greedy,
        derive_seed(&[cfg.seed, 11]),
    );
    let mut reveal = ChaCha8Rng::seed_from_u64(derive_seed(&[cfg.seed, 12]));
    let draws = (0..episodes.len()).map(|_| reveal.random::<f64>()).collect();
    Ok(FirstIteration { corpus, templates, pretrained, pool, episodes, correct, draws })
}

fn with_pool(pool: &[Episode], rest: &[Episode]) -> Vec<Episode> {
    pool.iter().chain(rest).cloned().collect()
}

pub fn run_human_feedback_experiment(cfg: &HumanExperiment, data_root: Option<&Path>) -> Result<HumanExperimentResult> {
    let first = first_iteration(cfg, data_root)?;
    let corpus = &first.corpus;
    let pretrained = evaluate(&first.pretrained, &corpus.test)?;
    let seed = derive_seed(&[cfg.seed, 13]);
    let cells: Vec<(f64, f64, f64)> = cfg
        .r_values
        .par_iter()
        .map(|&r| {
            let revealed = reveal_rewards(&first.episodes, &first.correct, &first.draws, r);
            let rbi_data: Vec<Episode> =
                first.pool.iter().chain(revealed.iter().filter(|e| e.reward == Reward::Positive)).cloned().collect();
            let rbi = if rbi_data.len() == first.pool.len() {
                first.pretrained.clone()
            } else {
                retrain(&first.pretrained, Algorithm::Rbi, &rbi_data, corpus, cfg.update, &cfg.convergence, seed)?
            };
            let fp = retrain(&first.pretrained, Algorithm::Fp, &revealed, corpus, cfg.update, &cfg.convergence, seed)?;
            let combo_data = with_pool(&first.pool, &revealed);
            let combo =
                retrain(&first.pretrained, Algorithm::RbiFp, &combo_data, corpus, cfg.update, &cfg.convergence, seed)?;
            Ok((evaluate(&rbi, &corpus.test)?, evaluate(&fp, &corpus.test)?, evaluate(&combo, &corpus.test)?))
        })
        .collect::<Result<_>>()?;
    Ok(HumanExperimentResult {
        r_values: cfg.r_values.clone(),
        pretrained,
        rbi: cells.iter().map(|c| c.0).collect(),
        fp: cells.iter().map(|c| c.1).collect(),
        rbi_fp: cells.iter().map(|c| c.2).collect(),
    })
}

/// A further round of feedback collected by the best first-round model
/// (RBI+FP with every correct answer rewarded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondIteration {
    pub first: HumanExperiment,
    /// Questions in the new batch, taken after the first-round ones.
    pub new_batch: usize,
    pub epsilons: Vec<f64>,
    pub r_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondIterationResult {
    /// Test accuracy of the model that collected the new batch.
    pub first_iteration: f64,
    pub epsilons: Vec<f64>,
    pub r_values: Vec<f64>,
    /// `grid[i][j]`: accuracy for `epsilons[i]`, `r_values[j]`.
    pub grid: Vec<Vec<f64>>,
}

impl SecondIterationResult {
    pub fn best(&self) -> f64 {
        self.grid.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn run_second_iteration(cfg: &SecondIteration, data_root: Option<&Path>) -> Result<SecondIterationResult> {
    let h = &cfg.first;
    let first = first_iteration(h, data_root)?;
    let corpus = &first.corpus;
    let start = h.pool + h.feedback;
    if start + cfg.new_batch > corpus.train.len() {
        return Err(Error::Config(format!(
            "second batch of {} does not fit in {} training questions",
            cfg.new_batch,
            corpus.train.len()
        )));
    }
    let old = with_pool(&first.pool, &reveal_rewards(&first.episodes, &first.correct, &first.draws, 1.0));
    let seed = derive_seed(&[h.seed, 13]);
    let best = retrain(&first.pretrained, Algorithm::RbiFp, &old, corpus, h.update, &h.convergence, seed)?;
    let first_iteration = evaluate(&best, &corpus.test)?;
    let indices: Vec<usize> = (start..start + cfg.new_batch).collect();
    let mut reveal = ChaCha8Rng::seed_from_u64(derive_seed(&[h.seed, 22]));
    let draws: Vec<f64> = (0..indices.len()).map(|_| reveal.random::<f64>()).collect();
    let grid = cfg
        .epsilons
        .par_iter()
        .enumerate()
        .map(|(ei, &eps)| {
            let selector = if eps > 0.0 { Selector::EGreedy(eps) } else { Selector::Greedy };
            let (new, correct) = collect_synthetic_feedback(
                &best,
                corpus,
                &first.templates,
                &indices,
                h.mode,
                selector,
                derive_seed(&[h.seed, 21, ei as u64]),
            );
            cfg.r_values
                .iter()
                .map(|&r| {
                    let mut data = old.clone();
                    data.extend(reveal_rewards(&new, &correct, &draws, r));
                    let model = retrain(&best, Algorithm::RbiFp, &data, corpus, h.update, &h.convergence, derive_seed(&[seed, 2]))?;
                    evaluate(&model, &corpus.test)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(SecondIterationResult { first_iteration, epsilons: cfg.epsilons.clone(), r_values: cfg.r_values.clone(), grid })
}

/// Write one `label,seed,run_id,iter,epoch,accuracy,episodes` row per record.
pub fn write_sweep_summary(path: &PathBuf, runs: &[SweepRun]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(e.to_string()))?;
    w.write_record(["label", "seed", "run_id", "iter", "epoch", "accuracy", "episodes"])
        .map_err(|e| Error::Config(e.to_string()))?;
    for run in runs {
        for r in &run.records {
            w.write_record([
                run.label.clone(),
                run.seed.to_string(),
                run.run_id.clone(),
                r.iter.to_string(),
                r.epoch.to_string(),
                r.accuracy.to_string(),
                r.episodes.to_string(),
            ])
            .map_err(|e| Error::Config(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::file(path, e))
}
