//! Experiment configuration, evaluation, metrics files and the table and
//! figure runs.

mod experiments;
mod metrics;
mod presets;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::synth::{generate_babi, generate_wikimovies};
use crate::corpus::{parse_babi, parse_wikimovies, Corpus, DatasetKind, Split, StoryQA, WikiMoviesLimits};
use crate::memnet::math::argmax;
use crate::memnet::{Checkpoint, ModelConfig, ModelParams, Query};
use crate::policies::{BatchMode, FeedbackPool, Learner, PolicyConfig};
use crate::simulator::{derive_seed, run_dataset_batch, run_online, RunSettings, TaskSpec, TemplateSet};
use crate::{Error, Result};

pub use experiments::{
    collect_synthetic_feedback, format_table1, gold_episodes, reveal_rewards, run_figure_sweep,
    run_human_feedback_experiment, run_second_iteration, run_table1, write_sweep_summary, HumanExperiment,
    HumanExperimentResult, SecondIteration, SecondIterationResult, Sweep, SweepRun, Table1, Table1Row,
};
pub use metrics::{read_metrics, write_metrics, MetricsRecord};
pub use presets::{desk_babi, desk_model};

/// Environment variable naming the directory relative data paths resolve against.
pub const DATA_ROOT_ENV: &str = "DIALEARN_DATA_ROOT";

/// Greedy accuracy: the fraction of questions whose argmax answer is gold.
pub fn evaluate(learner: &Learner, split: &Split) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty split".into()));
    }
    let correct = split
        .encoded
        .par_iter()
        .filter(|e| {
            let q = Query { question: &e.question, memories: &e.memories };
            let p = learner.params.forward_answer(q, &learner.candidates).answer_probs;
            e.gold.contains(&argmax(&p))
        })
        .count();
    Ok(correct as f64 / split.len() as f64)
}

/// Where questions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DataSource {
    /// Generated single-supporting-fact stories.
    SynthBabi { train_stories: usize, valid_stories: usize, test_stories: usize, statements: usize },
    /// Generated movie KB and questions.
    SynthWikimovies { movies: usize, train: usize, valid: usize, test: usize },
    /// bAbI files; without `valid` the last tenth of `train` is held out.
    Babi { train: PathBuf, valid: Option<PathBuf>, test: PathBuf },
    Wikimovies { kb: PathBuf, train: PathBuf, valid: PathBuf, test: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    #[serde(flatten)]
    pub source: DataSource,
    /// Seed of the generators.
    #[serde(default)]
    pub data_seed: u64,
    /// Cap on questions per split.
    #[serde(default)]
    pub max_questions: Option<usize>,
    #[serde(default)]
    pub max_facts: Option<usize>,
    #[serde(default = "default_memory_cap")]
    pub memory_cap: usize,
    #[serde(default)]
    pub max_candidates: Option<usize>,
}

fn default_memory_cap() -> usize {
    crate::corpus::DEFAULT_MEMORY_CAP
}

impl DatasetConfig {
    pub fn synth_babi(train_stories: usize, valid_stories: usize, test_stories: usize) -> Self {
        DatasetConfig {
            source: DataSource::SynthBabi { train_stories, valid_stories, test_stories, statements: 10 },
            data_seed: 0,
            max_questions: None,
            max_facts: None,
            memory_cap: default_memory_cap(),
            max_candidates: None,
        }
    }

    pub fn synth_wikimovies(movies: usize, train: usize, valid: usize, test: usize) -> Self {
        DatasetConfig {
            source: DataSource::SynthWikimovies { movies, train, valid, test },
            data_seed: 0,
            max_questions: None,
            max_facts: None,
            memory_cap: default_memory_cap(),
            max_candidates: Some(1000),
        }
    }

    pub fn kind(&self) -> DatasetKind {
        match self.source {
            DataSource::SynthBabi { .. } | DataSource::Babi { .. } => DatasetKind::Babi,
            DataSource::SynthWikimovies { .. } | DataSource::Wikimovies { .. } => DatasetKind::Wikimovies,
        }
    }
}

fn resolve(path: &Path, root: Option<&Path>) -> PathBuf {
    match root {
        Some(r) if path.is_relative() => r.join(path),
        _ => path.to_path_buf(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::file(path, e))
}

/// Default data root: the environment variable, if set.
pub fn data_root_from_env() -> Option<PathBuf> {
    std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from)
}

/// Load, cap and encode a dataset. Relative paths resolve against `root`.
pub fn load_corpus(cfg: &DatasetConfig, root: Option<&Path>, templates: &TemplateSet) -> Result<Corpus> {
    let cap = |mut v: Vec<StoryQA>| {
        if let Some(m) = cfg.max_questions {
            v.truncate(m);
        }
        v
    };
    let limits = WikiMoviesLimits { max_questions: None, max_facts: cfg.max_facts };
    let (train, valid, test, kb) = match &cfg.source {
        DataSource::SynthBabi { train_stories, valid_stories, test_stories, statements } => {
            let gen = |n: usize, k: u64| parse_babi(generate_babi(n, *statements, derive_seed(&[cfg.data_seed, k])).as_bytes());
            (gen(*train_stories, 1)?, gen(*valid_stories, 2)?, gen(*test_stories, 3)?, None)
        }
        DataSource::SynthWikimovies { movies, train, valid, test } => {
            let s = generate_wikimovies(*movies, train + valid + test, cfg.data_seed);
            let (kb, mut items) = parse_wikimovies(s.kb.as_bytes(), s.qa.as_bytes(), limits)?;
            let test_items = items.split_off(train + valid);
            let valid_items = items.split_off(*train);
            (items, valid_items, test_items, Some(kb))
        }
        DataSource::Babi { train, valid, test } => {
            let mut tr = parse_babi(open(&resolve(train, root))?)?;
            let va = match valid {
                Some(v) => parse_babi(open(&resolve(v, root))?)?,
                None => {
                    let keep = tr.len() - tr.len() / 10;
                    tr.split_off(keep)
                }
            };
            (tr, va, parse_babi(open(&resolve(test, root))?)?, None)
        }
        DataSource::Wikimovies { kb, train, valid, test } => {
            let kb_path = resolve(kb, root);
            let load = |p: &PathBuf| parse_wikimovies(open(&kb_path)?, open(&resolve(p, root))?, limits);
            let (kb, tr) = load(train)?;
            let (_, va) = load(valid)?;
            let (_, te) = load(test)?;
            (tr, va, te, Some(kb))
        }
    };
    Corpus::assemble(
        cfg.kind(),
        cap(train),
        cap(valid),
        cap(test),
        kb,
        cfg.memory_cap,
        cfg.max_candidates,
        &templates.vocabulary_text(),
    )
}

/// Model shape; the vocabulary size comes from the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub dim: usize,
    pub hops: usize,
    pub temporal: bool,
    pub tie_answer: bool,
    pub untie_feedback: bool,
    pub init_std: f64,
    /// Cap on distinct teacher responses kept for forward prediction.
    pub response_pool: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            dim: 20,
            hops: 2,
            temporal: true,
            tie_answer: false,
            untie_feedback: false,
            init_std: 0.1,
            response_pool: 1000,
        }
    }
}

/// A freshly initialized bot for `corpus`.
pub fn build_learner(corpus: &Corpus, model: &ModelSettings, seed: u64) -> Result<Learner> {
    let config = ModelConfig {
        dim: model.dim,
        hops: model.hops,
        vocab_size: corpus.vocab.len(),
        memory_slots: corpus.memory_cap.max(1),
        temporal: model.temporal,
        tie_answer: model.tie_answer,
        untie_feedback: model.untie_feedback,
        init_std: model.init_std,
    };
    let params = ModelParams::init(config, seed)?;
    Ok(Learner::new(params, corpus.candidate_tokens(), FeedbackPool::new(model.response_pool)))
}

/// One training run: dataset, task, model and policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub task: u8,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelSettings,
    pub policy: PolicyConfig,
    #[serde(default)]
    pub run: RunSettings,
    /// Where metrics files go; not part of the run id.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    /// Record elapsed seconds in metrics files (which then differ between
    /// otherwise identical runs).
    #[serde(default, skip_serializing)]
    pub wall_clock: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn run_id(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn validate(&self) -> Result<()> {
        TaskSpec::builtin(self.task)?;
        self.policy.validate()
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run_id: String,
    pub records: Vec<MetricsRecord>,
    pub learner: Learner,
}

/// Build the corpus and bot, then train in online or dataset-batch mode.
pub fn run_experiment(cfg: &ExperimentConfig, data_root: Option<&Path>) -> Result<RunOutput> {
    cfg.validate()?;
    let templates = TemplateSet::builtin();
    let corpus = load_corpus(&cfg.dataset, data_root, &templates)?;
    run_on_corpus(cfg, &corpus, &templates)
}

/// As [`run_experiment`] with an already loaded corpus.
pub fn run_on_corpus(cfg: &ExperimentConfig, corpus: &Corpus, templates: &TemplateSet) -> Result<RunOutput> {
    let task = TaskSpec::new(cfg.task, templates)?;
    let mut learner = build_learner(corpus, &cfg.model, derive_seed(&[cfg.seed, 100]))?;
    let run = RunSettings { seed: cfg.seed, ..cfg.run };
    let points = match cfg.policy.batch {
        BatchMode::Online(_) => run_online(&mut learner, &cfg.policy, &task, corpus, &run)?,
        BatchMode::Dataset => run_dataset_batch(&mut learner, &cfg.policy, &task, corpus, &run)?,
    };
    let run_id = cfg.run_id();
    let records: Vec<MetricsRecord> = points
        .iter()
        .map(|p| MetricsRecord {
            run_id: run_id.clone(),
            iter: p.iteration,
            epoch: p.epoch,
            split: "test".into(),
            accuracy: p.accuracy,
            episodes: p.episodes,
            seconds: if cfg.wall_clock { p.seconds } else { 0.0 },
        })
        .collect();
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        write_metrics(&dir.join(format!("{run_id}.csv")), &records)?;
    }
    Ok(RunOutput { run_id, records, learner })
}

/// Snapshot of `learner` that records the vocabulary and candidates of `corpus`.
pub fn checkpoint_of(learner: &Learner, corpus: &Corpus) -> Checkpoint {
    Checkpoint {
        vocab: Some(corpus.vocab.words().to_vec()),
        candidates: Some(corpus.candidates.iter().map(str::to_string).collect()),
        ..Checkpoint::new(learner.params.clone(), learner.candidates.len())
    }
}

/// Rebuild a learner for `corpus` from a checkpoint written by [`checkpoint_of`].
/// Fails when the checkpoint was trained with a different vocabulary or
/// candidate set.
pub fn learner_from_checkpoint(ck: Checkpoint, corpus: &Corpus, response_pool: usize) -> Result<Learner> {
    if let Some(v) = &ck.vocab {
        if v.as_slice() != corpus.vocab.words() {
            return Err(Error::Checkpoint("vocabulary differs from the loaded dataset".into()));
        }
    }
    let same_candidates = match &ck.candidates {
        Some(c) => c.iter().map(String::as_str).eq(corpus.candidates.iter()),
        None => ck.num_candidates == corpus.candidates.len(),
    };
    if !same_candidates {
        return Err(Error::Checkpoint("candidate answers differ from the loaded dataset".into()));
    }
    Ok(Learner::new(ck.params, corpus.candidate_tokens(), FeedbackPool::new(response_pool)))
}
