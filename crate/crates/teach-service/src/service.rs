use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use dialearn::corpus::{normalize_answer, tokenize, Corpus, Split, StoryQA};
use dialearn::harness::{
    build_learner, checkpoint_of, evaluate, learner_from_checkpoint, load_corpus, DatasetConfig, ModelSettings,
};
use dialearn::memnet::Checkpoint;
use dialearn::policies::{
    read_json_log, Algorithm, BatchMode, Episode, EpisodeLog, Feedback, FeedbackClusterIndex, FeedbackPool, Learner,
    PolicyConfig, Reward, UpdateConfig,
};
use dialearn::simulator::{derive_seed, train_to_convergence, Convergence, TemplateSet};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::api::*;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Conflict(String),
    #[error(transparent)]
    Core(#[from] dialearn::Error),
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    /// Holds the write-ahead log and the checkpoints.
    pub state_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub data_root: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub update: UpdateConfig,
    #[serde(default)]
    pub convergence: Convergence,
    #[serde(default)]
    pub seed: u64,
    /// Include gold answers in item views.
    #[serde(default = "yes")]
    pub show_gold: bool,
    /// Required as `Authorization: Bearer <token>` when set.
    #[serde(default)]
    pub token: Option<String>,
    /// Checkpoint to serve on first start instead of a fresh model.
    #[serde(default)]
    pub initial_snapshot: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

impl ServiceConfig {
    pub fn new(state_dir: impl Into<PathBuf>, dataset: DatasetConfig) -> Self {
        ServiceConfig {
            state_dir: state_dir.into(),
            dataset,
            data_root: None,
            model: ModelSettings::default(),
            update: UpdateConfig::default(),
            convergence: Convergence::default(),
            seed: 0,
            show_gold: true,
            token: None,
            initial_snapshot: None,
        }
    }
}

/// A queued question and the answer the serving snapshot gave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredItem {
    question_id: String,
    item: StoryQA,
    action: usize,
    prob: f64,
}

/// Write-ahead log records; replaying them rebuilds every session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
enum Event {
    SessionCreated { id: String, seed: u64, r: f64, snapshot: u64, created: u64, items: Vec<StoredItem> },
    Feedback { session: String, question_id: String, seq: u64, text: String, positive: bool, rewarded: bool, note: Option<String>, at: u64 },
    Trained { snapshot: u64, previous: u64, algorithm: Algorithm, consumed: Vec<u64>, at: u64 },
}

#[derive(Debug, Clone)]
struct Submission {
    seq: u64,
    episode: Episode,
    rewarded: bool,
}

#[derive(Debug, Clone)]
struct Session {
    id: String,
    r: f64,
    seed: u64,
    snapshot: u64,
    created: u64,
    updated: u64,
    items: Vec<StoredItem>,
    feedback: Vec<Option<Submission>>,
}

struct Inner {
    sessions: BTreeMap<String, Session>,
    log: EpisodeLog,
    next_session: u64,
    next_seq: u64,
    consumed: BTreeSet<u64>,
}

/// The teaching service without its HTTP layer.
pub struct TeachService {
    cfg: ServiceConfig,
    corpus: Corpus,
    serving: RwLock<Arc<Learner>>,
    inner: Mutex<Inner>,
    training: Mutex<()>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn checkpoint_path(dir: &Path, snapshot: u64) -> PathBuf {
    dir.join("checkpoints").join(format!("{snapshot:06}.ckpt"))
}

fn pool_path(dir: &Path, snapshot: u64) -> PathBuf {
    dir.join("checkpoints").join(format!("{snapshot:06}.pool.json"))
}

fn io_err(path: &Path, e: std::io::Error) -> ServiceError {
    dialearn::Error::file(path, e).into()
}

fn save_snapshot(dir: &Path, learner: &Learner, corpus: &Corpus) -> Result<()> {
    let pool = pool_path(dir, learner.snapshot);
    let tmp = pool.with_extension("tmp");
    let json = serde_json::to_vec(&learner.pool).map_err(dialearn::Error::from)?;
    std::fs::write(&tmp, json).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, &pool).map_err(|e| io_err(&pool, e))?;
    checkpoint_of(learner, corpus).save(&checkpoint_path(dir, learner.snapshot))?;
    Ok(())
}

fn load_snapshot(dir: &Path, snapshot: u64, corpus: &Corpus, model: &ModelSettings) -> Result<Learner> {
    let ck = Checkpoint::load(&checkpoint_path(dir, snapshot))?;
    let mut learner = learner_from_checkpoint(ck, corpus, model.response_pool)?;
    let path = pool_path(dir, snapshot);
    if let Ok(bytes) = std::fs::read(&path) {
        learner.pool = serde_json::from_slice::<FeedbackPool>(&bytes).map_err(dialearn::Error::from)?;
    }
    learner.snapshot = snapshot;
    Ok(learner)
}

impl TeachService {
    /// Load the dataset, restore the newest snapshot and replay the log.
    pub fn open(cfg: ServiceConfig) -> Result<Self> {
        let templates = TemplateSet::builtin();
        let corpus = load_corpus(&cfg.dataset, cfg.data_root.as_deref(), &templates)?;
        Self::with_corpus(cfg, corpus)
    }

    pub fn with_corpus(cfg: ServiceConfig, corpus: Corpus) -> Result<Self> {
        let dir = cfg.state_dir.clone();
        let ck_dir = dir.join("checkpoints");
        std::fs::create_dir_all(&ck_dir).map_err(|e| io_err(&ck_dir, e))?;
        let log_path = dir.join("events.ndjson");
        let events: Vec<Event> = if log_path.exists() { read_json_log(&log_path)? } else { Vec::new() };
        let log = EpisodeLog::open(&log_path, true)?;

        let latest = events.iter().rev().find_map(|e| match e {
            Event::Trained { snapshot, .. } => Some(*snapshot),
            _ => None,
        });
        let learner = match latest {
            Some(s) => load_snapshot(&dir, s, &corpus, &cfg.model)?,
            None if checkpoint_path(&dir, 0).exists() => load_snapshot(&dir, 0, &corpus, &cfg.model)?,
            None => {
                let mut l = match &cfg.initial_snapshot {
                    Some(p) => learner_from_checkpoint(Checkpoint::load(p)?, &corpus, cfg.model.response_pool)?,
                    None => build_learner(&corpus, &cfg.model, derive_seed(&[cfg.seed, 100]))?,
                };
                l.snapshot = 0;
                save_snapshot(&dir, &l, &corpus)?;
                l
            }
        };

        let service = TeachService {
            cfg,
            corpus,
            serving: RwLock::new(Arc::new(learner)),
            inner: Mutex::new(Inner {
                sessions: BTreeMap::new(),
                log,
                next_session: 0,
                next_seq: 0,
                consumed: BTreeSet::new(),
            }),
            training: Mutex::new(()),
        };
        {
            let mut inner = service.lock();
            for e in events {
                service.apply(&mut inner, e);
            }
        }
        Ok(service)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// The learner answering new sessions.
    pub fn serving(&self) -> Arc<Learner> {
        self.serving.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    pub fn snapshot(&self) -> u64 {
        self.serving().snapshot
    }

    fn apply(&self, inner: &mut Inner, event: Event) {
        match event {
            Event::SessionCreated { id, seed, r, snapshot, created, items } => {
                if let Some(n) = id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                    inner.next_session = inner.next_session.max(n + 1);
                }
                let feedback = vec![None; items.len()];
                inner.sessions.insert(id.clone(), Session { id, r, seed, snapshot, created, updated: created, items, feedback });
            }
            Event::Feedback { session, question_id, seq, text, rewarded, at, .. } => {
                inner.next_seq = inner.next_seq.max(seq + 1);
                if let Some(s) = inner.sessions.get_mut(&session) {
                    if let Some(i) = s.items.iter().position(|it| it.question_id == question_id) {
                        let episode = self.episode(s, i, &text, rewarded);
                        s.feedback[i] = Some(Submission { seq, episode, rewarded });
                        s.updated = at;
                    }
                }
            }
            Event::Trained { consumed, .. } => inner.consumed.extend(consumed),
        }
    }

    fn record(&self, inner: &mut Inner, event: Event) -> Result<()> {
        inner.log.append(&event)?;
        self.apply(inner, event);
        Ok(())
    }

    fn split(&self, which: PoolSplit) -> &Split {
        match which {
            PoolSplit::Train => &self.corpus.train,
            PoolSplit::Valid => &self.corpus.valid,
            PoolSplit::Test => &self.corpus.test,
        }
    }

    fn episode(&self, session: &Session, index: usize, text: &str, rewarded: bool) -> Episode {
        let stored = &session.items[index];
        let enc = self.corpus.encode(&stored.item);
        let cluster = FeedbackClusterIndex::new().human_key(text, &self.corpus.candidates);
        Episode {
            question_id: stored.question_id.clone(),
            item: index,
            question: enc.question,
            memories: enc.memories,
            action: stored.action,
            prob: stored.prob,
            reward: if rewarded { Reward::Positive } else { Reward::Absent },
            feedback: Some(Feedback {
                text: text.to_string(),
                tokens: self.corpus.encode_text(text),
                cluster,
                prelude: Vec::new(),
            }),
            imitation: None,
            snapshot: session.snapshot,
        }
    }

    fn view(&self, session: &Session, index: usize) -> ItemView {
        let stored = &session.items[index];
        ItemView {
            question_id: stored.question_id.clone(),
            story: stored.item.context.iter().map(|s| s.join(" ")).collect(),
            question: stored.item.question.join(" "),
            bot_answer: self.corpus.candidates.get(stored.action).to_string(),
            gold: self.cfg.show_gold.then(|| stored.item.answers.clone()),
            snapshot: session.snapshot,
            position: index,
            total: session.items.len(),
        }
    }

    pub fn create_session(&self, req: CreateSession) -> Result<SessionCreated> {
        check_version(req.v)?;
        if !(0.0..=1.0).contains(&req.r) {
            return Err(ServiceError::Invalid(format!("r must be in [0,1], got {}", req.r)));
        }
        let items: Vec<StoryQA> = match &req.source {
            QuestionSource::Pool { split, offset, limit } => {
                let split = self.split(*split);
                let end = limit.map_or(split.len(), |l| offset.saturating_add(l).min(split.len()));
                if *offset >= end {
                    return Err(ServiceError::Invalid("question source is empty".into()));
                }
                if req.batch_size > end - offset {
                    return Err(ServiceError::Invalid(format!(
                        "batch of {} exceeds the {} questions in the source",
                        req.batch_size,
                        end - offset
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[req.seed, 1]));
                sample(&mut rng, end - offset, req.batch_size).into_iter().map(|i| split.items[offset + i].clone()).collect()
            }
            QuestionSource::Questions { items } => {
                if items.is_empty() {
                    return Err(ServiceError::Invalid("question source is empty".into()));
                }
                if req.batch_size > items.len() {
                    return Err(ServiceError::Invalid(format!(
                        "batch of {} exceeds the {} authored questions",
                        req.batch_size,
                        items.len()
                    )));
                }
                items[..req.batch_size]
                    .iter()
                    .enumerate()
                    .map(|(i, q)| authored(i, q))
                    .collect::<Result<_>>()?
            }
        };
        let learner = self.serving();
        let stored: Vec<StoredItem> = items
            .into_iter()
            .map(|item| {
                let enc = self.corpus.encode(&item);
                let dist = learner.answer_distribution(&enc.question, &enc.memories);
                let action = dialearn::memnet::math::argmax(&dist);
                StoredItem { question_id: item.id.clone(), prob: dist[action], action, item }
            })
            .collect();
        let mut inner = self.lock();
        let id = format!("s{:06}", inner.next_session);
        let created = now();
        let n = stored.len();
        self.record(
            &mut inner,
            Event::SessionCreated { id: id.clone(), seed: req.seed, r: req.r, snapshot: learner.snapshot, created, items: stored },
        )?;
        Ok(SessionCreated { v: API_VERSION, session_id: id, snapshot: learner.snapshot, items: n, created })
    }

    pub fn next_item(&self, session_id: &str) -> Result<NextItem> {
        let inner = self.lock();
        let s = session(&inner, session_id)?;
        let item = s.feedback.iter().position(Option::is_none).map(|i| self.view(s, i));
        Ok(NextItem { v: API_VERSION, done: item.is_none(), item })
    }

    pub fn submit_feedback(&self, session_id: &str, sub: FeedbackSubmission) -> Result<FeedbackAck> {
        check_version(sub.v)?;
        let text = sub.text.trim();
        if text.is_empty() {
            return Err(ServiceError::Invalid("feedback text is empty".into()));
        }
        if text.chars().count() > MAX_FEEDBACK_CHARS {
            return Err(ServiceError::Invalid(format!("feedback text exceeds {MAX_FEEDBACK_CHARS} characters")));
        }
        let mut inner = self.lock();
        let s = session(&inner, session_id)?;
        let index = s
            .items
            .iter()
            .position(|it| it.question_id == sub.question_id)
            .ok_or_else(|| ServiceError::NotFound(format!("no question {} in session {session_id}", sub.question_id)))?;
        let positive = sub.reward == RewardMark::Positive;
        let mut coin = ChaCha8Rng::seed_from_u64(derive_seed(&[s.seed, 2, index as u64]));
        let rewarded = positive && coin.random::<f64>() < s.r;
        let overwritten = s.feedback[index].is_some();
        let gold = self.cfg.show_gold.then(|| s.items[index].item.answers.clone());
        let seq = inner.next_seq;
        self.record(
            &mut inner,
            Event::Feedback {
                session: session_id.to_string(),
                question_id: sub.question_id.clone(),
                seq,
                text: text.to_string(),
                positive,
                rewarded,
                note: sub.note,
                at: now(),
            },
        )?;
        Ok(FeedbackAck {
            v: API_VERSION,
            session_id: session_id.to_string(),
            question_id: sub.question_id,
            rewarded,
            overwritten,
            gold,
        })
    }

    /// Every stored episode of a session, in queue order.
    pub fn episodes(&self, session_id: &str) -> Result<Vec<Episode>> {
        let inner = self.lock();
        let s = session(&inner, session_id)?;
        Ok(s.feedback.iter().flatten().map(|f| f.episode.clone()).collect())
    }

    pub fn metrics(&self, session_id: &str) -> Result<SessionMetrics> {
        let inner = self.lock();
        let s = session(&inner, session_id)?;
        let learner = self.serving();
        let graded: Vec<(&StoredItem, Vec<usize>)> = s
            .items
            .iter()
            .map(|it| (it, self.corpus.encode(&it.item).gold))
            .filter(|(_, gold)| !gold.is_empty())
            .collect();
        let rate = |hits: usize| (!graded.is_empty()).then(|| hits as f64 / graded.len() as f64);
        let answer_hits = graded.iter().filter(|(it, gold)| gold.contains(&it.action)).count();
        let live_hits = graded
            .iter()
            .filter(|(it, gold)| {
                let enc = self.corpus.encode(&it.item);
                gold.contains(&learner.predict(&enc.question, &enc.memories))
            })
            .count();
        let submitted: Vec<&Submission> = s.feedback.iter().flatten().collect();
        Ok(SessionMetrics {
            v: API_VERSION,
            session_id: s.id.clone(),
            snapshot: s.snapshot,
            serving_snapshot: learner.snapshot,
            items: s.items.len(),
            submitted: submitted.len(),
            pending: s.items.len() - submitted.len(),
            rewarded: submitted.iter().filter(|f| f.rewarded).count(),
            trained: submitted.iter().filter(|f| inner.consumed.contains(&f.seq)).count(),
            answer_accuracy: rate(answer_hits),
            live_accuracy: rate(live_hits),
            r: s.r,
            created: s.created,
            updated: s.updated,
        })
    }

    /// Train on feedback not yet trained on, then serve the result.
    /// Blocks while another training run holds the lock.
    pub fn train_now(&self, req: TrainRequest) -> Result<TrainResult> {
        check_version(req.v)?;
        if !matches!(req.algorithm, Algorithm::Rbi | Algorithm::Fp | Algorithm::RbiFp) {
            return Err(ServiceError::Invalid(format!("algorithm {} is not offered here", req.algorithm.name())));
        }
        let _guard = self.training.lock().unwrap_or_else(|p| p.into_inner());
        let (episodes, seqs) = {
            let inner = self.lock();
            let ids: Vec<String> =
                if req.sessions.is_empty() { inner.sessions.keys().cloned().collect() } else { req.sessions.clone() };
            let mut episodes = Vec::new();
            let mut seqs = Vec::new();
            for id in &ids {
                for f in session(&inner, id)?.feedback.iter().flatten() {
                    if !inner.consumed.contains(&f.seq) {
                        episodes.push(f.episode.clone());
                        seqs.push(f.seq);
                    }
                }
            }
            (episodes, seqs)
        };
        if episodes.is_empty() {
            return Err(ServiceError::Conflict("no untrained feedback in the selected sessions".into()));
        }
        let current = self.serving();
        let before = evaluate(&current, &self.corpus.test)?;
        let mut learner = (*current).clone();
        let policy = PolicyConfig {
            algorithm: req.algorithm,
            epsilon: 0.0,
            balanced: false,
            batch: BatchMode::Dataset,
            update: self.cfg.update,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[self.cfg.seed, 3, current.snapshot]));
        let epochs =
            train_to_convergence(&mut learner, &policy, &self.corpus, &episodes, None, &self.cfg.convergence, &mut rng)?;
        learner.snapshot = current.snapshot + 1;
        let after = evaluate(&learner, &self.corpus.test)?;
        save_snapshot(&self.cfg.state_dir, &learner, &self.corpus)?;
        let snapshot = learner.snapshot;
        {
            let mut inner = self.lock();
            self.record(
                &mut inner,
                Event::Trained { snapshot, previous: current.snapshot, algorithm: req.algorithm, consumed: seqs, at: now() },
            )?;
            *self.serving.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(learner);
        }
        Ok(TrainResult {
            v: API_VERSION,
            snapshot,
            previous_snapshot: current.snapshot,
            episodes: episodes.len(),
            epochs,
            accuracy_before: before,
            accuracy_after: after,
        })
    }

    pub fn health(&self) -> Health {
        Health { v: API_VERSION, status: "ok".into(), snapshot: self.snapshot() }
    }
}

fn check_version(v: u32) -> Result<()> {
    if v != API_VERSION {
        return Err(ServiceError::Invalid(format!("unsupported schema version {v}; expected {API_VERSION}")));
    }
    Ok(())
}

fn session<'a>(inner: &'a Inner, id: &str) -> Result<&'a Session> {
    inner.sessions.get(id).ok_or_else(|| ServiceError::NotFound(format!("no session {id}")))
}

fn authored(index: usize, q: &AuthoredQuestion) -> Result<StoryQA> {
    let question = tokenize(&q.question);
    if question.is_empty() {
        return Err(ServiceError::Invalid(format!("authored question {index} is empty")));
    }
    Ok(StoryQA {
        id: format!("authored:{index}"),
        context: q.story.iter().map(|s| tokenize(s)).filter(|t| !t.is_empty()).collect(),
        question,
        answers: q.answers.iter().map(|a| normalize_answer(a)).filter(|a| !a.is_empty()).collect(),
        supporting: Vec::new(),
        answer_class: None,
        evidence: Vec::new(),
    })
}
