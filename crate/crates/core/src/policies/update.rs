use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Algorithm, Episode, FeedbackPool, Reward, Selector};
use crate::memnet::{math::argmax, sgd_step, Gradients, Head, ModelParams, Query};
use crate::{Error, Result};

/// SGD settings shared by every algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateConfig {
    pub lr: f64,
    /// Maximum global gradient norm per step.
    #[serde(default)]
    pub clip: Option<f64>,
    /// Episodes whose gradients are summed into one step.
    pub minibatch: usize,
    /// Scale of the forward-prediction loss when combined with RBI.
    pub fp_weight: f64,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        UpdateConfig { lr: 0.01, clip: Some(40.0), minibatch: 32, fp_weight: 1.0 }
    }
}

impl UpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.minibatch == 0 {
            return Err(Error::Config("minibatch must be at least 1".into()));
        }
        if !(self.fp_weight >= 0.0 && self.fp_weight.is_finite()) {
            return Err(Error::Config("fp_weight must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateReport {
    /// Episodes that contributed a gradient.
    pub examples: usize,
    pub steps: usize,
    /// Episodes whose feedback could not be placed in the response pool.
    pub fp_skipped: usize,
    pub loss: f64,
}

/// The bot: model parameters, answer candidates and the response pool.
#[derive(Debug, Clone)]
pub struct Learner {
    pub params: ModelParams,
    /// Candidate answers as vocabulary indices.
    pub candidates: Vec<Vec<usize>>,
    pub pool: FeedbackPool,
    /// Identifies the parameters that produced an episode.
    pub snapshot: u64,
    grads: Option<Gradients>,
}

struct Unit<'e> {
    ep: &'e Episode,
    answer_target: Option<usize>,
    response: Option<usize>,
    reward: Option<f64>,
}

impl Learner {
    pub fn new(params: ModelParams, candidates: Vec<Vec<usize>>, pool: FeedbackPool) -> Self {
        Learner { params, candidates, pool, snapshot: 0, grads: None }
    }

    pub fn answer_distribution(&self, question: &[usize], memories: &[Vec<usize>]) -> Vec<f64> {
        self.params.forward_answer(Query { question, memories }, &self.candidates).answer_probs
    }

    pub fn predict(&self, question: &[usize], memories: &[Vec<usize>]) -> usize {
        argmax(&self.answer_distribution(question, memories))
    }

    /// Choose an answer; returns it with its model probability.
    pub fn act<R: Rng + ?Sized>(
        &self,
        question: &[usize],
        memories: &[Vec<usize>],
        selector: Selector,
        rng: &mut R,
    ) -> (usize, f64) {
        let dist = self.answer_distribution(question, memories);
        let a = selector.select(&dist, rng);
        (a, dist[a])
    }

    pub fn update<'e>(
        &mut self,
        algorithm: Algorithm,
        episodes: impl IntoIterator<Item = &'e Episode>,
        cfg: &UpdateConfig,
    ) -> Result<UpdateReport> {
        let mut report = UpdateReport::default();
        let mut units = Vec::new();
        for ep in episodes {
            let mut u = Unit { ep, answer_target: None, response: None, reward: None };
            match algorithm {
                Algorithm::Imitation => u.answer_target = Some(ep.action),
                Algorithm::Supervised => u.answer_target = ep.imitation,
                Algorithm::Rbi | Algorithm::RbiFp if ep.reward == Reward::Positive => {
                    u.answer_target = Some(ep.action)
                }
                Algorithm::Reinforce => {
                    u.reward = Some(ep.reward.value().ok_or_else(|| Error::MissingReward(ep.question_id.clone()))?)
                }
                _ => {}
            }
            if algorithm.uses_feedback() {
                let resolved = ep.feedback.as_ref().and_then(|f| self.pool.resolve(&f.tokens, &self.candidates));
                match resolved {
                    Some(r) => u.response = Some(r.response),
                    None if algorithm == Algorithm::Fp || ep.feedback.is_some() => report.fp_skipped += 1,
                    None => {}
                }
            }
            if u.answer_target.is_some() || u.response.is_some() || u.reward.is_some() {
                units.push(u);
            }
        }
        let fp_weight = if algorithm == Algorithm::RbiFp { cfg.fp_weight } else { 1.0 };

        let Learner { params, candidates, pool, grads, .. } = self;
        let grads = grads.get_or_insert_with(|| Gradients::zeros_like(params));
        for chunk in units.chunks(cfg.minibatch) {
            grads.clear();
            for u in chunk {
                let query = Query { question: &u.ep.question, memories: &u.ep.memories };
                if let Some(target) = u.answer_target {
                    let trace = params.forward_answer(query, candidates);
                    report.loss += params.accumulate_xent(&trace, Head::Answer, target, 1.0, grads);
                }
                if let Some(r) = u.reward {
                    let trace = params.forward_answer(query, candidates);
                    let b = params.baseline_predict(trace.final_state());
                    // descent on −(r − b)·log p(a)
                    params.accumulate_xent(&trace, Head::Answer, u.ep.action, r - b, grads);
                    params.accumulate_baseline(trace.final_state(), b, r, grads);
                    report.loss += (r - b) * (r - b);
                }
                if let Some(response) = u.response {
                    let prelude = &u.ep.feedback.as_ref().expect("resolved feedback").prelude;
                    let extended: Vec<Vec<usize>>;
                    let memories = if prelude.is_empty() {
                        &u.ep.memories
                    } else {
                        extended = u.ep.memories.iter().chain(prelude).cloned().collect();
                        &extended
                    };
                    let q = Query { question: &u.ep.question, memories };
                    let trace = params.forward_fp(q, candidates, u.ep.action, pool.templates())?;
                    report.loss += fp_weight * params.accumulate_xent(&trace, Head::Feedback, response, fp_weight, grads);
                }
            }
            sgd_step(params, grads, cfg.lr, cfg.clip)?;
            report.steps += 1;
        }
        report.examples = units.len();
        Ok(report)
    }

    /// Cross-entropy on positively rewarded answers; everything else is ignored.
    pub fn rbi_update<'e>(&mut self, episodes: impl IntoIterator<Item = &'e Episode>, cfg: &UpdateConfig) -> Result<UpdateReport> {
        self.update(Algorithm::Rbi, episodes, cfg)
    }

    /// Policy gradient with a learned baseline. Fails if any episode lacks a
    /// reward.
    pub fn reinforce_update<'e>(&mut self, episodes: impl IntoIterator<Item = &'e Episode>, cfg: &UpdateConfig) -> Result<UpdateReport> {
        self.update(Algorithm::Reinforce, episodes, cfg)
    }

    /// Cross-entropy on the teacher's reply.
    pub fn fp_update<'e>(&mut self, episodes: impl IntoIterator<Item = &'e Episode>, cfg: &UpdateConfig) -> Result<UpdateReport> {
        self.update(Algorithm::Fp, episodes, cfg)
    }

    /// RBI and forward prediction gradients summed per step, the latter
    /// scaled by `cfg.fp_weight`.
    pub fn combo_update_rbi_fp<'e>(&mut self, episodes: impl IntoIterator<Item = &'e Episode>, cfg: &UpdateConfig) -> Result<UpdateReport> {
        self.update(Algorithm::RbiFp, episodes, cfg)
    }
}
