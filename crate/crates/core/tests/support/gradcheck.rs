#![allow(dead_code)]

//! Random small instances, an independent straight-line forward pass, and
//! central finite differences for every loss.

use dialearn::memnet::{Block, Gradients, Head, ModelConfig, ModelParams, Query, ResponseTemplate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-4;

pub struct Instance {
    pub params: ModelParams,
    pub question: Vec<usize>,
    pub memories: Vec<Vec<usize>>,
    pub candidates: Vec<Vec<usize>>,
    pub pool: Vec<ResponseTemplate>,
    pub action: usize,
    pub answer_target: usize,
    pub feedback_target: usize,
    pub reward: f64,
    pub baseline: f64,
}

impl Instance {
    pub fn query(&self) -> Query<'_> {
        Query { question: &self.question, memories: &self.memories }
    }
}

/// d ≤ 5, K ≤ 4, L ≤ 5, N ≤ 3, random weight sharing.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = 12;
    let config = ModelConfig {
        dim: rng.random_range(1..=5),
        hops: rng.random_range(1..=3),
        vocab_size: vocab,
        memory_slots: 4,
        temporal: rng.random_bool(0.6),
        tie_answer: rng.random_bool(0.3),
        untie_feedback: rng.random_bool(0.3),
        init_std: 0.5,
    };
    let mut params = ModelParams::init(config, seed).unwrap();
    params.baseline_weights.iter_mut().for_each(|w| *w = rng.random_range(-0.5..0.5));
    params.baseline_bias[0] = rng.random_range(-0.5..0.5);
    let words = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| -> Vec<usize> {
        (0..rng.random_range(lo..=hi)).map(|_| rng.random_range(0..vocab)).collect()
    };
    let question = words(&mut rng, 1, 4);
    let k = rng.random_range(0..=4);
    let memories = (0..k).map(|_| words(&mut rng, 1, 3)).collect();
    let l = rng.random_range(1..=5);
    let candidates: Vec<Vec<usize>> = (0..l).map(|_| words(&mut rng, 1, 2)).collect();
    let n_templates = rng.random_range(1..=3);
    let pool: Vec<ResponseTemplate> = (0..n_templates)
        .map(|_| ResponseTemplate { tokens: words(&mut rng, 1, 3), answer_slot: rng.random_bool(0.5) })
        .collect();
    let n_responses = dialearn::memnet::response_count(&pool, l);
    Instance {
        action: rng.random_range(0..l),
        answer_target: rng.random_range(0..l),
        feedback_target: rng.random_range(0..n_responses),
        reward: if rng.random_bool(0.5) { 1.0 } else { 0.0 },
        baseline: rng.random_range(-0.5..1.5),
        params,
        question,
        memories,
        candidates,
        pool,
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn softmax_naive(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

fn embed(p: &ModelParams, table: Block, tokens: &[usize]) -> Vec<f64> {
    let d = p.config.dim;
    let data = p.block(table).unwrap_or(p.block(Block::Input).unwrap());
    let mut v = vec![0.0; d];
    for &t in tokens {
        for k in 0..d {
            v[k] += data[t * d + k];
        }
    }
    v
}

/// Straight-line re-implementation: returns (answer probs, u_N, feedback probs).
pub fn oracle_forward(inst: &Instance) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = &inst.params;
    let d = p.config.dim;
    let keep = inst.memories.len().min(p.config.memory_slots);
    let mems = &inst.memories[inst.memories.len() - keep..];
    let mut m: Vec<Vec<f64>> = Vec::new();
    for (i, s) in mems.iter().enumerate() {
        let mut v = embed(p, Block::Input, s);
        if let Some(t) = p.block(Block::Temporal) {
            let slot = mems.len() - 1 - i;
            for k in 0..d {
                v[k] += t[slot * d + k];
            }
        }
        m.push(v);
    }
    if m.is_empty() {
        m.push(vec![0.0; d]);
    }
    let mut u = embed(p, Block::Input, &inst.question);
    for _ in 0..p.config.hops {
        let att = softmax_naive(&m.iter().map(|mi| dotp(&u, mi)).collect::<Vec<_>>());
        let mut o = vec![0.0; d];
        for (a, mi) in att.iter().zip(&m) {
            for k in 0..d {
                o[k] += a * mi[k];
            }
        }
        u = add(&u, &o);
    }
    let ys: Vec<Vec<f64>> = inst.candidates.iter().map(|c| embed(p, Block::Answer, c)).collect();
    let probs = softmax_naive(&ys.iter().map(|y| dotp(&u, y)).collect::<Vec<_>>());

    let mut o = vec![0.0; d];
    for (j, y) in ys.iter().enumerate() {
        for k in 0..d {
            o[k] += probs[j] * (y[k] + if j == inst.action { p.beta[k] } else { 0.0 });
        }
    }
    let u1 = add(&o, &u);
    let mut responses = Vec::new();
    for t in &inst.pool {
        if t.answer_slot {
            for c in &inst.candidates {
                let mut toks = t.tokens.clone();
                toks.extend(c);
                responses.push(embed(p, Block::Feedback, &toks));
            }
        } else {
            responses.push(embed(p, Block::Feedback, &t.tokens));
        }
    }
    let fb = softmax_naive(&responses.iter().map(|x| dotp(&u1, x)).collect::<Vec<_>>());
    (probs, u, fb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    AnswerXent,
    FeedbackXent,
    Reinforce,
    BaselineMse,
}

/// Objective value computed through the module's forward pass (descent
/// sense: REINFORCE returns the surrogate log p(a)·(r−b) itself).
fn objective(inst: &Instance, params: &ModelParams, loss: Loss) -> f64 {
    let q = inst.query();
    match loss {
        Loss::AnswerXent => {
            let t = params.forward_answer(q, &inst.candidates);
            -t.answer_probs[inst.answer_target].ln()
        }
        Loss::FeedbackXent => {
            let t = params.forward_fp(q, &inst.candidates, inst.action, &inst.pool).unwrap();
            -t.fp.unwrap().feedback_probs[inst.feedback_target].ln()
        }
        Loss::Reinforce => {
            let t = params.forward_answer(q, &inst.candidates);
            t.answer_probs[inst.action].ln() * (inst.reward - inst.baseline)
        }
        Loss::BaselineMse => {
            // u_N is an input to the regressor, held fixed
            let t = inst.params.forward_answer(q, &inst.candidates);
            let b = params.baseline_predict(t.final_state());
            (inst.reward - b).powi(2)
        }
    }
}

fn analytic(inst: &Instance, loss: Loss) -> Gradients {
    let p = &inst.params;
    let q = inst.query();
    match loss {
        Loss::AnswerXent => {
            let t = p.forward_answer(q, &inst.candidates);
            p.loss_xent(&t, Head::Answer, inst.answer_target).1
        }
        Loss::FeedbackXent => {
            let t = p.forward_fp(q, &inst.candidates, inst.action, &inst.pool).unwrap();
            p.loss_xent(&t, Head::Feedback, inst.feedback_target).1
        }
        Loss::Reinforce => {
            let t = p.forward_answer(q, &inst.candidates);
            p.loss_reinforce(&t, inst.action, inst.reward, inst.baseline).0
        }
        Loss::BaselineMse => {
            let t = p.forward_answer(q, &inst.candidates);
            let b = p.baseline_predict(t.final_state());
            p.baseline_update(t.final_state(), b, inst.reward)
        }
    }
}

pub struct CheckReport {
    pub coords: usize,
    pub max_rel_err: f64,
    pub worst: Option<(Block, usize, f64, f64)>,
}

/// Relative error with a floor on the denominator for coordinates whose
/// true gradient is (numerically) zero.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub fn check(inst: &Instance, loss: Loss) -> CheckReport {
    let grads = analytic(inst, loss);
    let mut report = CheckReport { coords: 0, max_rel_err: 0.0, worst: None };
    let blocks: &[Block] = match loss {
        Loss::BaselineMse => &[Block::BaselineWeights, Block::BaselineBias],
        _ => &[Block::Input, Block::Answer, Block::Feedback, Block::Temporal, Block::Beta, Block::BaselineWeights, Block::BaselineBias],
    };
    for &b in blocks {
        let Some(n) = inst.params.block(b).map(<[f64]>::len) else { continue };
        let g = grads.block(b).unwrap();
        for i in 0..n {
            let at = |k: f64| {
                let mut p = inst.params.clone();
                p.block_mut(b).unwrap()[i] += k * STEP;
                objective(inst, &p, loss)
            };
            // fourth-order central difference
            let numeric = (8.0 * (at(1.0) - at(-1.0)) - (at(2.0) - at(-2.0))) / (12.0 * STEP);
            let e = rel_err(g[i], numeric);
            report.coords += 1;
            if e > report.max_rel_err {
                report.max_rel_err = e;
                report.worst = Some((b, i, g[i], numeric));
            }
        }
    }
    report
}
