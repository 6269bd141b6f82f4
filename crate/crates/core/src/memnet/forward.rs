use serde::{Deserialize, Serialize};

use super::math::{axpy, dot, softmax, softmax_backward};
use super::params::{Gradients, ModelParams, Table};
use crate::{Error, Result};

/// Log clamp for cross-entropy.
pub const MIN_PROB: f64 = 1e-12;

/// Question plus memories (oldest first), as vocabulary indices.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub question: &'a [usize],
    pub memories: &'a [Vec<usize>],
}

/// A teacher response in the forward-prediction candidate pool. When
/// `answer_slot` is set the response stands for one candidate per answer,
/// its bag of words extended by that answer's tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResponseTemplate {
    pub tokens: Vec<usize>,
    pub answer_slot: bool,
}

/// Number of feedback candidates a pool expands to given `num_answers`.
pub fn response_count(pool: &[ResponseTemplate], num_answers: usize) -> usize {
    pool.iter().map(|t| if t.answer_slot { num_answers } else { 1 }).sum()
}

/// Flat feedback-candidate index of template `t` (filled with `answer` when
/// slotted).
pub fn response_index(pool: &[ResponseTemplate], num_answers: usize, t: usize, answer: Option<usize>) -> usize {
    response_count(&pool[..t], num_answers) + if pool[t].answer_slot { answer.unwrap_or(0) } else { 0 }
}

/// Sum of embedding rows of `tokens`.
pub fn encode_bow(tokens: &[usize], table: &Table) -> Vec<f64> {
    table.bag(tokens)
}

/// One attention read: `p = softmax(uᵀmᵢ)`, `o = Σ pᵢ mᵢ`.
pub fn hop(u: &[f64], memories: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if memories.is_empty() {
        return Err(Error::EmptyMemory);
    }
    let scores: Vec<f64> = memories.iter().map(|m| dot(u, m)).collect();
    let p = softmax(&scores);
    let mut o = vec![0.0; u.len()];
    for (pi, m) in p.iter().zip(memories) {
        axpy(*pi, m, &mut o);
    }
    Ok((p, o))
}

/// Everything computed by a forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<'a> {
    question: &'a [usize],
    /// Memories actually read; empty means the single null memory was used.
    memories: &'a [Vec<usize>],
    candidates: &'a [Vec<usize>],
    pub memory_vectors: Vec<Vec<f64>>,
    /// u₀ … u_N.
    pub states: Vec<Vec<f64>>,
    /// Attention over memories, one vector per hop.
    pub attention: Vec<Vec<f64>>,
    /// Candidate embeddings y₁ … y_L.
    pub answer_vectors: Vec<Vec<f64>>,
    pub answer_logits: Vec<f64>,
    pub answer_probs: Vec<f64>,
    pub fp: Option<FpTrace<'a>>,
}

/// The extra hop of forward prediction and its feedback distribution.
#[derive(Debug, Clone)]
pub struct FpTrace<'a> {
    pub action: usize,
    pool: &'a [ResponseTemplate],
    pub o: Vec<f64>,
    pub u1: Vec<f64>,
    template_vectors: Vec<Vec<f64>>,
    /// Answers embedded with the feedback table (for slotted templates).
    filler_vectors: Vec<Vec<f64>>,
    pub feedback_logits: Vec<f64>,
    pub feedback_probs: Vec<f64>,
}

impl ForwardTrace<'_> {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("at least u0")
    }

    pub fn num_answers(&self) -> usize {
        self.answer_probs.len()
    }
}

impl ModelParams {
    fn memory_vectors(&self, memories: &[Vec<usize>]) -> Vec<Vec<f64>> {
        let k = memories.len();
        memories
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mut v = self.input.bag(m);
                if let Some(t) = &self.temporal {
                    axpy(1.0, t.row(k - 1 - i), &mut v);
                }
                v
            })
            .collect()
    }

    fn readable<'m>(&self, memories: &'m [Vec<usize>]) -> &'m [Vec<usize>] {
        let skip = memories.len().saturating_sub(self.config.memory_slots);
        &memories[skip..]
    }

    /// Memory hops followed by the answer softmax over `candidates`.
    pub fn forward_answer<'a>(&self, query: Query<'a>, candidates: &'a [Vec<usize>]) -> ForwardTrace<'a> {
        let memories = self.readable(query.memories);
        let mut memory_vectors = self.memory_vectors(memories);
        if memory_vectors.is_empty() {
            memory_vectors.push(vec![0.0; self.dim()]);
        }
        let mut states = vec![self.input.bag(query.question)];
        let mut attention = Vec::with_capacity(self.config.hops);
        for _ in 0..self.config.hops {
            let u = states.last().unwrap();
            let (p, mut o) = hop(u, &memory_vectors).expect("null memory keeps hop total");
            axpy(1.0, u, &mut o);
            attention.push(p);
            states.push(o);
        }
        let answers = self.answer_table();
        let answer_vectors: Vec<Vec<f64>> = candidates.iter().map(|c| answers.bag(c)).collect();
        let u = states.last().unwrap();
        let answer_logits: Vec<f64> = answer_vectors.iter().map(|y| dot(u, y)).collect();
        let answer_probs = softmax(&answer_logits);
        ForwardTrace {
            question: query.question,
            memories,
            candidates,
            memory_vectors,
            states,
            attention,
            answer_vectors,
            answer_logits,
            answer_probs,
            fp: None,
        }
    }

    /// Forward prediction: attend over answers with β marking `action`, then
    /// predict the teacher's response among the expanded `pool`.
    pub fn forward_fp<'a>(
        &self,
        query: Query<'a>,
        candidates: &'a [Vec<usize>],
        action: usize,
        pool: &'a [ResponseTemplate],
    ) -> Result<ForwardTrace<'a>> {
        if action >= candidates.len() {
            return Err(Error::ActionOutOfRange { action, size: candidates.len() });
        }
        let mut trace = self.forward_answer(query, candidates);
        let u = trace.final_state();
        let p = &trace.answer_probs;
        let mut o = vec![0.0; self.dim()];
        for (pa, y) in p.iter().zip(&trace.answer_vectors) {
            axpy(*pa, y, &mut o);
        }
        axpy(p[action], &self.beta, &mut o);
        let mut u1 = o.clone();
        axpy(1.0, u, &mut u1);

        let table = self.feedback_table();
        let template_vectors: Vec<Vec<f64>> = pool.iter().map(|t| table.bag(&t.tokens)).collect();
        let filler_vectors: Vec<Vec<f64>> = if pool.iter().any(|t| t.answer_slot) {
            candidates.iter().map(|c| table.bag(c)).collect()
        } else {
            Vec::new()
        };
        let filler_scores: Vec<f64> = filler_vectors.iter().map(|x| dot(&u1, x)).collect();
        let mut feedback_logits = Vec::with_capacity(response_count(pool, candidates.len()));
        for (t, tv) in pool.iter().zip(&template_vectors) {
            let base = dot(&u1, tv);
            if t.answer_slot {
                feedback_logits.extend(filler_scores.iter().map(|s| base + s));
            } else {
                feedback_logits.push(base);
            }
        }
        let feedback_probs = softmax(&feedback_logits);
        trace.fp = Some(FpTrace {
            action,
            pool,
            o,
            u1,
            template_vectors,
            filler_vectors,
            feedback_logits,
            feedback_probs,
        });
        Ok(trace)
    }

    /// Backpropagate logit gradients of the answer softmax and/or the
    /// feedback softmax into `grads`.
    pub(crate) fn backward(
        &self,
        trace: &ForwardTrace<'_>,
        d_answer_logits: Option<&[f64]>,
        d_feedback_logits: Option<&[f64]>,
        grads: &mut Gradients,
    ) {
        let d = self.dim();
        let u_n = trace.final_state();
        let num_answers = trace.answer_vectors.len();
        let mut du = vec![0.0; d];
        let mut dy = vec![vec![0.0; d]; num_answers];
        let mut d_logits = vec![0.0; num_answers];
        if let Some(g) = d_answer_logits {
            axpy(1.0, g, &mut d_logits);
        }

        if let (Some(h), Some(fp)) = (d_feedback_logits, &trace.fp) {
            // response embeddings: x = template (+ filler)
            let mut g_template = vec![0.0; fp.pool.len()];
            let mut g_filler = vec![0.0; fp.filler_vectors.len()];
            let mut at = 0;
            for (k, t) in fp.pool.iter().enumerate() {
                if t.answer_slot {
                    for (j, gj) in g_filler.iter_mut().enumerate() {
                        g_template[k] += h[at + j];
                        *gj += h[at + j];
                    }
                    at += num_answers;
                } else {
                    g_template[k] += h[at];
                    at += 1;
                }
            }
            let mut du1 = vec![0.0; d];
            let table_grad = grads.feedback_mut();
            for ((t, tv), &g) in fp.pool.iter().zip(&fp.template_vectors).zip(&g_template) {
                if g == 0.0 {
                    continue;
                }
                axpy(g, tv, &mut du1);
                for &w in &t.tokens {
                    axpy(g, &fp.u1, table_grad.row_mut(w));
                }
            }
            for ((c, xv), &g) in trace.candidates.iter().zip(&fp.filler_vectors).zip(&g_filler) {
                if g == 0.0 {
                    continue;
                }
                axpy(g, xv, &mut du1);
                for &w in c {
                    axpy(g, &fp.u1, table_grad.row_mut(w));
                }
            }
            // u1 = o + u_N
            axpy(1.0, &du1, &mut du);
            let d_o = du1;
            // o = Σ p_â y_â + p_a β
            let p = &trace.answer_probs;
            let mut dp: Vec<f64> = trace.answer_vectors.iter().map(|y| dot(y, &d_o)).collect();
            dp[fp.action] += dot(&self.beta, &d_o);
            for (dyj, pj) in dy.iter_mut().zip(p) {
                axpy(*pj, &d_o, dyj);
            }
            axpy(p[fp.action], &d_o, &mut grads.beta);
            let dz = softmax_backward(p, &dp);
            axpy(1.0, &dz, &mut d_logits);
        }

        // logits z_j = u_N · y_j
        for ((dyj, y), &g) in dy.iter_mut().zip(&trace.answer_vectors).zip(&d_logits) {
            if g != 0.0 {
                axpy(g, y, &mut du);
                axpy(g, u_n, dyj);
            }
        }
        let answer_grad = grads.answer_mut();
        for (c, dyj) in trace.candidates.iter().zip(&dy) {
            if dyj.iter().all(|x| *x == 0.0) {
                continue;
            }
            for &w in c {
                axpy(1.0, dyj, answer_grad.row_mut(w));
            }
        }

        // hops, last to first: u_n = u_{n-1} + Σ p_i m_i
        let mems = &trace.memory_vectors;
        let mut dm = vec![vec![0.0; d]; mems.len()];
        for n in (0..trace.attention.len()).rev() {
            let p = &trace.attention[n];
            let u_prev = &trace.states[n];
            let dp: Vec<f64> = mems.iter().map(|m| dot(m, &du)).collect();
            for (dmi, pi) in dm.iter_mut().zip(p) {
                axpy(*pi, &du, dmi);
            }
            let ds = softmax_backward(p, &dp);
            let mut du_prev = du.clone();
            for ((dmi, m), &s) in dm.iter_mut().zip(mems).zip(&ds) {
                axpy(s, m, &mut du_prev);
                axpy(s, u_prev, dmi);
            }
            du = du_prev;
        }

        for &w in trace.question {
            axpy(1.0, &du, grads.input.row_mut(w));
        }
        let k = trace.memories.len();
        for (i, (m, dmi)) in trace.memories.iter().zip(&dm).enumerate() {
            for &w in m {
                axpy(1.0, dmi, grads.input.row_mut(w));
            }
            if let Some(t) = grads.temporal.as_mut() {
                axpy(1.0, dmi, t.row_mut(k - 1 - i));
            }
        }
    }
}

/// Which softmax a cross-entropy loss applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Answer,
    Feedback,
}

impl ModelParams {
    /// Accumulate `scale · ∇(−log p(target))` into `grads`; returns the loss.
    pub fn accumulate_xent(
        &self,
        trace: &ForwardTrace<'_>,
        head: Head,
        target: usize,
        scale: f64,
        grads: &mut Gradients,
    ) -> f64 {
        let probs = match head {
            Head::Answer => &trace.answer_probs,
            Head::Feedback => &trace.fp.as_ref().expect("feedback head needs forward_fp").feedback_probs,
        };
        let loss = -probs[target].max(MIN_PROB).ln();
        let mut g: Vec<f64> = probs.iter().map(|p| scale * p).collect();
        g[target] -= scale;
        match head {
            Head::Answer => self.backward(trace, Some(&g), None, grads),
            Head::Feedback => self.backward(trace, None, Some(&g), grads),
        }
        grads.count += 1;
        loss
    }

    /// Cross-entropy loss and its exact gradient.
    pub fn loss_xent(&self, trace: &ForwardTrace<'_>, head: Head, target: usize) -> (f64, Gradients) {
        let mut g = Gradients::zeros_like(self);
        let loss = self.accumulate_xent(trace, head, target, 1.0, &mut g);
        (loss, g)
    }

    /// Policy-gradient estimate `(r − b) ∇log p(a)` (an ascent direction) and
    /// the advantage `r − b`. The baseline receives no gradient here.
    pub fn loss_reinforce(&self, trace: &ForwardTrace<'_>, action: usize, reward: f64, baseline: f64) -> (Gradients, f64) {
        let advantage = reward - baseline;
        let mut g = Gradients::zeros_like(self);
        if advantage != 0.0 {
            self.accumulate_xent(trace, Head::Answer, action, -advantage, &mut g);
        }
        (g, advantage)
    }

    /// Linear reward estimate from the last memory state.
    pub fn baseline_predict(&self, u_n: &[f64]) -> f64 {
        dot(&self.baseline_weights, u_n) + self.baseline_bias[0]
    }

    /// Accumulate the gradient of `(r − b)²` w.r.t. the baseline weights only.
    pub fn accumulate_baseline(&self, u_n: &[f64], baseline: f64, reward: f64, grads: &mut Gradients) {
        let g = -2.0 * (reward - baseline);
        axpy(g, u_n, &mut grads.baseline_weights);
        grads.baseline_bias[0] += g;
    }

    pub fn baseline_update(&self, u_n: &[f64], baseline: f64, reward: f64) -> Gradients {
        let mut g = Gradients::zeros_like(self);
        self.accumulate_baseline(u_n, baseline, reward, &mut g);
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memnet::{Block, ModelConfig};

    fn config(vocab: usize, dim: usize) -> ModelConfig {
        ModelConfig { hops: 1, temporal: false, memory_slots: 4, ..ModelConfig::new(vocab, dim) }
    }

    fn set(t: &mut Table, row: usize, v: &[f64]) {
        t.row_mut(row).copy_from_slice(v);
    }

    #[test]
    fn encode_bow_cases() {
        let mut t = Table::zeros(3, 2);
        set(&mut t, 1, &[1.0, 2.0]);
        set(&mut t, 2, &[-0.5, 4.0]);
        assert_eq!(encode_bow(&[], &t), vec![0.0, 0.0]);
        assert_eq!(encode_bow(&[1], &t), t.row(1).to_vec());
        let expected: Vec<f64> = (0..2).map(|k| 2.0 * t.row(1)[k] + t.row(2)[k]).collect();
        assert_eq!(encode_bow(&[1, 1, 2], &t), expected);
    }

    #[test]
    fn hop_cases() {
        let (p, o) = hop(&[0.3, -1.0], &[vec![2.0, 5.0]]).unwrap();
        assert_eq!(p, vec![1.0]);
        assert_eq!(o, vec![2.0, 5.0]);

        let (p, _) = hop(&[1.0, 0.0], &[vec![0.5, 1.0], vec![0.5, -3.0], vec![0.5, 0.0]]).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }

        let (p, o) = hop(&[1.0, 0.0], &[vec![2f64.ln(), 1.0], vec![0.0, 4.0]]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((o[1] - (2.0 / 3.0 + 4.0 / 3.0)).abs() < 1e-15);

        assert!(matches!(hop(&[1.0], &[]), Err(Error::EmptyMemory)));
    }

    #[test]
    fn zero_params_give_uniform_answers() {
        let p = ModelParams::zeros(config(8, 3)).unwrap();
        let cands = vec![vec![1], vec![2], vec![3], vec![4]];
        let mems = vec![vec![5, 6]];
        let t = p.forward_answer(Query { question: &[7], memories: &mems }, &cands);
        assert!(t.answer_probs.iter().all(|x| *x == 0.25));
    }

    #[test]
    fn equal_logits_split_evenly() {
        let mut p = ModelParams::zeros(config(4, 2)).unwrap();
        set(&mut p.input, 1, &[1.0, 0.0]);
        let b = p.answer.as_mut().unwrap();
        set(b, 2, &[1.0, 0.0]);
        set(b, 3, &[1.0, 5.0]);
        let cands = vec![vec![2], vec![3]];
        let t = p.forward_answer(Query { question: &[1], memories: &[] }, &cands);
        assert_eq!(t.answer_logits, vec![1.0, 1.0]);
        assert_eq!(t.answer_probs, vec![0.5, 0.5]);
    }

    #[test]
    fn empty_context_reads_null_memory() {
        let p = ModelParams::init(config(5, 3), 1).unwrap();
        let cands = vec![vec![3], vec![4]];
        let t = p.forward_answer(Query { question: &[1, 2], memories: &[] }, &cands);
        assert_eq!(t.attention, vec![vec![1.0]]);
        assert_eq!(t.states[1], t.states[0]);
    }

    #[test]
    fn memories_beyond_slots_are_dropped_oldest_first() {
        let p = ModelParams::init(ModelConfig { temporal: true, ..config(6, 2) }, 2).unwrap();
        let mems: Vec<Vec<usize>> = (0..6).map(|i| vec![i % 5 + 1]).collect();
        let cands = vec![vec![2]];
        let t = p.forward_answer(Query { question: &[1], memories: &mems }, &cands);
        assert_eq!(t.attention[0].len(), 4);
        let recent = p.forward_answer(Query { question: &[1], memories: &mems[2..] }, &cands);
        assert_eq!(t.attention, recent.attention);
    }

    /// u = (1,0), y = ((ln2,0),(0,0)), β = (0,1), action 0, responses
    /// x₀ = (0,1), x₁ = (1,0): worked by hand.
    #[test]
    fn fp_hand_example() {
        let mut p = ModelParams::zeros(config(6, 2)).unwrap();
        set(&mut p.input, 1, &[1.0, 0.0]);
        set(&mut p.input, 4, &[0.0, 1.0]);
        set(&mut p.input, 5, &[1.0, 0.0]);
        set(p.answer.as_mut().unwrap(), 2, &[2f64.ln(), 0.0]);
        p.beta = vec![0.0, 1.0];
        let cands = vec![vec![2], vec![3]];
        let pool = vec![
            ResponseTemplate { tokens: vec![4], answer_slot: false },
            ResponseTemplate { tokens: vec![5], answer_slot: false },
        ];
        let t = p.forward_fp(Query { question: &[1], memories: &[] }, &cands, 0, &pool).unwrap();
        let fp = t.fp.as_ref().unwrap();
        // p = (2/3, 1/3); o = (2/3 ln2, 2/3); u1 = (1 + 2/3 ln2, 2/3)
        assert!((fp.u1[0] - (1.0 + 2.0 / 3.0 * 2f64.ln())).abs() < 1e-12);
        assert!((fp.u1[1] - 2.0 / 3.0).abs() < 1e-12);
        let t0 = 1.0 / (1.0 + (1.0f64 / 3.0).exp() * 2f64.powf(2.0 / 3.0));
        assert!((fp.feedback_probs[0] - t0).abs() < 1e-10);
        assert!((fp.feedback_probs[1] - (1.0 - t0)).abs() < 1e-10);
    }

    #[test]
    fn fp_rejects_action_outside_candidates() {
        let p = ModelParams::init(config(6, 2), 1).unwrap();
        let pool = vec![ResponseTemplate { tokens: vec![4], answer_slot: false }];
        let cands = vec![vec![2]];
        let r = p.forward_fp(Query { question: &[1], memories: &[] }, &cands, 3, &pool);
        assert!(matches!(r, Err(Error::ActionOutOfRange { action: 3, size: 1 })));
    }

    #[test]
    fn fp_single_response_is_certain() {
        let p = ModelParams::init(config(6, 3), 4).unwrap();
        let pool = vec![ResponseTemplate { tokens: vec![4, 5], answer_slot: false }];
        let cands = vec![vec![2], vec![3]];
        let t = p.forward_fp(Query { question: &[1], memories: &[] }, &cands, 1, &pool).unwrap();
        assert_eq!(t.fp.unwrap().feedback_probs, vec![1.0]);
    }

    #[test]
    fn fp_without_beta_ignores_action() {
        let mut p = ModelParams::init(ModelConfig { hops: 2, ..config(9, 4) }, 5).unwrap();
        p.beta = vec![0.0; 4];
        let cands = vec![vec![2], vec![3], vec![4, 5]];
        let pool = vec![
            ResponseTemplate { tokens: vec![6], answer_slot: false },
            ResponseTemplate { tokens: vec![7, 8], answer_slot: true },
        ];
        let mems = vec![vec![1, 6], vec![8]];
        let q = Query { question: &[1, 2], memories: &mems };
        let dists: Vec<Vec<f64>> = (0..3)
            .map(|a| p.forward_fp(q, &cands, a, &pool).unwrap().fp.unwrap().feedback_probs)
            .collect();
        assert_eq!(dists[0].len(), 1 + 3);
        assert_eq!(dists[0], dists[1]);
        assert_eq!(dists[1], dists[2]);
    }

    #[test]
    fn response_indices_expand_slotted_templates() {
        let pool = vec![
            ResponseTemplate { tokens: vec![1], answer_slot: false },
            ResponseTemplate { tokens: vec![2], answer_slot: true },
            ResponseTemplate { tokens: vec![3], answer_slot: false },
        ];
        assert_eq!(response_count(&pool, 4), 6);
        assert_eq!(response_index(&pool, 4, 0, None), 0);
        assert_eq!(response_index(&pool, 4, 1, Some(2)), 3);
        assert_eq!(response_index(&pool, 4, 2, None), 5);
    }

    #[test]
    fn xent_certain_target_has_zero_loss_and_gradient() {
        let mut p = ModelParams::zeros(config(4, 2)).unwrap();
        set(&mut p.input, 1, &[1.0, 0.0]);
        set(p.answer.as_mut().unwrap(), 2, &[2000.0, 0.0]);
        let cands = vec![vec![2], vec![3]];
        let t = p.forward_answer(Query { question: &[1], memories: &[] }, &cands);
        let (loss, g) = p.loss_xent(&t, Head::Answer, 0);
        assert_eq!(loss, 0.0);
        for b in Block::ALL {
            if let Some(v) = g.block(b) {
                assert!(v.iter().all(|x| *x == 0.0), "{b}");
            }
        }
    }

    #[test]
    fn xent_uniform_is_log_l() {
        let p = ModelParams::zeros(config(6, 2)).unwrap();
        let cands = vec![vec![1], vec![2], vec![3], vec![4]];
        let t = p.forward_answer(Query { question: &[5], memories: &[] }, &cands);
        for target in 0..4 {
            assert!((p.loss_xent(&t, Head::Answer, target).0 - 4f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn reinforce_identities() {
        let p = ModelParams::init(ModelConfig { hops: 2, temporal: true, ..config(8, 3) }, 11).unwrap();
        let cands = vec![vec![2], vec![3], vec![4]];
        let mems = vec![vec![5], vec![6, 7]];
        let t = p.forward_answer(Query { question: &[1], memories: &mems }, &cands);

        let (g, adv) = p.loss_reinforce(&t, 1, 0.4, 0.4);
        assert_eq!(adv, 0.0);
        assert_eq!(g, Gradients::zeros_like(&p));

        let (g, adv) = p.loss_reinforce(&t, 1, 1.0, 0.0);
        assert_eq!(adv, 1.0);
        let (_, mut x) = p.loss_xent(&t, Head::Answer, 1);
        x.scale(-1.0);
        for b in Block::ALL {
            assert_eq!(g.block(b), x.block(b), "{b}");
        }
    }

    #[test]
    fn baseline_cases() {
        let mut p = ModelParams::zeros(config(3, 2)).unwrap();
        assert_eq!(p.baseline_predict(&[0.3, 9.0]), 0.0);
        p.baseline_weights = vec![1.0, 0.0];
        p.baseline_bias = vec![0.1];
        assert!((p.baseline_predict(&[0.3, 9.0]) - 0.4).abs() < 1e-15);
        let g = p.baseline_update(&[0.3, 9.0], 0.4, 0.4);
        assert_eq!(g.baseline_weights, vec![0.0, 0.0]);
        assert_eq!(g.baseline_bias, vec![0.0]);
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let p = ModelParams::init(ModelConfig { hops: 3, temporal: true, ..config(10, 5) }, 8).unwrap();
        let cands = vec![vec![2], vec![3, 4]];
        let mems = vec![vec![5], vec![6, 7], vec![8, 9, 1]];
        let pool = vec![ResponseTemplate { tokens: vec![6], answer_slot: true }];
        let q = Query { question: &[1, 9], memories: &mems };
        let a = p.forward_fp(q, &cands, 1, &pool).unwrap();
        let b = p.forward_fp(q, &cands, 1, &pool).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.fp.unwrap().feedback_probs, b.fp.unwrap().feedback_probs);
    }
}
