use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shape and weight-sharing choices, fixed for a model's lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding dimension d.
    pub dim: usize,
    /// Memory hops N (1..=3).
    pub hops: usize,
    pub vocab_size: usize,
    /// Rows of the temporal table; memories beyond this many are dropped
    /// oldest first.
    pub memory_slots: usize,
    /// Add a learned vector per memory position (most recent = slot 0).
    pub temporal: bool,
    /// Embed answer candidates with the input matrix instead of their own.
    pub tie_answer: bool,
    /// Embed feedback responses with their own matrix instead of the input one.
    pub untie_feedback: bool,
    pub init_std: f64,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, dim: usize) -> Self {
        ModelConfig {
            dim,
            hops: 2,
            vocab_size,
            memory_slots: 50,
            temporal: true,
            tie_answer: false,
            untie_feedback: false,
            init_std: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.vocab_size == 0 {
            return Err(Error::Config("dim and vocab_size must be positive".into()));
        }
        if !(1..=3).contains(&self.hops) {
            return Err(Error::Config(format!("hops must be 1..=3, got {}", self.hops)));
        }
        if self.memory_slots == 0 {
            return Err(Error::Config("memory_slots must be positive".into()));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(Error::Config("init_std must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Row-major `rows × dim` matrix; row `i` is the vector of word (or slot) `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Table {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Table { rows, dim, data: vec![0.0; rows * dim] }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Sum of the rows named by `tokens` (with multiplicity).
    pub fn bag(&self, tokens: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &t in tokens {
            for (o, x) in out.iter_mut().zip(self.row(t)) {
                *o += x;
            }
        }
        out
    }
}

/// Named parameter blocks, used for error messages, checkpoints and
/// gradient checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Input,
    Answer,
    Feedback,
    Temporal,
    Beta,
    BaselineWeights,
    BaselineBias,
}

impl Block {
    pub const ALL: [Block; 7] = [
        Block::Input,
        Block::Answer,
        Block::Feedback,
        Block::Temporal,
        Block::Beta,
        Block::BaselineWeights,
        Block::BaselineBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::Input => "input",
            Block::Answer => "answer",
            Block::Feedback => "feedback",
            Block::Temporal => "temporal",
            Block::Beta => "beta",
            Block::BaselineWeights => "baseline_weights",
            Block::BaselineBias => "baseline_bias",
        }
    }
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Every learned quantity: the memory network, the forward-prediction head
/// and the reward baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub seed: u64,
    /// A: question, memory (and by default feedback) embeddings.
    pub input: Table,
    /// Answer-candidate embeddings, unless tied to `input`.
    pub answer: Option<Table>,
    /// Feedback-response embeddings when untied from `input`.
    pub feedback: Option<Table>,
    pub temporal: Option<Table>,
    /// β: marks the action actually taken in forward prediction.
    pub beta: Vec<f64>,
    pub baseline_weights: Vec<f64>,
    pub baseline_bias: Vec<f64>,
}

impl ModelParams {
    /// Gaussian initialization with the configured std; baseline starts at zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, config.init_std.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::Config(e.to_string()))?;
        let std = config.init_std;
        let mut table = |rows: usize| {
            let mut t = Table::zeros(rows, config.dim);
            if std > 0.0 {
                t.data.iter_mut().for_each(|x| *x = normal.sample(&mut rng));
            }
            t
        };
        let input = table(config.vocab_size);
        let answer = (!config.tie_answer).then(|| table(config.vocab_size));
        let feedback = config.untie_feedback.then(|| table(config.vocab_size));
        let temporal = config.temporal.then(|| table(config.memory_slots));
        let beta = table(1).data;
        Ok(ModelParams {
            config,
            seed,
            input,
            answer,
            feedback,
            temporal,
            beta,
            baseline_weights: vec![0.0; config.dim],
            baseline_bias: vec![0.0],
        })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let mut p = Self::init(ModelConfig { init_std: 0.0, ..config }, 0)?;
        p.config.init_std = config.init_std;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn answer_table(&self) -> &Table {
        self.answer.as_ref().unwrap_or(&self.input)
    }

    pub fn feedback_table(&self) -> &Table {
        self.feedback.as_ref().unwrap_or(&self.input)
    }

    pub fn block(&self, b: Block) -> Option<&[f64]> {
        match b {
            Block::Input => Some(&self.input.data),
            Block::Answer => self.answer.as_ref().map(|t| t.data.as_slice()),
            Block::Feedback => self.feedback.as_ref().map(|t| t.data.as_slice()),
            Block::Temporal => self.temporal.as_ref().map(|t| t.data.as_slice()),
            Block::Beta => Some(&self.beta),
            Block::BaselineWeights => Some(&self.baseline_weights),
            Block::BaselineBias => Some(&self.baseline_bias),
        }
    }

    pub fn block_mut(&mut self, b: Block) -> Option<&mut [f64]> {
        match b {
            Block::Input => Some(&mut self.input.data),
            Block::Answer => self.answer.as_mut().map(|t| t.data.as_mut_slice()),
            Block::Feedback => self.feedback.as_mut().map(|t| t.data.as_mut_slice()),
            Block::Temporal => self.temporal.as_mut().map(|t| t.data.as_mut_slice()),
            Block::Beta => Some(&mut self.beta),
            Block::BaselineWeights => Some(&mut self.baseline_weights),
            Block::BaselineBias => Some(&mut self.baseline_bias),
        }
    }

    /// Exact number of learned scalars.
    pub fn num_parameters(&self) -> usize {
        Block::ALL.iter().filter_map(|&b| self.block(b)).map(<[f64]>::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        Block::ALL
            .iter()
            .filter_map(|&b| self.block(b))
            .all(|s| s.iter().all(|x| x.is_finite()))
    }
}

/// Gradient table that remembers which rows were written, so clearing and
/// stepping cost only the touched rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GradTable {
    pub dim: usize,
    data: Vec<f64>,
    mark: Vec<bool>,
    touched: Vec<usize>,
}

impl GradTable {
    pub fn new(rows: usize, dim: usize) -> Self {
        GradTable { dim, data: vec![0.0; rows * dim], mark: vec![false; rows], touched: Vec::new() }
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        if !self.mark[i] {
            self.mark[i] = true;
            self.touched.push(i);
        }
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn touched(&self) -> &[usize] {
        &self.touched
    }

    pub fn dense(&self) -> &[f64] {
        &self.data
    }

    fn clear(&mut self) {
        for &i in &self.touched {
            self.mark[i] = false;
            self.data[i * self.dim..(i + 1) * self.dim].iter_mut().for_each(|x| *x = 0.0);
        }
        self.touched.clear();
    }

    fn for_each_touched(&self, mut f: impl FnMut(usize, &[f64])) {
        for &i in &self.touched {
            f(i, self.row(i));
        }
    }

    fn scale(&mut self, s: f64) {
        for &i in &self.touched {
            self.data[i * self.dim..(i + 1) * self.dim].iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// Gradients, shape-congruent with [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub input: GradTable,
    pub answer: Option<GradTable>,
    pub feedback: Option<GradTable>,
    pub temporal: Option<GradTable>,
    pub beta: Vec<f64>,
    pub baseline_weights: Vec<f64>,
    pub baseline_bias: Vec<f64>,
    /// Number of losses accumulated since the last clear.
    pub count: usize,
}

impl Gradients {
    pub fn zeros_like(p: &ModelParams) -> Self {
        let d = p.dim();
        let like = |t: &Option<Table>| t.as_ref().map(|t| GradTable::new(t.rows, d));
        Gradients {
            input: GradTable::new(p.input.rows, d),
            answer: like(&p.answer),
            feedback: like(&p.feedback),
            temporal: like(&p.temporal),
            beta: vec![0.0; d],
            baseline_weights: vec![0.0; d],
            baseline_bias: vec![0.0],
            count: 0,
        }
    }

    pub fn clear(&mut self) {
        self.input.clear();
        for t in [&mut self.answer, &mut self.feedback, &mut self.temporal].into_iter().flatten() {
            t.clear();
        }
        for v in [&mut self.beta, &mut self.baseline_weights, &mut self.baseline_bias] {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        self.count = 0;
    }

    pub(crate) fn answer_mut(&mut self) -> &mut GradTable {
        self.answer.as_mut().unwrap_or(&mut self.input)
    }

    pub(crate) fn feedback_mut(&mut self) -> &mut GradTable {
        self.feedback.as_mut().unwrap_or(&mut self.input)
    }

    fn table(&self, b: Block) -> Option<&GradTable> {
        match b {
            Block::Input => Some(&self.input),
            Block::Answer => self.answer.as_ref(),
            Block::Feedback => self.feedback.as_ref(),
            Block::Temporal => self.temporal.as_ref(),
            _ => None,
        }
    }

    /// Dense view of one block.
    pub fn block(&self, b: Block) -> Option<&[f64]> {
        match b {
            Block::Beta => Some(&self.beta),
            Block::BaselineWeights => Some(&self.baseline_weights),
            Block::BaselineBias => Some(&self.baseline_bias),
            _ => self.table(b).map(GradTable::dense),
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.input.scale(s);
        for t in [&mut self.answer, &mut self.feedback, &mut self.temporal].into_iter().flatten() {
            t.scale(s);
        }
        for v in [&mut self.beta, &mut self.baseline_weights, &mut self.baseline_bias] {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Squared L2 norm of the policy parameters (baseline excluded).
    fn policy_norm_sq(&self) -> f64 {
        let mut s = 0.0;
        let tables = [Some(&self.input), self.answer.as_ref(), self.feedback.as_ref(), self.temporal.as_ref()];
        for t in tables.into_iter().flatten() {
            t.for_each_touched(|_, r| s += r.iter().map(|x| x * x).sum::<f64>());
        }
        s + self.beta.iter().map(|x| x * x).sum::<f64>()
    }

    fn check_finite(&self) -> Result<()> {
        for b in Block::ALL {
            let finite = match self.table(b) {
                Some(t) => {
                    let mut ok = true;
                    t.for_each_touched(|_, r| ok &= r.iter().all(|x| x.is_finite()));
                    ok
                }
                None => self.block(b).is_none_or(|v| v.iter().all(|x| x.is_finite())),
            };
            if !finite {
                return Err(Error::NonFinite(b.name().into()));
            }
        }
        Ok(())
    }
}

/// `params -= lr * grads`, optionally rescaling the policy gradient to a
/// maximum global L2 norm. The baseline regressor's gradient is clipped to
/// the same norm on its own.
pub fn sgd_step(params: &mut ModelParams, grads: &Gradients, lr: f64, clip: Option<f64>) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    grads.check_finite()?;
    let mut scale = 1.0;
    if let Some(max) = clip {
        let norm = grads.policy_norm_sq().sqrt();
        if norm > max {
            scale = max / norm;
        }
    }
    let step = lr * scale;
    let apply = |t: &mut Table, g: &GradTable| {
        g.for_each_touched(|i, r| {
            for (p, x) in t.row_mut(i).iter_mut().zip(r) {
                *p -= step * x;
            }
        })
    };
    apply(&mut params.input, &grads.input);
    if let (Some(t), Some(g)) = (params.answer.as_mut(), grads.answer.as_ref()) {
        apply(t, g);
    }
    if let (Some(t), Some(g)) = (params.feedback.as_mut(), grads.feedback.as_ref()) {
        apply(t, g);
    }
    if let (Some(t), Some(g)) = (params.temporal.as_mut(), grads.temporal.as_ref()) {
        apply(t, g);
    }
    for (p, g) in params.beta.iter_mut().zip(&grads.beta) {
        *p -= step * g;
    }
    let mut baseline_step = lr;
    if let Some(max) = clip {
        let norm = (grads.baseline_weights.iter().map(|g| g * g).sum::<f64>() + grads.baseline_bias[0].powi(2)).sqrt();
        if norm > max {
            baseline_step = lr * max / norm;
        }
    }
    for (p, g) in params.baseline_weights.iter_mut().zip(&grads.baseline_weights) {
        *p -= baseline_step * g;
    }
    params.baseline_bias[0] -= baseline_step * grads.baseline_bias[0];
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelParams {
        ModelParams::init(ModelConfig { memory_slots: 4, ..ModelConfig::new(6, 3) }, 9).unwrap()
    }

    #[test]
    fn parameter_count_is_exact() {
        let p = small();
        // A and B (6x3), temporal (4x3), beta (3), baseline (3 + 1)
        assert_eq!(p.num_parameters(), 18 + 18 + 12 + 3 + 4);
        let tied = ModelParams::init(
            ModelConfig { tie_answer: true, temporal: false, untie_feedback: true, ..p.config },
            1,
        )
        .unwrap();
        assert_eq!(tied.num_parameters(), 18 + 18 + 3 + 4);
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(small(), small());
        let other = ModelParams::init(small().config, 10).unwrap();
        assert_ne!(small().input, other.input);
    }

    fn grads_equal_to_params(p: &ModelParams) -> Gradients {
        let mut g = Gradients::zeros_like(p);
        for i in 0..p.input.rows {
            g.input.row_mut(i).copy_from_slice(p.input.row(i));
        }
        let b = p.answer.as_ref().unwrap();
        for i in 0..b.rows {
            g.answer.as_mut().unwrap().row_mut(i).copy_from_slice(b.row(i));
        }
        let t = p.temporal.as_ref().unwrap();
        for i in 0..t.rows {
            g.temporal.as_mut().unwrap().row_mut(i).copy_from_slice(t.row(i));
        }
        g.beta.copy_from_slice(&p.beta);
        g
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = small();
        let before = p.clone();
        sgd_step(&mut p, &Gradients::zeros_like(&before), 0.1, Some(40.0)).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn unit_step_on_params_zeroes_them() {
        let mut p = small();
        let g = grads_equal_to_params(&p);
        sgd_step(&mut p, &g, 1.0, None).unwrap();
        for b in Block::ALL {
            if let Some(v) = p.block(b) {
                assert!(v.iter().all(|x| *x == 0.0), "{b}");
            }
        }
    }

    #[test]
    fn quadratic_matches_closed_form() {
        // f(θ) = ½‖θ‖², gradient θ: after k steps θ_k = (1 - lr)^k θ_0
        let mut p = small();
        let start = p.clone();
        for _ in 0..2 {
            let g = grads_equal_to_params(&p);
            sgd_step(&mut p, &g, 0.1, None).unwrap();
        }
        for (a, b) in p.input.data.iter().zip(&start.input.data) {
            assert!((a - 0.81 * b).abs() < 1e-14);
        }
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut p = small();
        let mut g = Gradients::zeros_like(&p);
        g.beta[1] = f64::NAN;
        match sgd_step(&mut p, &g, 0.1, None) {
            Err(Error::NonFinite(b)) => assert_eq!(b, "beta"),
            other => panic!("{other:?}"),
        }
        let mut g = Gradients::zeros_like(&p);
        g.temporal.as_mut().unwrap().row_mut(2)[0] = f64::INFINITY;
        assert!(matches!(sgd_step(&mut p, &g, 0.1, None), Err(Error::NonFinite(b)) if b == "temporal"));
    }

    #[test]
    fn clip_bounds_the_update_norm() {
        let mut p = small();
        let before = p.clone();
        let mut g = Gradients::zeros_like(&p);
        g.input.row_mut(0).copy_from_slice(&[300.0, 400.0, 0.0]);
        sgd_step(&mut p, &g, 1.0, Some(5.0)).unwrap();
        let d0 = before.input.row(0)[0] - p.input.row(0)[0];
        let d1 = before.input.row(0)[1] - p.input.row(0)[1];
        assert!((d0 - 3.0).abs() < 1e-12 && (d1 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn clear_resets_touched_rows() {
        let p = small();
        let mut g = Gradients::zeros_like(&p);
        g.input.row_mut(3)[1] = 2.0;
        g.count = 4;
        g.clear();
        assert_eq!(g, Gradients::zeros_like(&p));
    }
}
