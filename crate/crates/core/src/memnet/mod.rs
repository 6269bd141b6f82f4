//! Bag-of-words end-to-end memory network with a forward-prediction head.
//!
//! Memories and the question are embedded by summing word vectors of the
//! input matrix A; N hops of softmax attention refine the state
//! `u_n = u_{n-1} + Σ p_i m_i`; the answer is a softmax of `u_N · y_j` over
//! candidate embeddings. Forward prediction adds one hop over the answer
//! candidates (β marks the chosen one) and a softmax over teacher responses.
//!
//! Gradients are derived by hand; `tests/gradcheck.rs` checks every block
//! against central finite differences.

mod checkpoint;
pub mod math;
mod forward;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{
    encode_bow, hop, response_count, response_index, ForwardTrace, FpTrace, Head, Query,
    ResponseTemplate, MIN_PROB,
};
pub use params::{sgd_step, Block, GradTable, Gradients, ModelConfig, ModelParams, Table};
