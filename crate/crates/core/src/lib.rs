//! Dialogue learning from teacher feedback.
//!
//! A bag-of-words end-to-end memory network answers questions about short
//! stories or knowledge-base facts. It learns online from a teacher that
//! replies with textual feedback and (sometimes) a numeric reward, using
//! reward-based imitation, REINFORCE, forward prediction of the teacher's
//! reply, or a combination of the last two.
//!
//! Crate layout:
//! - [`corpus`]: dataset parsing, tokenization, vocabularies, candidate sets
//! - [`memnet`]: the memory network, its gradients, SGD and checkpoints
//! - [`policies`]: action selection and the learning algorithms
//! - [`simulator`]: the scripted teacher (ten tasks) and episode runners
//! - [`harness`]: experiment configs, metrics files and table/figure runs

pub mod corpus;
pub mod error;
pub mod harness;
pub mod memnet;
pub mod policies;
pub mod simulator;

pub use error::{Error, Result};
