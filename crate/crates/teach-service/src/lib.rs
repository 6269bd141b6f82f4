//! Human teaching service: teachers open sessions of questions, read the
//! bot's answers, reply in free text and mark answers correct or not; the
//! operator retrains on the collected feedback and the new snapshot starts
//! answering.
//!
//! State lives in one directory: `events.ndjson`, an fsynced write-ahead
//! log of sessions, submissions and training runs, and `checkpoints/`, one
//! model file per snapshot. Restarting replays the log.

pub mod api;
mod http;
mod service;

pub use http::{router, serve};
pub use service::{Result, ServiceConfig, ServiceError, TeachService};
