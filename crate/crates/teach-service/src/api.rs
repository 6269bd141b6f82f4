//! Request and response bodies. Every body carries `v`, the schema version.

use dialearn::policies::Algorithm;
use serde::{Deserialize, Serialize};

pub const API_VERSION: u32 = 1;

/// Longest accepted feedback text, in characters.
pub const MAX_FEEDBACK_CHARS: usize = 500;

fn version() -> u32 {
    API_VERSION
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolSplit {
    #[default]
    Train,
    Valid,
    Test,
}

/// Where a session's questions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QuestionSource {
    /// A slice of one split of the loaded dataset; questions are drawn at
    /// random from it.
    Pool {
        #[serde(default)]
        split: PoolSplit,
        #[serde(default)]
        offset: usize,
        #[serde(default)]
        limit: Option<usize>,
    },
    /// Questions written by the teacher, asked in order.
    Questions { items: Vec<AuthoredQuestion> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthoredQuestion {
    /// Context sentences, oldest first.
    #[serde(default)]
    pub story: Vec<String>,
    pub question: String,
    /// Gold answers, if known; used only for metrics.
    #[serde(default)]
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default = "version")]
    pub v: u32,
    pub source: QuestionSource,
    pub batch_size: usize,
    /// Probability that a "positive" mark becomes a numeric reward.
    #[serde(default = "full_reward_fraction")]
    pub r: f64,
    #[serde(default)]
    pub seed: u64,
}

fn full_reward_fraction() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub v: u32,
    pub session_id: String,
    pub snapshot: u64,
    pub items: usize,
    pub created: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    pub question_id: String,
    pub story: Vec<String>,
    pub question: String,
    pub bot_answer: String,
    /// Present only when the service runs with `show_gold`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Vec<String>>,
    pub snapshot: u64,
    /// 0-based position in the session queue.
    pub position: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextItem {
    pub v: u32,
    pub done: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<ItemView>,
}

/// The teacher's verdict; the service turns "positive" into a reward only
/// with probability r.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMark {
    Positive,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackSubmission {
    #[serde(default = "version")]
    pub v: u32,
    pub question_id: String,
    pub text: String,
    pub reward: RewardMark,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackAck {
    pub v: u32,
    pub session_id: String,
    pub question_id: String,
    /// Whether a numeric reward was stored with the episode.
    pub rewarded: bool,
    /// An earlier submission for the same question was replaced.
    pub overwritten: bool,
    /// Gold answers, revealed once feedback is in (with `show_gold`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    #[serde(default = "version")]
    pub v: u32,
    /// Sessions whose untrained feedback is used; all sessions when empty.
    #[serde(default)]
    pub sessions: Vec<String>,
    pub algorithm: Algorithm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub v: u32,
    pub snapshot: u64,
    pub previous_snapshot: u64,
    pub episodes: usize,
    pub epochs: usize,
    /// Held-out (test split) accuracy before and after training.
    pub accuracy_before: f64,
    pub accuracy_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub v: u32,
    pub session_id: String,
    /// Snapshot that answered this session's questions.
    pub snapshot: u64,
    pub serving_snapshot: u64,
    pub items: usize,
    pub submitted: usize,
    pub pending: usize,
    pub rewarded: usize,
    pub trained: usize,
    /// Fraction of the recorded answers that match gold (items with gold only).
    pub answer_accuracy: Option<f64>,
    /// The same for the currently served snapshot.
    pub live_accuracy: Option<f64>,
    pub r: f64,
    pub created: u64,
    pub updated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub v: u32,
    pub status: String,
    pub snapshot: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub v: u32,
    pub error: String,
}
