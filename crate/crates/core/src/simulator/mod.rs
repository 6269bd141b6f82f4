//! The scripted teacher and the episode runners.
//!
//! The teacher asks a question, the bot answers, and the teacher replies
//! according to one of ten tasks:
//!
//! | task | reply to a wrong answer | reward when correct |
//! |------|-------------------------|---------------------|
//! | 1 | none, the gold answer is demonstrated | none |
//! | 2 | "No, that's incorrect!" | always |
//! | 3 | the gold answer | always |
//! | 4 | the answer type | always |
//! | 5 | the supporting fact | always |
//! | 6 | the gold answer | half the time |
//! | 7 | "No." | never |
//! | 8 | task 2 or task 1, by coin flip | always (task-2 turns) |
//! | 9 | help request, then the gold answer | always |
//! | 10 | help request, then the supporting fact | always |

mod runner;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::StoryQA;
use crate::policies::Reward;
use crate::{Error, Result};

pub use runner::{
    collect_episodes, derive_seed, episode_from_turn, run_dataset_batch, run_episode, run_online,
    train_to_convergence, Convergence, EvalPoint, RunSettings,
};

/// The template file shipped with the crate.
pub const DEFAULT_TEMPLATES: &str = include_str!("../../fixtures/templates.txt");

/// Hint class for questions without a typed answer (bAbI "where is" questions).
pub const DEFAULT_CLASS: &str = "location";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Positive,
    Negative,
    Help,
}

/// Teacher and student utterances keyed by task.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    by_task: BTreeMap<(u8, TemplateKind), Vec<String>>,
    help_request: String,
}

const SLOTS: [&str; 3] = ["{answer}", "{class}", "{fact}"];

impl TemplateSet {
    /// Parse `[taskN.kind]` sections of one template per line; `#` starts a
    /// comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut by_task: BTreeMap<(u8, TemplateKind), Vec<String>> = BTreeMap::new();
        let mut help_request = None;
        let mut section: Option<Option<(u8, TemplateKind)>> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Template { line: line_no, msg };
            if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                if header == "student.help" {
                    section = Some(None);
                    continue;
                }
                let (task, kind) = header.split_once('.').ok_or_else(|| err(format!("bad header [{header}]")))?;
                let task: u8 = task
                    .strip_prefix("task")
                    .and_then(|n| n.parse().ok())
                    .filter(|n| (1..=10).contains(n))
                    .ok_or_else(|| err(format!("bad task in [{header}]")))?;
                let kind = match kind {
                    "positive" => TemplateKind::Positive,
                    "negative" => TemplateKind::Negative,
                    "help" => TemplateKind::Help,
                    _ => return Err(err(format!("unknown template kind {kind:?}"))),
                };
                section = Some(Some((task, kind)));
                continue;
            }
            let mut rest = line;
            while let Some(open) = rest.find('{') {
                let close = rest[open..].find('}').ok_or_else(|| err("unclosed slot".into()))? + open;
                let slot = &rest[open..=close];
                if !SLOTS.contains(&slot) {
                    return Err(err(format!("unknown slot {slot}")));
                }
                rest = &rest[close + 1..];
            }
            match section {
                None => return Err(err("template outside a section".into())),
                Some(None) => help_request = Some(line.to_owned()),
                Some(Some(key)) => by_task.entry(key).or_default().push(line.to_owned()),
            }
        }
        let help_request = help_request.ok_or_else(|| Error::Template { line: 0, msg: "missing [student.help]".into() })?;
        Ok(TemplateSet { by_task, help_request })
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_TEMPLATES).expect("bundled templates parse")
    }

    pub fn get(&self, task: u8, kind: TemplateKind) -> &[String] {
        self.by_task.get(&(task, kind)).map_or(&[], Vec::as_slice)
    }

    pub fn help_request(&self) -> &str {
        &self.help_request
    }

    /// Every template with its slots removed, plus the help request and
    /// the default hint class: text the vocabulary must cover.
    pub fn vocabulary_text(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .by_task
            .values()
            .flatten()
            .map(|t| SLOTS.iter().fold(t.clone(), |s, slot| s.replace(slot, " ")))
            .collect();
        out.push(self.help_request.clone());
        out.push(DEFAULT_CLASS.into());
        out
    }
}

/// One of the ten teacher behaviours.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub id: u8,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
    /// Final teacher turn after the bot asks for help.
    pub help: Vec<String>,
    pub help_request: String,
    /// Probability that a correct answer is rewarded.
    pub reward_prob: f64,
    /// Probability that a turn is a demonstration of the gold answer.
    pub imitation_prob: f64,
}

impl TaskSpec {
    pub fn new(id: u8, templates: &TemplateSet) -> Result<Self> {
        if !(1..=10).contains(&id) {
            return Err(Error::Config(format!("task must be 1..=10, got {id}")));
        }
        let spec = TaskSpec {
            id,
            positive: templates.get(id, TemplateKind::Positive).to_vec(),
            negative: templates.get(id, TemplateKind::Negative).to_vec(),
            help: templates.get(id, TemplateKind::Help).to_vec(),
            help_request: templates.help_request().to_owned(),
            reward_prob: match id {
                1 | 7 => 0.0,
                6 => 0.5,
                _ => 1.0,
            },
            imitation_prob: match id {
                1 => 1.0,
                8 => 0.5,
                _ => 0.0,
            },
        };
        let needs_feedback = id != 1;
        let missing = |v: &[String]| needs_feedback && v.is_empty();
        if missing(&spec.positive) || missing(&spec.negative) || (spec.asks_for_help() && spec.help.is_empty()) {
            return Err(Error::Config(format!("templates for task {id} are incomplete")));
        }
        Ok(spec)
    }

    pub fn builtin(id: u8) -> Result<Self> {
        Self::new(id, &TemplateSet::builtin())
    }

    pub fn asks_for_help(&self) -> bool {
        matches!(self.id, 9 | 10)
    }

    /// Whether correct answers are ever rewarded numerically.
    pub fn has_rewards(&self) -> bool {
        !matches!(self.id, 1 | 7)
    }
}

/// What the teacher says after the bot's answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherTurn {
    /// Final teacher utterance the bot can learn to predict.
    pub text: Option<String>,
    /// The template `text` was instantiated from.
    pub template: Option<String>,
    pub reward: Reward,
    /// Gold answer demonstrated to the bot.
    pub imitation: Option<String>,
    /// Earlier turns of the exchange (the teacher's first reply and the
    /// bot's help request).
    pub prelude: Vec<String>,
}

impl TeacherTurn {
    fn silent(reward: Reward) -> Self {
        TeacherTurn { text: None, template: None, reward, imitation: None, prelude: Vec::new() }
    }
}

fn pick<'t, R: Rng + ?Sized>(templates: &'t [String], rng: &mut R) -> &'t str {
    match templates.len() {
        1 => &templates[0],
        n => &templates[rng.random_range(0..n)],
    }
}

/// Answer type used by hint feedback.
pub fn hint_class(item: &StoryQA) -> &str {
    item.answer_class.as_deref().unwrap_or(DEFAULT_CLASS)
}

/// Fill the slots of `template` for `item`.
pub fn instantiate(template: &str, item: &StoryQA) -> String {
    let mut s = template.to_owned();
    if s.contains("{answer}") {
        s = s.replace("{answer}", &item.answers[0]);
    }
    if s.contains("{class}") {
        s = s.replace("{class}", hint_class(item));
    }
    if s.contains("{fact}") {
        let fact = item.supporting_fact().map(|f| f.join(" ")).unwrap_or_else(|| item.answers[0].clone());
        s = s.replace("{fact}", &fact);
    }
    s
}

fn said<R: Rng + ?Sized>(templates: &[String], item: &StoryQA, rng: &mut R) -> (String, String) {
    let t = pick(templates, rng);
    (instantiate(t, item), t.to_owned())
}

/// The teacher's reply to `answer` (a normalized candidate string).
pub fn teacher_respond<R: Rng + ?Sized>(task: &TaskSpec, item: &StoryQA, answer: &str, rng: &mut R) -> TeacherTurn {
    let correct = item.is_correct(answer);
    let demonstrate = |reward| TeacherTurn { imitation: Some(item.answers[0].clone()), ..TeacherTurn::silent(reward) };
    let p = task.imitation_prob;
    if p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p) {
        return demonstrate(Reward::Absent);
    }
    if correct {
        let (text, template) = said(&task.positive, item, rng);
        let reward = if !task.has_rewards() {
            Reward::Absent
        } else if task.reward_prob >= 1.0 || rng.random::<f64>() < task.reward_prob {
            Reward::Positive
        } else {
            Reward::Zero
        };
        return TeacherTurn { text: Some(text), template: Some(template), reward, imitation: None, prelude: Vec::new() };
    }
    let reward = if task.has_rewards() { Reward::Zero } else { Reward::Absent };
    let (first, first_template) = said(&task.negative, item, rng);
    if task.asks_for_help() {
        let (text, template) = said(&task.help, item, rng);
        return TeacherTurn {
            text: Some(text),
            template: Some(template),
            reward,
            imitation: None,
            prelude: vec![first, task.help_request.clone()],
        };
    }
    TeacherTurn { text: Some(first), template: Some(first_template), reward, imitation: None, prelude: Vec::new() }
}

/// Which simulated feedback stands in for a human teacher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticMode {
    Task2,
    Task3,
    /// Task 2 or Task 3 by a fair coin per example.
    #[serde(rename = "task2+3")]
    Task2And3,
}

impl std::str::FromStr for SyntheticMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "task2" | "2" => Ok(SyntheticMode::Task2),
            "task3" | "3" => Ok(SyntheticMode::Task3),
            "task2+3" | "task2-and3" | "2+3" => Ok(SyntheticMode::Task2And3),
            _ => Err(Error::Config(format!("unknown synthetic feedback mode {s:?}"))),
        }
    }
}

/// Feedback in the style of task 2 or 3 for an already given answer.
pub fn make_synthetic_feedback<R: Rng + ?Sized>(
    mode: SyntheticMode,
    templates: &TemplateSet,
    item: &StoryQA,
    answer: &str,
    rng: &mut R,
) -> TeacherTurn {
    let task = match mode {
        SyntheticMode::Task2 => 2,
        SyntheticMode::Task3 => 3,
        SyntheticMode::Task2And3 => {
            if rng.random_bool(0.5) {
                2
            } else {
                3
            }
        }
    };
    let spec = TaskSpec::new(task, templates).expect("tasks 2 and 3 are complete");
    teacher_respond(&spec, item, answer, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn item() -> StoryQA {
        StoryQA {
            id: "babi:0:3".into(),
            context: vec![
                "mary went to the hallway".split(' ').map(String::from).collect(),
                "mary travelled to the kitchen".split(' ').map(String::from).collect(),
            ],
            question: "where is mary".split(' ').map(String::from).collect(),
            answers: vec!["kitchen".into()],
            supporting: vec![1],
            answer_class: None,
            evidence: vec![],
        }
    }

    #[test]
    fn bundled_templates_cover_every_task() {
        let t = TemplateSet::builtin();
        for id in 1..=10 {
            TaskSpec::new(id, &t).unwrap();
        }
        assert_eq!(t.get(6, TemplateKind::Positive).len(), 6);
        assert_eq!(t.help_request(), "Can you help me?");
        assert!(t.vocabulary_text().iter().all(|s| !s.contains('{')));
    }

    #[test]
    fn template_errors_name_the_line() {
        let bad = "[student.help]\nCan you help me?\n[task3.negative]\nNo, {gold}!\n";
        assert!(matches!(TemplateSet::parse(bad), Err(Error::Template { line: 4, .. })));
        assert!(matches!(TemplateSet::parse("orphan\n"), Err(Error::Template { line: 1, .. })));
        assert!(matches!(TemplateSet::parse("[task11.positive]\n"), Err(Error::Template { line: 1, .. })));
        assert!(TemplateSet::parse("[task2.positive]\nYes\n").is_err());
    }

    #[test]
    fn task3_wrong_answer_names_gold() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = teacher_respond(&TaskSpec::builtin(3).unwrap(), &item(), "garden", &mut rng);
        assert_eq!(t.text.as_deref(), Some("No, the answer is kitchen!"));
        assert_eq!(t.reward, Reward::Zero);
        assert_eq!(t.template.as_deref(), Some("No, the answer is {answer}!"));
    }

    #[test]
    fn task2_correct_is_rewarded() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = teacher_respond(&TaskSpec::builtin(2).unwrap(), &item(), "kitchen", &mut rng);
        assert_eq!(t.text.as_deref(), Some("Yes, that's right!"));
        assert_eq!(t.reward, Reward::Positive);
    }

    #[test]
    fn task4_hint_uses_answer_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut it = item();
        let spec = TaskSpec::builtin(4).unwrap();
        assert_eq!(teacher_respond(&spec, &it, "garden", &mut rng).text.unwrap(), "No, it's a location!");
        it.answer_class = Some("movie".into());
        assert_eq!(teacher_respond(&spec, &it, "garden", &mut rng).text.unwrap(), "No, it's a movie!");
    }

    #[test]
    fn help_exchange_precedes_final_turn() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = teacher_respond(&TaskSpec::builtin(10).unwrap(), &item(), "garden", &mut rng);
        assert_eq!(t.prelude, ["Sorry, that's not it.", "Can you help me?"]);
        assert_eq!(t.text.unwrap(), "A relevant fact is that mary travelled to the kitchen!");
    }

    #[test]
    fn task6_rewards_half_of_correct_answers() {
        let spec = TaskSpec::builtin(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 10_000;
        let rewarded = (0..n)
            .filter(|_| teacher_respond(&spec, &item(), "kitchen", &mut rng).reward == Reward::Positive)
            .count();
        assert!((rewarded as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn synthetic_mix_is_even() {
        let t = TemplateSet::builtin();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let task3 = (0..n)
            .filter(|_| {
                make_synthetic_feedback(SyntheticMode::Task2And3, &t, &item(), "garden", &mut rng)
                    .text
                    .unwrap()
                    .contains("kitchen")
            })
            .count();
        assert!((task3 as f64 / n as f64 - 0.5).abs() < 0.02);
        let pos = make_synthetic_feedback(SyntheticMode::Task2, &t, &item(), "kitchen", &mut rng);
        assert_eq!(pos.text.unwrap(), "Yes, that's right!");
    }
}
