//! Desk-scale settings for the standard runs.

use super::{DataSource, DatasetConfig, ExperimentConfig, HumanExperiment, ModelSettings, SecondIteration};
use crate::policies::{Algorithm, PolicyConfig, UpdateConfig};
use crate::simulator::{Convergence, RunSettings, SyntheticMode};

/// Generated bAbI with 400/80/200 stories of 20 statements.
pub fn desk_babi() -> DatasetConfig {
    let mut d = DatasetConfig::synth_babi(400, 80, 200);
    if let DataSource::SynthBabi { statements, .. } = &mut d.source {
        *statements = 20;
    }
    d
}

/// Answers scored with the input embedding, so that even an untrained bot
/// leans towards entities in its memory.
pub fn desk_model() -> ModelSettings {
    ModelSettings { dim: 40, tie_answer: true, ..ModelSettings::default() }
}

impl ExperimentConfig {
    /// Dataset-batch run on generated bAbI.
    pub fn desk(task: u8, algorithm: Algorithm) -> Self {
        ExperimentConfig {
            name: String::new(),
            seed: 0,
            task,
            dataset: desk_babi(),
            model: desk_model(),
            policy: PolicyConfig::new(algorithm),
            run: RunSettings {
                convergence: Convergence { patience: 25, ..Convergence::default() },
                ..RunSettings::default()
            },
            output_dir: None,
            wall_clock: false,
        }
    }
}

impl HumanExperiment {
    /// Generated WikiMovies with Task 2+3 style feedback.
    pub fn desk() -> Self {
        HumanExperiment {
            seed: 0,
            dataset: DatasetConfig::synth_wikimovies(300, 3000, 300, 600),
            model: desk_model(),
            pool: 300,
            feedback: 1500,
            mode: SyntheticMode::Task2And3,
            r_values: vec![0.0, 0.1, 0.5, 1.0],
            update: UpdateConfig::default(),
            convergence: Convergence { patience: 10, ..Convergence::default() },
        }
    }
}

impl SecondIteration {
    pub fn desk() -> Self {
        SecondIteration {
            first: HumanExperiment::desk(),
            new_batch: 1000,
            epsilons: vec![0.0, 0.25, 0.5],
            r_values: vec![0.0, 0.5, 1.0],
        }
    }
}
