use std::collections::HashMap;
use std::path::PathBuf;

use probe_core::{StimRng, Task, TrialInfo};
use thiserror::Error;

/// One model call: a prompt and the images attached to it.
#[derive(Clone, Debug)]
pub struct ModelRequest {
    pub trial_id: String,
    pub task: Task,
    pub prompt: String,
    pub images: Vec<PathBuf>,
}

#[derive(Clone, Debug, Error, PartialEq)]
#[error("{0}")]
pub struct TransportError(pub String);

pub trait ModelClient: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &ModelRequest) -> Result<String, TransportError>;
}

pub const BUILTIN_MODELS: [&str; 3] = ["oracle", "uniform_random", "majority_class"];

/// Reference models. They answer in the bracketed format the prompts ask
/// for, so their output goes through the same parser as real replies.
#[derive(Clone, Debug)]
pub enum BuiltinModel {
    /// Answers the ground truth.
    Oracle { answers: HashMap<String, i64> },
    /// Uniform over the task's guessing range, seeded per trial so answers
    /// do not depend on scheduling.
    UniformRandom { seed: u64 },
    /// Always the same answer.
    MajorityClass { answer: i64 },
}

/// Range a guesser draws from. Numerosity uses the generated counts 1–8
/// rather than the wider parse range.
pub fn guess_range(task: Task) -> (i64, i64) {
    match task {
        Task::Oddball => (1, 6),
        Task::Numerosity => (1, 8),
        Task::Rotation => (0, 1),
    }
}

impl BuiltinModel {
    pub fn oracle(trials: &[TrialInfo]) -> Self {
        BuiltinModel::Oracle {
            answers: trials.iter().map(|t| (t.trial_id.clone(), t.answer)).collect(),
        }
    }

    fn answer(&self, req: &ModelRequest) -> Result<i64, TransportError> {
        match self {
            BuiltinModel::Oracle { answers } => answers
                .get(&req.trial_id)
                .copied()
                .ok_or_else(|| TransportError(format!("oracle has no answer for {}", req.trial_id))),
            BuiltinModel::UniformRandom { seed } => {
                let (lo, hi) = guess_range(req.task);
                let mut rng = StimRng::derived(*seed, &req.trial_id);
                Ok(lo + rng.below((hi - lo + 1) as u64) as i64)
            }
            BuiltinModel::MajorityClass { answer } => Ok(*answer),
        }
    }
}

impl ModelClient for BuiltinModel {
    fn id(&self) -> &str {
        match self {
            BuiltinModel::Oracle { .. } => "oracle",
            BuiltinModel::UniformRandom { .. } => "uniform_random",
            BuiltinModel::MajorityClass { .. } => "majority_class",
        }
    }

    fn complete(&self, req: &ModelRequest) -> Result<String, TransportError> {
        self.answer(req).map(|a| format!("[{a}]"))
    }
}

/// Look up a built-in by name. `majority_class` answers 1.
pub fn builtin_model(name: &str, trials: &[TrialInfo], seed: u64) -> Option<BuiltinModel> {
    match name {
        "oracle" => Some(BuiltinModel::oracle(trials)),
        "uniform_random" => Some(BuiltinModel::UniformRandom { seed }),
        "majority_class" => Some(BuiltinModel::MajorityClass { answer: 1 }),
        _ => None,
    }
}
