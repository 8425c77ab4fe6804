use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use probe_core::Task;
use serde::{Deserialize, Serialize};

use crate::prompts::PromptMode;

/// Outcome of one trial against one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub trial_id: String,
    pub model_id: String,
    pub task: Task,
    pub mode: PromptMode,
    /// Empty when every attempt failed in transport.
    pub raw_text: String,
    /// `None` is an invalid or missing answer.
    pub parsed_answer: Option<i64>,
    /// Defined exactly when `parsed_answer` is.
    pub correct: Option<bool>,
    pub latency_ms: f64,
    pub attempt_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_error: Option<String>,
}

/// `<root>/evals/<model>/<task>.jsonl`, with a `_cot` suffix for
/// chain-of-thought runs so both modes can coexist.
pub fn eval_path(root: &Path, model_id: &str, task: Task, mode: PromptMode) -> PathBuf {
    let file = match mode {
        PromptMode::Baseline => format!("{task}.jsonl"),
        PromptMode::Cot => format!("{task}_cot.jsonl"),
    };
    root.join("evals").join(model_id).join(file)
}

pub fn write_records(path: &Path, records: &[EvalRecord]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_records(path: &Path) -> std::io::Result<Vec<EvalRecord>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub n: usize,
    /// Records with a parsed answer.
    pub n_valid: usize,
    pub n_invalid: usize,
    /// Subset of `n_invalid` where no reply arrived at all.
    pub n_transport_error: usize,
    pub n_correct: usize,
    /// Over valid records only; `None` if there are none.
    pub accuracy: Option<f64>,
    pub invalid_rate: f64,
    /// Invalid records counted as wrong.
    pub accuracy_invalid_as_wrong: f64,
}

impl Score {
    /// Accuracy under the chosen invalid-answer policy.
    pub fn headline(&self, invalid_as_wrong: bool) -> Option<f64> {
        if invalid_as_wrong {
            (self.n > 0).then_some(self.accuracy_invalid_as_wrong)
        } else {
            self.accuracy
        }
    }
}

pub fn score(records: &[EvalRecord]) -> Score {
    let n = records.len();
    let n_valid = records.iter().filter(|r| r.correct.is_some()).count();
    let n_correct = records.iter().filter(|r| r.correct == Some(true)).count();
    let n_transport_error = records.iter().filter(|r| r.transport_error.is_some()).count();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Score {
        n,
        n_valid,
        n_invalid: n - n_valid,
        n_transport_error,
        n_correct,
        accuracy: (n_valid > 0).then(|| n_correct as f64 / n_valid as f64),
        invalid_rate: ratio(n - n_valid, n),
        accuracy_invalid_as_wrong: ratio(n_correct, n),
    }
}
