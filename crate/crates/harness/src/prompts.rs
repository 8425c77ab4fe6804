use std::fmt;
use std::str::FromStr;

use probe_core::Task;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Baseline,
    Cot,
}

impl PromptMode {
    pub const ALL: [PromptMode; 2] = [PromptMode::Baseline, PromptMode::Cot];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::Baseline => "baseline",
            PromptMode::Cot => "cot",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for PromptMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "baseline" => Ok(PromptMode::Baseline),
            "cot" => Ok(PromptMode::Cot),
            _ => Err(format!("unknown prompt mode `{s}` (expected baseline or cot)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub task: Task,
    pub mode: PromptMode,
    pub text: &'static str,
}

impl PromptTemplate {
    pub fn get(task: Task, mode: PromptMode) -> PromptTemplate {
        let text = match (task, mode) {
            (Task::Oddball, PromptMode::Baseline) => include_str!("../prompts/oddball_baseline.txt"),
            (Task::Oddball, PromptMode::Cot) => include_str!("../prompts/oddball_cot.txt"),
            (Task::Numerosity, PromptMode::Baseline) => include_str!("../prompts/numerosity_baseline.txt"),
            (Task::Numerosity, PromptMode::Cot) => include_str!("../prompts/numerosity_cot.txt"),
            (Task::Rotation, PromptMode::Baseline) => include_str!("../prompts/rotation_baseline.txt"),
            (Task::Rotation, PromptMode::Cot) => include_str!("../prompts/rotation_cot.txt"),
        };
        PromptTemplate { task, mode, text }
    }

    pub fn all() -> Vec<PromptTemplate> {
        Task::ALL
            .iter()
            .flat_map(|t| PromptMode::ALL.iter().map(move |m| PromptTemplate::get(*t, *m)))
            .collect()
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }

    /// Expected SHA-256 of the template bytes, pinned when the texts were
    /// transcribed.
    pub fn pinned_sha256(&self) -> &'static str {
        match (self.task, self.mode) {
            (Task::Oddball, PromptMode::Baseline) => PINNED[0],
            (Task::Oddball, PromptMode::Cot) => PINNED[1],
            (Task::Numerosity, PromptMode::Baseline) => PINNED[2],
            (Task::Numerosity, PromptMode::Cot) => PINNED[3],
            (Task::Rotation, PromptMode::Baseline) => PINNED[4],
            (Task::Rotation, PromptMode::Cot) => PINNED[5],
        }
    }
}

const PINNED: [&str; 6] = [
    "b4c7a96187754dadd1062cf260f75a98bb70b16be00372be05d80cbe452d607b",
    "57edff2b88386b124e2450c6fc0617927ab7425a0c2c6c593624b664915c6111",
    "f79d5a57fa87f8c5264fe45df23aa6202b555cc0a5adaeb976ecc479fcbcdb7e",
    "35ca1cdac49b4d6b710f425cb3a3faf699313a08878105b95901bf698dbbcc84",
    "c95c2fd0c178a22fbdd22070609c7414f830b2a5a7a1cf172251a4ee8e8a78ae",
    "6e8554d0e6fd678faf41c339f02656f556fe49894d08b13a623f0c19cbcb4c21",
];
