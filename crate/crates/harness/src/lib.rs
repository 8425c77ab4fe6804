//! Model evaluation: prompt templates, answer parsing, model clients,
//! a bounded-concurrency runner and scoring.

pub mod client;
pub mod http;
pub mod parse;
pub mod prompts;
pub mod records;
pub mod run;

pub use client::{builtin_model, BuiltinModel, ModelClient, ModelRequest, TransportError, BUILTIN_MODELS};
pub use http::{HttpModel, HttpModelConfig};
pub use parse::parse_bracketed_answer;
pub use prompts::{PromptMode, PromptTemplate};
pub use records::{eval_path, read_records, score, write_records, EvalRecord, Score};
pub use run::{run_evaluation, EvalOptions};
