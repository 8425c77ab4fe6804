use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use probe_core::TrialInfo;

use crate::client::{ModelClient, ModelRequest};
use crate::parse::parse_bracketed_answer;
use crate::prompts::{PromptMode, PromptTemplate};
use crate::records::EvalRecord;

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub mode: PromptMode,
    /// Maximum requests in flight.
    pub concurrency: usize,
    /// Transport retries after the first attempt.
    pub retries: u32,
    /// Wait before retry k is `backoff_base · 2^(k−1)`.
    pub backoff_base: Duration,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            mode: PromptMode::Baseline,
            concurrency: 4,
            retries: 3,
            backoff_base: Duration::from_secs(1),
        }
    }
}

fn evaluate_one(trial: &TrialInfo, image_root: &Path, model: &dyn ModelClient, opts: &EvalOptions) -> EvalRecord {
    let request = ModelRequest {
        trial_id: trial.trial_id.clone(),
        task: trial.task,
        prompt: PromptTemplate::get(trial.task, opts.mode).text.to_string(),
        images: vec![image_root.join(&trial.model_image)],
    };
    let mut attempts = 0;
    let mut last_error = None;
    let mut reply = None;
    let mut latency_ms = 0.0;
    while attempts <= opts.retries {
        if attempts > 0 {
            std::thread::sleep(opts.backoff_base * 2u32.pow(attempts - 1));
        }
        attempts += 1;
        let start = Instant::now();
        let result = model.complete(&request);
        latency_ms = start.elapsed().as_secs_f64() * 1000.0;
        match result {
            Ok(text) => {
                reply = Some(text);
                break;
            }
            Err(e) => {
                log::warn!("{} on {}: attempt {attempts}: {e}", model.id(), trial.trial_id);
                last_error = Some(e.0);
            }
        }
    }
    let parsed = reply.as_deref().and_then(|t| parse_bracketed_answer(t, trial.task));
    EvalRecord {
        trial_id: trial.trial_id.clone(),
        model_id: model.id().to_string(),
        task: trial.task,
        mode: opts.mode,
        raw_text: reply.clone().unwrap_or_default(),
        parsed_answer: parsed,
        correct: parsed.map(|a| a == trial.answer),
        latency_ms,
        attempt_count: attempts,
        transport_error: if reply.is_none() { last_error } else { None },
    }
}

/// One record per trial, sorted by trial id. Transport failures are
/// retried with exponential backoff; unparseable replies are kept as
/// they are. Never aborts part-way.
pub fn run_evaluation(trials: &[TrialInfo], image_root: &Path, model: &dyn ModelClient, opts: &EvalOptions) -> Vec<EvalRecord> {
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(trials.len()));
    let workers = opts.concurrency.max(1).min(trials.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(trial) = trials.get(i) else { break };
                let record = evaluate_one(trial, image_root, model, opts);
                results.lock().expect("result lock").push(record);
            });
        }
    });
    let mut records = results.into_inner().expect("result lock");
    records.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));
    records
}
