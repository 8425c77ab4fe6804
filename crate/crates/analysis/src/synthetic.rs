//! Synthetic oddball populations with planted RT and accuracy structure,
//! for exercising the pipeline end to end without real data.

use probe_core::manifest::Facets;
use probe_core::{Family, StimRng, Task, TrialInfo};
use probe_harness::{EvalRecord, PromptMode};

use crate::summary::HumanResponse;

/// Linear plants in MDL. Human RT = `rt_base + rt_per_mdl·MDL + N(0, rt_noise_sd)`.
/// Model and human accuracy per concept = `acc_base + acc_per_mdl·MDL`,
/// clamped to `[0, 1]`. The model is correct on exactly the rounded share
/// of each concept's trials; humans answer correctly at random with that
/// probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Planted {
    pub per_concept: usize,
    pub participants: usize,
    pub rt_base: f64,
    pub rt_per_mdl: f64,
    pub rt_noise_sd: f64,
    pub acc_base: f64,
    pub acc_per_mdl: f64,
}

impl Default for Planted {
    fn default() -> Self {
        Self {
            per_concept: 20,
            participants: 30,
            rt_base: 500.0,
            rt_per_mdl: 300.0,
            rt_noise_sd: 50.0,
            acc_base: 0.95,
            acc_per_mdl: -0.12,
        }
    }
}

pub struct Population {
    pub trials: Vec<TrialInfo>,
    pub evals: Vec<EvalRecord>,
    pub responses: Vec<HumanResponse>,
}

fn normal(rng: &mut StimRng) -> f64 {
    let u = 1.0 - rng.uniform();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * rng.uniform()).cos()
}

/// Population over `(concept, mdl)` pairs; deterministic in `seed`.
pub fn oddball_population(seed: u64, concepts: &[(String, usize)], plant: &Planted) -> Population {
    let mut rng = StimRng::derived(seed, "synthetic");
    let accuracy = |mdl: usize| (plant.acc_base + plant.acc_per_mdl * mdl as f64).clamp(0.0, 1.0);
    let mut trials = Vec::new();
    let mut evals = Vec::new();
    for (name, mdl) in concepts {
        let n_correct = (accuracy(*mdl) * plant.per_concept as f64).round() as usize;
        for k in 0..plant.per_concept {
            let answer = 1 + rng.index(6) as i64;
            let trial_id = format!("odd-{name}-{k:03}");
            let parsed = if k < n_correct {
                answer
            } else {
                answer % 6 + 1
            };
            evals.push(EvalRecord {
                trial_id: trial_id.clone(),
                model_id: "synthetic".into(),
                task: Task::Oddball,
                mode: PromptMode::Baseline,
                raw_text: format!("[{parsed}]"),
                parsed_answer: Some(parsed),
                correct: Some(parsed == answer),
                latency_ms: 0.0,
                attempt_count: 1,
                transport_error: None,
            });
            trials.push(TrialInfo {
                trial_id,
                task: Task::Oddball,
                answer,
                stratum: name.clone(),
                model_image: String::new(),
                human_images: Vec::new(),
                facets: Facets::Oddball {
                    concept: name.clone(),
                    mdl: *mdl,
                    family: Family::Constraints,
                },
            });
        }
    }
    let mut responses = Vec::new();
    for p in 0..plant.participants {
        for t in &trials {
            let Facets::Oddball { mdl, .. } = t.facets else {
                unreachable!()
            };
            let correct = rng.uniform() < accuracy(mdl);
            let rt = plant.rt_base
                + plant.rt_per_mdl * mdl as f64
                + plant.rt_noise_sd * normal(&mut rng);
            responses.push(HumanResponse {
                session_id: format!("p{p:03}"),
                trial_id: t.trial_id.clone(),
                answer: if correct { t.answer } else { t.answer % 6 + 1 },
                rt_ms: rt,
            });
        }
    }
    Population {
        trials,
        evals,
        responses,
    }
}

/// `n` concepts named `syn00`, `syn01`, … with MDL cycling through 2, 3, 4.
pub fn cycled_concepts(n: usize) -> Vec<(String, usize)> {
    (0..n).map(|c| (format!("syn{c:02}"), 2 + c % 3)).collect()
}
