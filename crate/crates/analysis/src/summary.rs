use std::collections::{BTreeMap, BTreeSet, HashMap};

use probe_core::manifest::Facets;
use probe_core::{Task, TrialInfo};
use probe_harness::{EvalRecord, PromptMode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{pearson, wilson_ci};
use crate::zscore::{zscore_rt, RtRecord};

/// One participant response, as exported by the experiment service.
/// Correctness is recomputed from the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanResponse {
    pub session_id: String,
    pub trial_id: String,
    pub answer: i64,
    pub rt_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub rt_min_ms: f64,
    pub rt_max_ms: f64,
    /// Count unparseable model answers as wrong instead of excluding them.
    pub invalid_as_wrong: bool,
    /// Restrict rotation correlations to disparities at or below this.
    pub max_disparity_deg: Option<u32>,
    pub ci_level: f64,
    /// Bins for the trial-level zRT series.
    pub bins: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            rt_min_ms: 200.0,
            rt_max_ms: 30_000.0,
            invalid_as_wrong: false,
            max_disparity_deg: None,
            ci_level: 0.95,
            bins: 10,
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("{source_kind} references unknown trial `{trial_id}`")]
    MissingJoin {
        source_kind: &'static str,
        trial_id: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub task: Task,
    pub level: String,
    pub cell: String,
    pub n_human: usize,
    pub human_correct: usize,
    pub human_accuracy: Option<f64>,
    pub human_ci_low: Option<f64>,
    pub human_ci_high: Option<f64>,
    /// Valid-RT responses behind `mean_zrt`.
    pub n_zrt: usize,
    pub mean_zrt: Option<f64>,
    /// Empty when there are no model evaluations for the task.
    pub model: String,
    pub n_model: usize,
    pub model_correct: usize,
    pub model_accuracy: Option<f64>,
    pub model_ci_low: Option<f64>,
    pub model_ci_high: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub task: Task,
    /// Empty for human-only correlations.
    pub model: String,
    pub level: String,
    pub x: String,
    pub y: String,
    pub n: usize,
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialPoint {
    pub task: Task,
    pub model: String,
    pub trial_id: String,
    pub n_zrt: usize,
    pub mean_zrt: f64,
    pub model_correct: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinPoint {
    pub task: Task,
    pub model: String,
    pub bin: usize,
    pub n_trials: usize,
    pub mean_zrt: f64,
    pub model_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub cells: Vec<ConditionSummary>,
    pub correlations: Vec<CorrelationRow>,
    pub trial_points: Vec<TrialPoint>,
    pub bins: Vec<BinPoint>,
    pub n_responses: usize,
    pub n_eval_records: usize,
    pub excluded_rt_responses: usize,
    pub dropped_participants: Vec<String>,
}

fn model_label(r: &EvalRecord) -> String {
    match r.mode {
        PromptMode::Baseline => r.model_id.clone(),
        PromptMode::Cot => format!("{}/cot", r.model_id),
    }
}

/// Summary levels a trial belongs to, as (level, cell).
fn cell_keys(t: &TrialInfo) -> Vec<(&'static str, String)> {
    match &t.facets {
        Facets::Oddball { concept, mdl, .. } => {
            vec![("concept", concept.clone()), ("mdl", mdl.to_string())]
        }
        Facets::Numerosity {
            condition,
            numerosity,
        } => vec![
            ("condition_numerosity", format!("{condition}/{numerosity}")),
            ("condition", condition.to_string()),
            ("numerosity", numerosity.to_string()),
        ],
        Facets::Rotation {
            disparity_deg,
            pair_same,
            ..
        } => vec![
            ("disparity", format!("{disparity_deg:03}")),
            (
                "pair_type",
                if *pair_same { "same" } else { "mirror" }.to_string(),
            ),
        ],
    }
}

#[derive(Default)]
struct HumanAgg {
    n: usize,
    correct: usize,
    zsum: f64,
    zn: usize,
}

#[derive(Default)]
struct ModelAgg {
    n: usize,
    correct: usize,
}

#[derive(Default)]
struct Cell {
    human: HumanAgg,
    models: BTreeMap<String, ModelAgg>,
}

impl Cell {
    fn mean_z(&self) -> Option<f64> {
        (self.human.zn > 0).then(|| self.human.zsum / self.human.zn as f64)
    }
    fn human_acc(&self) -> Option<f64> {
        (self.human.n > 0).then(|| self.human.correct as f64 / self.human.n as f64)
    }
    fn model_acc(&self, m: &str) -> Option<f64> {
        self.models
            .get(m)
            .filter(|a| a.n > 0)
            .map(|a| a.correct as f64 / a.n as f64)
    }
}

fn correlate(
    task: Task,
    model: &str,
    level: &str,
    x: &str,
    y: &str,
    pairs: &[(f64, f64)],
    note: &str,
) -> CorrelationRow {
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (r, p, note) = match pearson(&xs, &ys) {
        Ok(c) => (Some(c.r), Some(c.p), note.to_string()),
        Err(e) => (
            None,
            None,
            if note.is_empty() {
                e.to_string()
            } else {
                format!("{note}; {e}")
            },
        ),
    };
    CorrelationRow {
        task,
        model: model.to_string(),
        level: level.to_string(),
        x: x.to_string(),
        y: y.to_string(),
        n: pairs.len(),
        r,
        p,
        note,
    }
}

/// Join responses and evaluations to the trials and compute every
/// summary, correlation and series. Output order is deterministic.
pub fn build_summaries(
    trials: &[TrialInfo],
    evals: &[EvalRecord],
    responses: &[HumanResponse],
    cfg: &AnalysisConfig,
) -> Result<Analysis, AnalysisError> {
    let by_id: HashMap<&str, &TrialInfo> =
        trials.iter().map(|t| (t.trial_id.as_str(), t)).collect();
    for r in responses {
        if !by_id.contains_key(r.trial_id.as_str()) {
            return Err(AnalysisError::MissingJoin {
                source_kind: "human response",
                trial_id: r.trial_id.clone(),
            });
        }
    }
    for e in evals {
        if !by_id.contains_key(e.trial_id.as_str()) {
            return Err(AnalysisError::MissingJoin {
                source_kind: "model evaluation",
                trial_id: e.trial_id.clone(),
            });
        }
    }

    let mut rts: Vec<RtRecord> = responses
        .iter()
        .map(|r| RtRecord {
            participant: r.session_id.clone(),
            trial_id: r.trial_id.clone(),
            rt_ms: r.rt_ms,
        })
        .collect();
    // fixed summation order, independent of input order
    rts.sort_by(|a, b| {
        (&a.participant, &a.trial_id)
            .cmp(&(&b.participant, &b.trial_id))
            .then(a.rt_ms.total_cmp(&b.rt_ms))
    });
    let z = zscore_rt(&rts, cfg.rt_min_ms, cfg.rt_max_ms);

    // per-trial human and model outcomes
    let mut human: HashMap<&str, HumanAgg> = HashMap::new();
    for r in responses {
        let h = human.entry(r.trial_id.as_str()).or_default();
        h.n += 1;
        h.correct += (r.answer == by_id[r.trial_id.as_str()].answer) as usize;
    }
    for zr in &z.records {
        let h = human
            .entry(by_id[zr.trial_id.as_str()].trial_id.as_str())
            .or_default();
        h.zsum += zr.z;
        h.zn += 1;
    }
    let mut model: BTreeMap<String, HashMap<&str, ModelAgg>> = BTreeMap::new();
    for e in evals {
        let truth = by_id[e.trial_id.as_str()].answer;
        let correct = match e.parsed_answer {
            Some(a) => a == truth,
            None if cfg.invalid_as_wrong => false,
            None => continue,
        };
        let m = model
            .entry(model_label(e))
            .or_default()
            .entry(by_id[e.trial_id.as_str()].trial_id.as_str())
            .or_default();
        m.n += 1;
        m.correct += correct as usize;
    }

    let tasks: BTreeSet<Task> = trials.iter().map(|t| t.task).collect();
    let mut out = Analysis {
        n_responses: responses.len(),
        n_eval_records: evals.len(),
        excluded_rt_responses: z.excluded_responses,
        dropped_participants: z.dropped_participants.clone(),
        ..Analysis::default()
    };

    for task in tasks {
        let task_trials: Vec<&TrialInfo> = trials.iter().filter(|t| t.task == task).collect();
        let models: Vec<&String> = model
            .iter()
            .filter(|(_, per)| {
                task_trials
                    .iter()
                    .any(|t| per.contains_key(t.trial_id.as_str()))
            })
            .map(|(m, _)| m)
            .collect();

        // (level → cell → aggregate)
        let mut levels: BTreeMap<&'static str, BTreeMap<String, Cell>> = BTreeMap::new();
        let mut disparity_of: HashMap<String, u32> = HashMap::new();
        for t in &task_trials {
            for (level, key) in cell_keys(t) {
                if let Facets::Rotation { disparity_deg, .. } = t.facets {
                    disparity_of.insert(key.clone(), disparity_deg);
                }
                let cell = levels.entry(level).or_default().entry(key).or_default();
                if let Some(h) = human.get(t.trial_id.as_str()) {
                    cell.human.n += h.n;
                    cell.human.correct += h.correct;
                    cell.human.zsum += h.zsum;
                    cell.human.zn += h.zn;
                }
                for m in &models {
                    if let Some(a) = model[*m].get(t.trial_id.as_str()) {
                        let agg = cell.models.entry((*m).clone()).or_default();
                        agg.n += a.n;
                        agg.correct += a.correct;
                    }
                }
            }
        }

        for (level, cells) in &levels {
            for (key, cell) in cells {
                let (hlo, hhi) = match cell.human.n {
                    0 => (None, None),
                    n => {
                        let (lo, hi) = wilson_ci(cell.human.correct, n, cfg.ci_level);
                        (Some(lo), Some(hi))
                    }
                };
                let base = ConditionSummary {
                    task,
                    level: level.to_string(),
                    cell: key.clone(),
                    n_human: cell.human.n,
                    human_correct: cell.human.correct,
                    human_accuracy: cell.human_acc(),
                    human_ci_low: hlo,
                    human_ci_high: hhi,
                    n_zrt: cell.human.zn,
                    mean_zrt: cell.mean_z(),
                    model: String::new(),
                    n_model: 0,
                    model_correct: 0,
                    model_accuracy: None,
                    model_ci_low: None,
                    model_ci_high: None,
                };
                if models.is_empty() {
                    out.cells.push(base);
                    continue;
                }
                for m in &models {
                    let mut row = base.clone();
                    row.model = (*m).clone();
                    if let Some(a) = cell.models.get(*m).filter(|a| a.n > 0) {
                        let (lo, hi) = wilson_ci(a.correct, a.n, cfg.ci_level);
                        row.n_model = a.n;
                        row.model_correct = a.correct;
                        row.model_accuracy = Some(a.correct as f64 / a.n as f64);
                        row.model_ci_low = Some(lo);
                        row.model_ci_high = Some(hi);
                    }
                    out.cells.push(row);
                }
            }
        }

        // cell-level correlations
        let pairs =
            |level: &str, f: &dyn Fn(&str, &Cell) -> Option<(f64, f64)>| -> Vec<(f64, f64)> {
                levels
                    .get(level)
                    .map(|cells| cells.iter().filter_map(|(k, c)| f(k, c)).collect())
                    .unwrap_or_default()
            };
        match task {
            Task::Oddball => {
                for m in &models {
                    let m = m.as_str();
                    let p = pairs("concept", &|_, c| Some((c.human_acc()?, c.model_acc(m)?)));
                    out.correlations.push(correlate(
                        task,
                        m,
                        "concept",
                        "human_accuracy",
                        "model_accuracy",
                        &p,
                        "",
                    ));
                    let p = pairs("concept", &|_, c| Some((c.mean_z()?, c.model_acc(m)?)));
                    out.correlations.push(correlate(
                        task,
                        m,
                        "concept",
                        "mean_zrt",
                        "model_accuracy",
                        &p,
                        "",
                    ));
                }
                let p = pairs("mdl", &|k, c| Some((k.parse().ok()?, c.mean_z()?)));
                out.correlations
                    .push(correlate(task, "", "mdl", "mdl", "mean_zrt", &p, ""));
            }
            Task::Numerosity => {
                let level = "condition_numerosity";
                for m in &models {
                    let m = m.as_str();
                    let p = pairs(level, &|_, c| Some((c.human_acc()?, c.model_acc(m)?)));
                    out.correlations.push(correlate(
                        task,
                        m,
                        level,
                        "human_accuracy",
                        "model_accuracy",
                        &p,
                        "",
                    ));
                    let p = pairs(level, &|_, c| Some((c.mean_z()?, c.model_acc(m)?)));
                    out.correlations.push(correlate(
                        task,
                        m,
                        level,
                        "mean_zrt",
                        "model_accuracy",
                        &p,
                        "",
                    ));
                }
                let count = |k: &str| k.rsplit('/').next()?.parse::<f64>().ok();
                let p = pairs(level, &|k, c| Some((count(k)?, c.mean_z()?)));
                out.correlations
                    .push(correlate(task, "", level, "numerosity", "mean_zrt", &p, ""));
            }
            Task::Rotation => {
                let keep = |k: &str| {
                    cfg.max_disparity_deg
                        .is_none_or(|max| disparity_of[k] <= max)
                };
                let note = cfg
                    .max_disparity_deg
                    .map(|d| format!("disparity <= {d}"))
                    .unwrap_or_default();
                let deg = |k: &str| disparity_of[k] as f64;
                let err = |a: Option<f64>| a.map(|v| 1.0 - v);
                for m in &models {
                    let m = m.as_str();
                    let p = pairs("disparity", &|k, c| {
                        keep(k)
                            .then(|| Some((c.mean_z()?, err(c.model_acc(m))?)))
                            .flatten()
                    });
                    out.correlations.push(correlate(
                        task,
                        m,
                        "disparity",
                        "mean_zrt",
                        "model_error",
                        &p,
                        &note,
                    ));
                    let p = pairs("disparity", &|k, c| {
                        keep(k)
                            .then(|| Some((err(c.human_acc())?, err(c.model_acc(m))?)))
                            .flatten()
                    });
                    out.correlations.push(correlate(
                        task,
                        m,
                        "disparity",
                        "human_error",
                        "model_error",
                        &p,
                        &note,
                    ));
                    let p = pairs("disparity", &|k, c| {
                        keep(k)
                            .then(|| Some((deg(k), err(c.model_acc(m))?)))
                            .flatten()
                    });
                    out.correlations.push(correlate(
                        task,
                        m,
                        "disparity",
                        "disparity",
                        "model_error",
                        &p,
                        &note,
                    ));
                }
                let p = pairs("disparity", &|k, c| {
                    keep(k).then(|| Some((deg(k), c.mean_z()?))).flatten()
                });
                out.correlations.push(correlate(
                    task,
                    "",
                    "disparity",
                    "disparity",
                    "mean_zrt",
                    &p,
                    &note,
                ));
                let p = pairs("disparity", &|k, c| {
                    keep(k)
                        .then(|| Some((deg(k), err(c.human_acc())?)))
                        .flatten()
                });
                out.correlations.push(correlate(
                    task,
                    "",
                    "disparity",
                    "disparity",
                    "human_error",
                    &p,
                    &note,
                ));
            }
        }

        // trial-level series: per-trial mean zRT against model correctness
        for m in &models {
            let mut points: Vec<TrialPoint> = task_trials
                .iter()
                .filter_map(|t| {
                    let h = human.get(t.trial_id.as_str()).filter(|h| h.zn > 0)?;
                    let a = model[*m].get(t.trial_id.as_str()).filter(|a| a.n > 0)?;
                    Some(TrialPoint {
                        task,
                        model: (*m).clone(),
                        trial_id: t.trial_id.clone(),
                        n_zrt: h.zn,
                        mean_zrt: h.zsum / h.zn as f64,
                        // majority outcome when a trial was evaluated more than once
                        model_correct: (2 * a.correct >= a.n) as u8,
                    })
                })
                .collect();
            points.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));
            let p: Vec<(f64, f64)> = points
                .iter()
                .map(|p| (p.mean_zrt, p.model_correct as f64))
                .collect();
            out.correlations.push(correlate(
                task,
                m,
                "trial",
                "mean_zrt",
                "model_correct",
                &p,
                "",
            ));

            let mut ordered: Vec<&TrialPoint> = points.iter().collect();
            ordered.sort_by(|a, b| {
                a.mean_zrt
                    .total_cmp(&b.mean_zrt)
                    .then_with(|| a.trial_id.cmp(&b.trial_id))
            });
            let n = ordered.len();
            let bins = cfg.bins.max(1).min(n.max(1));
            for b in 0..bins {
                let chunk = &ordered[b * n / bins..(b + 1) * n / bins];
                if chunk.is_empty() {
                    continue;
                }
                let k = chunk.len() as f64;
                out.bins.push(BinPoint {
                    task,
                    model: (*m).clone(),
                    bin: b + 1,
                    n_trials: chunk.len(),
                    mean_zrt: chunk.iter().map(|p| p.mean_zrt).sum::<f64>() / k,
                    model_accuracy: chunk.iter().map(|p| p.model_correct as f64).sum::<f64>() / k,
                });
            }
            out.trial_points.extend(points);
        }
    }
    Ok(out)
}
