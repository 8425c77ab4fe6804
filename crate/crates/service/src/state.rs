use std::collections::{BTreeMap, HashMap};

use probe_core::rng::derive_seed;
use probe_core::{Dataset, StimRng, Task, TrialInfo};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subset::select_human_subset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub seed: u64,
    /// Share of each condition cell shown to participants.
    pub subset_fraction: f64,
    pub session_size: usize,
    /// Responses outside [rt_min_ms, rt_max_ms] are kept but marked invalid.
    pub rt_min_ms: f64,
    pub rt_max_ms: f64,
    /// Judgments wanted per trial, by task.
    pub coverage_targets: BTreeMap<Task, u32>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            seed: 0,
            subset_fraction: 0.2,
            session_size: 50,
            rt_min_ms: 200.0,
            rt_max_ms: 30_000.0,
            coverage_targets: [(Task::Oddball, 20), (Task::Numerosity, 10), (Task::Rotation, 10)].into(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("task `{0}` is not loaded")]
    UnknownTask(Task),
    #[error("trial `{got}` is not the current trial (expected {expected:?})")]
    OutOfOrder { expected: Option<String>, got: String },
    #[error("session `{0}` is complete")]
    SessionComplete(String),
    #[error("human subset for {task} has {available} trials, fewer than a session of {needed}")]
    SubsetExhausted { task: Task, available: usize, needed: usize },
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("log event does not fit the current state: {0}")]
    Inconsistent(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub task: Task,
    pub assigned_trials: Vec<String>,
    /// Index of the next trial to answer; equals the length when done.
    pub cursor: usize,
    pub created_at: String,
}

impl Session {
    pub fn is_complete(&self) -> bool {
        self.cursor >= self.assigned_trials.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanResponseRecord {
    pub session_id: String,
    pub task: Task,
    pub trial_id: String,
    pub answer: i64,
    pub correct: bool,
    /// Client-measured stimulus onset to click.
    pub rt_ms: f64,
    pub server_received_at: String,
    /// False when `rt_ms` lies outside the configured bounds.
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SessionCreated {
        session_id: String,
        task: Task,
        trials: Vec<String>,
        created_at: String,
    },
    ResponseRecorded(HumanResponseRecord),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseAck {
    pub session_id: String,
    pub trial_id: String,
    pub duplicate: bool,
    pub cursor: usize,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialCoverage {
    pub trial_id: String,
    pub stratum: String,
    pub assigned: u32,
    pub judgments: u32,
    pub below_target: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub task: Task,
    pub target: u32,
    pub n_trials: usize,
    pub min_judgments: u32,
    pub max_judgments: u32,
    pub n_below_target: usize,
    pub trials: Vec<TrialCoverage>,
}

/// Outcome of checking a response before it is logged.
#[derive(Clone, Debug, PartialEq)]
pub enum ResponsePlan {
    Duplicate(ResponseAck),
    Record(Event),
}

#[derive(Clone, Debug)]
struct Pool {
    trials: Vec<TrialInfo>,
    index: HashMap<String, usize>,
    /// Members of each stratum, as indices into `trials`.
    cells: BTreeMap<String, Vec<usize>>,
    assigned: Vec<u32>,
    judgments: Vec<u32>,
}

impl Pool {
    fn new(trials: Vec<TrialInfo>) -> Self {
        let index = trials.iter().enumerate().map(|(i, t)| (t.trial_id.clone(), i)).collect();
        let mut cells: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, t) in trials.iter().enumerate() {
            cells.entry(t.stratum.clone()).or_default().push(i);
        }
        let n = trials.len();
        Pool {
            trials,
            index,
            cells,
            assigned: vec![0; n],
            judgments: vec![0; n],
        }
    }
}

/// Everything the service knows, as a fold over its event log.
#[derive(Clone, Debug)]
pub struct ServiceState {
    config: ServiceConfig,
    pools: BTreeMap<Task, Pool>,
    sessions: BTreeMap<String, Session>,
    session_count: u64,
    responses: Vec<HumanResponseRecord>,
}

impl ServiceState {
    pub fn new(config: ServiceConfig, datasets: &[Dataset]) -> Self {
        Self::from_trials(config, datasets.iter().map(|d| (d.task(), d.trials())).collect())
    }

    /// Each task's human subset is drawn from the given trials.
    pub fn from_trials(config: ServiceConfig, trials: BTreeMap<Task, Vec<TrialInfo>>) -> Self {
        let pools = trials
            .into_iter()
            .map(|(task, ts)| {
                let seed = derive_seed(config.seed, &format!("subset/{task}"));
                (task, Pool::new(select_human_subset(&ts, config.subset_fraction, seed)))
            })
            .collect();
        ServiceState {
            config,
            pools,
            sessions: BTreeMap::new(),
            session_count: 0,
            responses: Vec::new(),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn tasks(&self) -> Vec<Task> {
        self.pools.keys().copied().collect()
    }

    pub fn subset(&self, task: Task) -> Option<&[TrialInfo]> {
        self.pools.get(&task).map(|p| p.trials.as_slice())
    }

    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.get(id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    pub fn responses(&self) -> &[HumanResponseRecord] {
        &self.responses
    }

    fn pool(&self, task: Task) -> Result<&Pool, ServiceError> {
        self.pools.get(&task).ok_or(ServiceError::UnknownTask(task))
    }

    /// Choose the next session's trials without changing state.
    ///
    /// Trials are picked one at a time from the stratum with the fewest
    /// picks so far, breaking ties by the assignment count of that
    /// stratum's least-assigned remaining trial, then by the stratum's
    /// total assignments, then at random. Strata
    /// therefore differ by at most one pick, and within that limit the
    /// least-covered trials go first.
    pub fn plan_session(&self, task: Task, created_at: String) -> Result<Event, ServiceError> {
        let pool = self.pool(task)?;
        let needed = self.config.session_size;
        if pool.trials.len() < needed {
            return Err(ServiceError::SubsetExhausted {
                task,
                available: pool.trials.len(),
                needed,
            });
        }
        let label = format!("session/{}", self.session_count);
        let session_id = format!("{:016x}", derive_seed(self.config.seed, &label));
        let mut rng = StimRng::derived(self.config.seed, &format!("{label}/assign"));
        struct Cell {
            order: Vec<usize>,
            taken: usize,
            total: u32,
            key: u64,
        }
        let mut cells: Vec<Cell> = pool
            .cells
            .values()
            .map(|members| {
                let mut keyed: Vec<(u32, u64, usize)> =
                    members.iter().map(|&i| (pool.assigned[i], rng.next_u64(), i)).collect();
                keyed.sort_unstable();
                Cell {
                    total: keyed.iter().map(|k| k.0).sum(),
                    order: keyed.into_iter().map(|(_, _, i)| i).collect(),
                    taken: 0,
                    key: rng.next_u64(),
                }
            })
            .collect();
        let mut picked = Vec::with_capacity(needed);
        while picked.len() < needed {
            let best = cells
                .iter_mut()
                .filter(|c| c.taken < c.order.len())
                .min_by_key(|c| (c.taken, pool.assigned[c.order[c.taken]], c.total, c.key))
                .expect("subset holds at least a session of trials");
            picked.push(best.order[best.taken]);
            best.taken += 1;
        }
        rng.shuffle(&mut picked);
        Ok(Event::SessionCreated {
            session_id,
            task,
            trials: picked.into_iter().map(|i| pool.trials[i].trial_id.clone()).collect(),
            created_at,
        })
    }

    /// Check a response against the session. Duplicates of an already
    /// answered trial are acknowledged without a new record.
    pub fn plan_response(
        &self,
        session_id: &str,
        trial_id: &str,
        answer: i64,
        rt_ms: f64,
        received_at: String,
    ) -> Result<ResponsePlan, ServiceError> {
        let session = self
            .sessions
            .get(session_id)
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))?;
        if session.assigned_trials[..session.cursor].iter().any(|t| t == trial_id) {
            return Ok(ResponsePlan::Duplicate(ResponseAck {
                session_id: session_id.to_string(),
                trial_id: trial_id.to_string(),
                duplicate: true,
                cursor: session.cursor,
                done: session.is_complete(),
            }));
        }
        if session.is_complete() {
            return Err(ServiceError::SessionComplete(session_id.to_string()));
        }
        let expected = &session.assigned_trials[session.cursor];
        if expected != trial_id {
            return Err(ServiceError::OutOfOrder {
                expected: Some(expected.clone()),
                got: trial_id.to_string(),
            });
        }
        if !(rt_ms.is_finite() && rt_ms > 0.0) {
            return Err(ServiceError::InvalidResponse(format!("rt_ms must be positive, got {rt_ms}")));
        }
        let (lo, hi) = session.task.answer_range();
        if !(lo..=hi).contains(&answer) {
            return Err(ServiceError::InvalidResponse(format!("answer {answer} outside {lo}..={hi}")));
        }
        let pool = self.pool(session.task)?;
        let truth = pool.trials[pool.index[trial_id]].answer;
        Ok(ResponsePlan::Record(Event::ResponseRecorded(HumanResponseRecord {
            session_id: session_id.to_string(),
            task: session.task,
            trial_id: trial_id.to_string(),
            answer,
            correct: answer == truth,
            rt_ms,
            server_received_at: received_at,
            valid: (self.config.rt_min_ms..=self.config.rt_max_ms).contains(&rt_ms),
        })))
    }

    /// Fold one event into the state.
    pub fn apply(&mut self, event: &Event) -> Result<(), ServiceError> {
        match event {
            Event::SessionCreated {
                session_id,
                task,
                trials,
                created_at,
            } => {
                let pool = self.pools.get_mut(task).ok_or(ServiceError::UnknownTask(*task))?;
                if self.sessions.contains_key(session_id) {
                    return Err(ServiceError::Inconsistent(format!("session {session_id} created twice")));
                }
                let idx = trials
                    .iter()
                    .map(|t| pool.index.get(t).copied().ok_or_else(|| ServiceError::Inconsistent(format!("trial {t} is not in the {task} subset"))))
                    .collect::<Result<Vec<_>, _>>()?;
                for i in idx {
                    pool.assigned[i] += 1;
                }
                self.sessions.insert(
                    session_id.clone(),
                    Session {
                        session_id: session_id.clone(),
                        task: *task,
                        assigned_trials: trials.clone(),
                        cursor: 0,
                        created_at: created_at.clone(),
                    },
                );
                self.session_count += 1;
            }
            Event::ResponseRecorded(r) => {
                let session = self
                    .sessions
                    .get_mut(&r.session_id)
                    .ok_or_else(|| ServiceError::UnknownSession(r.session_id.clone()))?;
                if session.assigned_trials.get(session.cursor) != Some(&r.trial_id) {
                    return Err(ServiceError::Inconsistent(format!("response for {} out of order", r.trial_id)));
                }
                session.cursor += 1;
                let pool = self.pools.get_mut(&session.task).ok_or(ServiceError::UnknownTask(session.task))?;
                pool.judgments[pool.index[&r.trial_id]] += 1;
                self.responses.push(r.clone());
            }
        }
        Ok(())
    }

    pub fn ack_for(&self, record: &HumanResponseRecord) -> ResponseAck {
        let s = &self.sessions[&record.session_id];
        ResponseAck {
            session_id: s.session_id.clone(),
            trial_id: record.trial_id.clone(),
            duplicate: false,
            cursor: s.cursor,
            done: s.is_complete(),
        }
    }

    /// The trial at the session's cursor, or `None` when complete.
    pub fn next_trial(&self, session_id: &str) -> Result<Option<&TrialInfo>, ServiceError> {
        let s = self
            .sessions
            .get(session_id)
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_string()))?;
        let Some(id) = s.assigned_trials.get(s.cursor) else {
            return Ok(None);
        };
        let pool = self.pool(s.task)?;
        Ok(Some(&pool.trials[pool.index[id]]))
    }

    pub fn judgment_counts(&self, task: Task) -> BTreeMap<String, u32> {
        self.pools
            .get(&task)
            .map(|p| p.trials.iter().zip(&p.judgments).map(|(t, j)| (t.trial_id.clone(), *j)).collect())
            .unwrap_or_default()
    }

    pub fn coverage(&self, task: Task) -> Result<CoverageReport, ServiceError> {
        let pool = self.pool(task)?;
        let target = self.config.coverage_targets.get(&task).copied().unwrap_or(0);
        let trials: Vec<TrialCoverage> = pool
            .trials
            .iter()
            .enumerate()
            .map(|(i, t)| TrialCoverage {
                trial_id: t.trial_id.clone(),
                stratum: t.stratum.clone(),
                assigned: pool.assigned[i],
                judgments: pool.judgments[i],
                below_target: pool.judgments[i] < target,
            })
            .collect();
        Ok(CoverageReport {
            task,
            target,
            n_trials: trials.len(),
            min_judgments: pool.judgments.iter().copied().min().unwrap_or(0),
            max_judgments: pool.judgments.iter().copied().max().unwrap_or(0),
            n_below_target: trials.iter().filter(|t| t.below_target).count(),
            trials,
        })
    }

    pub fn export(&self, task: Task) -> Vec<&HumanResponseRecord> {
        self.responses.iter().filter(|r| r.task == task).collect()
    }
}
