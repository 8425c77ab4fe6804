//! Run configuration: one JSON file plus command-line overrides.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use probe_analysis::AnalysisConfig;
use probe_core::{GenerationConfig, Task};
use probe_harness::{HttpModelConfig, PromptMode, BUILTIN_MODELS};
use probe_service::ServiceConfig;
use serde::{Deserialize, Serialize};

pub const CONFIG_ECHO: &str = "run_config.json";
pub const MIN_SCALE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskScales {
    pub oddball: f64,
    pub numerosity: f64,
    pub rotation: f64,
}

impl Default for TaskScales {
    fn default() -> Self {
        TaskScales {
            oddball: 1.0,
            numerosity: 1.0,
            rotation: 1.0,
        }
    }
}

impl TaskScales {
    pub fn get(&self, task: Task) -> f64 {
        match task {
            Task::Oddball => self.oddball,
            Task::Numerosity => self.numerosity,
            Task::Rotation => self.rotation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub mode: PromptMode,
    pub concurrency: usize,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            mode: PromptMode::Baseline,
            concurrency: 4,
            retries: 3,
            backoff_ms: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: String,
    /// Environment variable holding the bearer token for `/api/export`.
    pub export_token_env: String,
    /// The seed inside is replaced by one derived from the run seed.
    pub experiment: ServiceConfig,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            bind: "127.0.0.1:8080".into(),
            export_token_env: "PROBE_EXPORT_TOKEN".into(),
            experiment: ServiceConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Required; every random stream is derived from it.
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub scale: TaskScales,
    /// Generation threads; all cores when unset.
    pub workers: Option<usize>,
    pub generation: GenerationConfig,
    pub models: Vec<HttpModelConfig>,
    pub evaluation: EvaluationConfig,
    pub service: ServeConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            output_dir: PathBuf::from("out"),
            scale: TaskScales::default(),
            workers: None,
            generation: GenerationConfig::default(),
            models: Vec::new(),
            evaluation: EvaluationConfig::default(),
            service: ServeConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| anyhow::anyhow!("{}: {}: {}", path.display(), e.path(), e.inner()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    /// Collect every violated constraint, each prefixed by its key path.
    pub fn validate(&self) -> anyhow::Result<()> {
        let mut errs = Vec::new();
        if self.seed.is_none() {
            errs.push("seed: required (set it in the config or pass --seed)".to_string());
        }
        for task in Task::ALL {
            let s = self.scale.get(task);
            if !(s >= MIN_SCALE) {
                errs.push(format!("scale.{task}: {s} is below {MIN_SCALE}"));
            }
        }
        if self.workers == Some(0) {
            errs.push("workers: must be at least 1".into());
        }
        let g = &self.generation;
        if g.oddball.relaxed_constraints == 0 {
            errs.push("generation.oddball.relaxed_constraints: must be at least 1".into());
        }
        let (lo, hi) = g.numerosity.overlap_band;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            errs.push(format!("generation.numerosity.overlap_band: [{lo}, {hi}] is not an interval in [0, 1]"));
        }
        if g.numerosity.max_numerosity == 0 {
            errs.push("generation.numerosity.max_numerosity: must be at least 1".into());
        }
        if !(g.rotation.fraction > 0.0 && g.rotation.fraction <= 1.0) {
            errs.push(format!("generation.rotation.fraction: {} is outside (0, 1]", g.rotation.fraction));
        }
        if g.rotation.angle_step_deg == 0 || 360 % g.rotation.angle_step_deg != 0 {
            errs.push(format!("generation.rotation.angle_step_deg: {} does not divide 360", g.rotation.angle_step_deg));
        }
        for (key, px) in [
            ("oddball_cell", g.raster.oddball_cell),
            ("numerosity_size", g.raster.numerosity_size),
            ("rotation_panel", g.raster.rotation_panel),
        ] {
            if px < 16 {
                errs.push(format!("generation.raster.{key}: {px} px is too small"));
            }
        }
        let mut ids = BTreeSet::new();
        for (i, m) in self.models.iter().enumerate() {
            if m.id.is_empty() || m.id.contains(['/', '\\']) || m.id.starts_with('.') {
                errs.push(format!("models[{i}].id: `{}` is not usable as a directory name", m.id));
            }
            if BUILTIN_MODELS.contains(&m.id.as_str()) {
                errs.push(format!("models[{i}].id: `{}` is a built-in model", m.id));
            }
            if !ids.insert(&m.id) {
                errs.push(format!("models[{i}].id: duplicate `{}`", m.id));
            }
        }
        if self.evaluation.concurrency == 0 {
            errs.push("evaluation.concurrency: must be at least 1".into());
        }
        if self.service.bind.parse::<std::net::SocketAddr>().is_err() {
            errs.push(format!("service.bind: `{}` is not a socket address", self.service.bind));
        }
        let e = &self.service.experiment;
        if !(e.subset_fraction > 0.0 && e.subset_fraction <= 1.0) {
            errs.push(format!("service.experiment.subset_fraction: {} is outside (0, 1]", e.subset_fraction));
        }
        if e.session_size == 0 {
            errs.push("service.experiment.session_size: must be at least 1".into());
        }
        let a = &self.analysis;
        if !(a.rt_min_ms < a.rt_max_ms) {
            errs.push(format!("analysis.rt_min_ms: {} is not below rt_max_ms {}", a.rt_min_ms, a.rt_max_ms));
        }
        if !(a.ci_level > 0.0 && a.ci_level < 1.0) {
            errs.push(format!("analysis.ci_level: {} is outside (0, 1)", a.ci_level));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            bail!("invalid configuration:\n  {}", errs.join("\n  "))
        }
    }

    pub fn stimuli_dir(&self) -> PathBuf {
        self.output_dir.join("stimuli")
    }

    pub fn service_log(&self) -> PathBuf {
        self.output_dir.join("service").join("events.jsonl")
    }

    pub fn summary_dir(&self) -> PathBuf {
        self.output_dir.join("summary")
    }

    /// Write the resolved configuration into `dir`.
    pub fn echo_into(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(CONFIG_ECHO);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
