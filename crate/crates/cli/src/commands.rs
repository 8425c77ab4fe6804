use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use probe_analysis::{build_summaries, write_outputs, HumanResponse, RunInfo};
use probe_core::manifest::sha256_hex;
use probe_core::numerosity::generate_numerosity_dataset;
use probe_core::oddball::generate_default_oddball_dataset;
use probe_core::rng::derive_seed;
use probe_core::rotation::{default_glyphs, generate_rotation_dataset};
use probe_core::sink::DirSink;
use probe_core::{Dataset, Task, TrialInfo};
use probe_harness::{
    builtin_model, eval_path, read_records, run_evaluation, score, write_records, EvalOptions, HttpModel, ModelClient, PromptMode,
};
use probe_service::{AppState, Event};

use crate::config::RunConfig;

fn selected(tasks: &[Task]) -> Vec<Task> {
    if tasks.is_empty() {
        Task::ALL.to_vec()
    } else {
        Task::ALL.into_iter().filter(|t| tasks.contains(t)).collect()
    }
}

/// Manifests present in the output directory. Explicitly requested tasks
/// must exist; otherwise at least one must.
fn load_datasets(cfg: &RunConfig, tasks: &[Task]) -> anyhow::Result<Vec<Dataset>> {
    let mut out = Vec::new();
    for task in selected(tasks) {
        let path = cfg.output_dir.join(task.manifest_file());
        if !path.exists() {
            if tasks.is_empty() {
                continue;
            }
            bail!("missing manifest {} (run `probe generate --task {task}` first)", path.display());
        }
        out.push(Dataset::load(&cfg.output_dir, task)?);
    }
    if out.is_empty() {
        bail!("no manifests in {} (run `probe generate` first)", cfg.output_dir.display());
    }
    Ok(out)
}

pub fn generate(cfg: &RunConfig, tasks: &[Task]) -> anyhow::Result<()> {
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    std::fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    cfg.echo_into(&cfg.output_dir)?;
    let stimuli = cfg.stimuli_dir();
    let sink = DirSink::new(&stimuli);
    for task in selected(tasks) {
        let started = Instant::now();
        let gen = cfg.generation.clone().scaled(cfg.scale.get(task));
        let seed = derive_seed(cfg.seed(), &format!("generate/{task}"));
        let old = stimuli.join(task.as_str());
        if old.exists() {
            std::fs::remove_dir_all(&old).with_context(|| format!("clearing {}", old.display()))?;
        }
        let dataset = match task {
            Task::Oddball => Dataset::Oddball(generate_default_oddball_dataset(&gen, seed, &sink)?),
            Task::Numerosity => Dataset::Numerosity(generate_numerosity_dataset(&gen, seed, &sink)?),
            Task::Rotation => Dataset::Rotation(generate_rotation_dataset(&default_glyphs(), &gen, seed, &sink)?),
        };
        let hash = dataset.write(&cfg.output_dir)?;
        println!(
            "{task:<10} {:>5} trials  sha256 {hash}  {:.1}s",
            dataset.len(),
            started.elapsed().as_secs_f64()
        );
    }
    println!("manifests in {}, images in {}", cfg.output_dir.display(), stimuli.display());
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, tasks: &[Task], model_id: &str, mode: PromptMode) -> anyhow::Result<()> {
    let datasets = load_datasets(cfg, tasks)?;
    let endpoint = cfg.models.iter().find(|m| m.id == model_id);
    let http = endpoint.map(|m| HttpModel::new(m.clone())).transpose().map_err(anyhow::Error::msg)?;
    let opts = EvalOptions {
        mode,
        concurrency: cfg.evaluation.concurrency,
        retries: cfg.evaluation.retries,
        backoff_base: Duration::from_millis(cfg.evaluation.backoff_ms),
    };
    let model_dir = cfg.output_dir.join("evals").join(model_id);
    for d in &datasets {
        let task = d.task();
        let trials = d.trials();
        let builtin;
        let model: &dyn ModelClient = match &http {
            Some(m) => m,
            None => {
                let seed = derive_seed(cfg.seed(), &format!("model/{model_id}/{task}"));
                builtin = builtin_model(model_id, &trials, seed).with_context(|| {
                    format!("unknown model `{model_id}`: not a built-in model and not in `models` of the config")
                })?;
                &builtin
            }
        };
        let started = Instant::now();
        let records = run_evaluation(&trials, &cfg.stimuli_dir(), model, &opts);
        let path = eval_path(&cfg.output_dir, model_id, task, mode);
        write_records(&path, &records)?;
        let s = score(&records);
        println!(
            "{task:<10} n={} accuracy={} invalid={} transport_errors={}  {:.1}s  -> {}",
            s.n,
            s.accuracy.map(|a| format!("{a:.4}")).unwrap_or_else(|| "n/a".into()),
            s.n_invalid,
            s.n_transport_error,
            started.elapsed().as_secs_f64(),
            path.display()
        );
    }
    cfg.echo_into(&model_dir)?;
    Ok(())
}

pub fn serve(cfg: &RunConfig, tasks: &[Task]) -> anyhow::Result<()> {
    let datasets = load_datasets(cfg, tasks)?;
    let mut experiment = cfg.service.experiment.clone();
    experiment.seed = derive_seed(cfg.seed(), "service");
    let token = std::env::var(&cfg.service.export_token_env).ok().filter(|t| !t.is_empty());
    if token.is_none() {
        log::warn!("{} is unset; /api/export is open to anyone who can reach the service", cfg.service.export_token_env);
    }
    let log_path = cfg.service_log();
    let service_dir = log_path.parent().expect("log has a parent");
    cfg.echo_into(service_dir)?;
    let app = AppState::open(experiment, &datasets, &log_path, &cfg.stimuli_dir(), token).map_err(anyhow::Error::msg)?;
    let (n_sessions, n_responses) = app.with_state(|s| (s.sessions().count(), s.responses().len()));
    println!("replayed {n_sessions} sessions and {n_responses} responses from {}", log_path.display());

    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.service.bind)
            .await
            .with_context(|| format!("binding {}", cfg.service.bind))?;
        println!("listening on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;
        probe_service::serve_on(app.clone(), listener, shutdown_signal()).await?;
        anyhow::Ok(())
    })?;
    let n = app.with_state(|s| s.responses().len());
    println!("stopped; {n} responses on disk");
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

/// Human responses from the service log; a torn final line is skipped.
fn read_service_log(path: &Path) -> anyhow::Result<Vec<probe_service::HumanResponseRecord>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<Event>(line) {
            Ok(Event::ResponseRecorded(r)) => out.push(r),
            Ok(_) => {}
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                log::warn!("{}: ignoring torn final line", path.display())
            }
            Err(e) => bail!("{}: line {}: {e}", path.display(), i + 1),
        }
    }
    Ok(out)
}

/// Records from an `/api/export` download, one JSON object per line.
fn read_export(path: &Path) -> anyhow::Result<Vec<probe_service::HumanResponseRecord>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}: line {}", path.display(), i + 1)))
        .collect()
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).display().to_string()
}

pub fn analyze(cfg: &RunConfig, tasks: &[Task], exports: &[PathBuf]) -> anyhow::Result<()> {
    let datasets = load_datasets(cfg, tasks)?;
    let present: Vec<Task> = datasets.iter().map(|d| d.task()).collect();
    let trials: Vec<TrialInfo> = datasets.iter().flat_map(|d| d.trials()).collect();
    let mut inputs = BTreeMap::new();
    let mut hash_input = |path: &Path| -> anyhow::Result<()> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        inputs.insert(relative(&cfg.output_dir, path), sha256_hex(&bytes));
        Ok(())
    };
    for task in &present {
        hash_input(&cfg.output_dir.join(task.manifest_file()))?;
    }

    let mut evals = Vec::new();
    let evals_root = cfg.output_dir.join("evals");
    if evals_root.is_dir() {
        let mut models: Vec<PathBuf> = std::fs::read_dir(&evals_root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        models.sort();
        for dir in models {
            let model = dir.file_name().expect("dir name").to_string_lossy().to_string();
            for task in &present {
                for mode in [PromptMode::Baseline, PromptMode::Cot] {
                    let path = eval_path(&cfg.output_dir, &model, *task, mode);
                    if path.exists() {
                        evals.extend(read_records(&path)?);
                        hash_input(&path)?;
                    }
                }
            }
        }
    }

    let mut records = Vec::new();
    let log_path = cfg.service_log();
    if log_path.exists() {
        records.extend(read_service_log(&log_path)?);
        hash_input(&log_path)?;
    }
    for path in exports {
        records.extend(read_export(path)?);
        hash_input(path)?;
    }
    // the same response can arrive through the log and an export
    records.sort_by(|a, b| (&a.session_id, &a.trial_id).cmp(&(&b.session_id, &b.trial_id)));
    records.dedup_by(|a, b| a.session_id == b.session_id && a.trial_id == b.trial_id);
    let responses: Vec<HumanResponse> = records
        .into_iter()
        .filter(|r| present.contains(&r.task))
        .map(|r| HumanResponse {
            session_id: r.session_id,
            trial_id: r.trial_id,
            answer: r.answer,
            rt_ms: r.rt_ms,
        })
        .collect();

    let analysis = build_summaries(&trials, &evals, &responses, &cfg.analysis)?;
    let info = RunInfo {
        config: cfg.analysis.clone(),
        seed: cfg.seed,
        inputs,
        n_responses: analysis.n_responses,
        n_eval_records: analysis.n_eval_records,
        excluded_rt_responses: analysis.excluded_rt_responses,
        dropped_participants: analysis.dropped_participants.clone(),
    };
    let dir = cfg.summary_dir();
    let written = write_outputs(&dir, &analysis, &info).map_err(anyhow::Error::msg)?;
    cfg.echo_into(&dir)?;
    println!(
        "{} trials, {} model records, {} human responses ({} outside RT bounds, {} participants dropped)",
        trials.len(),
        analysis.n_eval_records,
        analysis.n_responses,
        analysis.excluded_rt_responses,
        analysis.dropped_participants.len()
    );
    for c in &analysis.correlations {
        let model = if c.model.is_empty() { "human" } else { &c.model };
        match (c.r, c.p) {
            (Some(r), Some(p)) => println!("{:<10} {model:<16} {:<20} {}~{}: r={r:.3} p={p:.3e} n={}", c.task, c.level, c.x, c.y, c.n),
            _ => println!("{:<10} {model:<16} {:<20} {}~{}: n={} ({})", c.task, c.level, c.x, c.y, c.n, c.note),
        }
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
