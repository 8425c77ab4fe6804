mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use probe_core::Task;
use probe_harness::PromptMode;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "probe", version, about = "Generate stimuli, evaluate models, run the human experiment service and analyze results")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scale factor applied to every task (at least 0.01).
    #[arg(long)]
    scale: Option<f64>,
    /// Restrict to a task; repeatable.
    #[arg(long = "task")]
    tasks: Vec<Task>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate manifests and images.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Query a model on every trial and write JSONL records.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Built-in model (oracle, uniform_random, majority_class) or an id from `models`.
        #[arg(long)]
        model: String,
        #[arg(long)]
        mode: Option<PromptMode>,
    },
    /// Run the experiment service until interrupted.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bind: Option<String>,
    },
    /// Join evaluations and human responses and write summary CSVs.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Extra response exports (NDJSON from /api/export); repeatable.
        #[arg(long = "responses")]
        responses: Vec<PathBuf>,
    },
}

fn resolve(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = Some(seed);
    }
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(s) = common.scale {
        cfg.scale.oddball = s;
        cfg.scale.numerosity = s;
        cfg.scale.rotation = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate { common } => {
            let cfg = resolve(&common)?;
            cfg.validate()?;
            commands::generate(&cfg, &common.tasks)
        }
        Command::Evaluate { common, model, mode } => {
            let mut cfg = resolve(&common)?;
            if let Some(m) = mode {
                cfg.evaluation.mode = m;
            }
            cfg.validate()?;
            let mode = cfg.evaluation.mode;
            commands::evaluate(&cfg, &common.tasks, &model, mode).with_context(|| format!("evaluating `{model}`"))
        }
        Command::Serve { common, bind } => {
            let mut cfg = resolve(&common)?;
            if let Some(b) = bind {
                cfg.service.bind = b;
            }
            cfg.validate()?;
            commands::serve(&cfg, &common.tasks)
        }
        Command::Analyze { common, responses } => {
            let cfg = resolve(&common)?;
            cfg.validate()?;
            commands::analyze(&cfg, &common.tasks, &responses)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
