//! The experiment harness around the `fewnist` library: pre-train networks,
//! run few-shot sessions, regenerate result tables, and verify gradients.
//!
//! Every command resolves one [`config::ExperimentConfig`] (JSON file plus
//! flag overrides), runs, and leaves a `manifest.json` in its output
//! directory recording the resolved config, derived seeds, timestamps and
//! produced files — on failure as well, with the error message. Re-running
//! a manifest's config block reproduces the run byte for byte.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::RunCtx;
use config::{ExperimentConfig, Overrides};
use manifest::{RunManifest, RunStatus, SeedEcho};

#[derive(Parser)]
#[command(name = "fewnist", version, about = "Few-shot digit learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train a network and write a checkpoint plus training report.
    Pretrain(RunArgs),
    /// Run a few-shot session from a checkpoint.
    Fewshot(RunArgs),
    /// Aggregate fewshot runs into tables with deltas vs reference values.
    Report(ReportArgs),
    /// Check the analytic backward pass against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; stream seeds derive from it by fixed offsets.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts and the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    /// main | no_freeze | no_enrich | reduced_lr_0.01 | fewshot_pretrain.
    #[arg(long)]
    variant: Option<String>,
    /// Number of shots in the session.
    #[arg(long)]
    shots: Option<usize>,
    /// Checkpoint to read (fewshot) or to write instead of the default
    /// location (pretrain).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            variant: self.variant.clone(),
            shots: self.shots,
        }
    }
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories to aggregate.
    runs: Vec<PathBuf>,
    /// Config JSON supplying the output directory, if no --out is given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for report.md and report.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Config JSON supplying seed and output directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the random network population.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for gradcheck.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Pretrain(args) => {
            let checkpoint = args.checkpoint.clone();
            run_with_manifest("pretrain", args.config.as_deref(), &args.overrides(), |cfg, ctx| {
                commands::pretrain::run(cfg, checkpoint.as_deref(), ctx)
            })
        }
        Command::Fewshot(args) => {
            let checkpoint = args.checkpoint.clone();
            run_with_manifest("fewshot", args.config.as_deref(), &args.overrides(), |cfg, ctx| {
                commands::fewshot::run(cfg, checkpoint.as_deref(), ctx)
            })
        }
        Command::Report(args) => {
            let over = Overrides {
                out: args.out.clone(),
                ..Overrides::default()
            };
            run_with_manifest("report", args.config.as_deref(), &over, |cfg, ctx| {
                commands::report::run(&args.runs, cfg, ctx)
            })
        }
        Command::Gradcheck(args) => {
            let over = Overrides {
                seed: args.seed,
                out: args.out.clone(),
                ..Overrides::default()
            };
            run_with_manifest("gradcheck", args.config.as_deref(), &over, |cfg, ctx| {
                commands::gradcheck::run(cfg, ctx)
            })
        }
    }
}

/// Resolve the config, run the command body, and write the manifest into
/// the output directory whether the body succeeded or not. When even the
/// config fails to resolve, a manifest naming that failure still lands in
/// the best output directory known (the --out flag or the default).
fn run_with_manifest(
    command: &str,
    config_path: Option<&Path>,
    over: &Overrides,
    body: impl FnOnce(&ExperimentConfig, &mut RunCtx) -> Result<()>,
) -> Result<()> {
    let started_utc = now_utc();
    let (cfg, resolve_err) = match ExperimentConfig::resolve(config_path, over) {
        Ok(cfg) => (cfg, None),
        Err(err) => {
            let mut fallback = ExperimentConfig::default();
            if let Some(seed) = over.seed {
                fallback.seed = seed;
            }
            if let Some(out) = &over.out {
                fallback.out_dir = out.clone();
            }
            (fallback, Some(err))
        }
    };
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating output directory {}", cfg.out_dir.display()))?;

    let mut ctx = RunCtx::default();
    let result = match resolve_err {
        Some(err) => Err(err),
        None => body(&cfg, &mut ctx),
    };

    let out_dir = cfg.out_dir.clone();
    let manifest = RunManifest {
        command: command.into(),
        status: match &result {
            Ok(()) => RunStatus::Ok,
            Err(err) => RunStatus::Error(format!("{err:#}")),
        },
        code_version: env!("CARGO_PKG_VERSION").into(),
        started_utc,
        finished_utc: now_utc(),
        seeds: SeedEcho::from_master(cfg.seed),
        dataset_source: ctx.dataset_source,
        produced_files: ctx.produced,
        config: cfg,
    };
    manifest
        .write(&out_dir)
        .with_context(|| format!("writing manifest to {}", out_dir.display()))?;
    result
}

fn now_utc() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
