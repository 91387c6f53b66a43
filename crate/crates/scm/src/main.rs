use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use scm::config::{AdapterKind, RunConfig};
use scm::datasets::DatasetKind;
use scm::{eval_predictions, run_dataset};
use scm_core::metrics::Aggregation;
use scm_core::Variant;

#[derive(Parser)]
#[command(name = "scm", version, about = "Zero-shot building change detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect changes over a dataset and score them.
    Run(RunArgs),
    /// Recompute scores from change maps written by `run`.
    Eval(EvalArgs),
}

fn parse_aggregation(s: &str) -> Result<Aggregation, String> {
    match s {
        "micro" => Ok(Aggregation::Micro),
        "macro" => Ok(Aggregation::Macro),
        other => Err(format!("unknown aggregation {other:?} (expected micro or macro)")),
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<DatasetKind>,
    #[arg(long)]
    root: Option<PathBuf>,
    /// base | rff | scm
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Prompt file with [building] and [non-building] sections.
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Fixed threshold used instead of OTSU.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    /// micro | macro
    #[arg(long, value_parser = parse_aggregation)]
    aggregate: Option<Aggregation>,
    /// Use the deterministic synthetic backbone with this seed instead of pretrained models.
    #[arg(long, value_name = "SEED")]
    synthetic_backbone: Option<u64>,
    /// Weights directory for the model worker (default: $SCM_WEIGHTS_DIR).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Device passed to the model worker.
    #[arg(long)]
    device: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory holding `<id>.png` change maps.
    #[arg(long)]
    pred: PathBuf,
    /// Dataset root with the reference labels.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value = "levir")]
    dataset: DatasetKind,
    #[arg(long, default_value = "micro", value_parser = parse_aggregation)]
    aggregate: Aggregation,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_config(args: RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let root_given = args.root.is_some() || args.config.is_some();
    if let Some(v) = args.dataset {
        cfg.dataset = v;
    }
    if let Some(v) = args.root {
        cfg.root = v;
    }
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    if let Some(v) = args.out {
        cfg.out = v;
    }
    if let Some(v) = args.prompts {
        cfg.prompts = Some(v);
    }
    if let Some(v) = args.threshold {
        cfg.threshold = Some(v);
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
    }
    if let Some(v) = args.aggregate {
        cfg.aggregate = v;
    }
    if let Some(seed) = args.synthetic_backbone {
        cfg.adapter.kind = AdapterKind::Synthetic;
        cfg.adapter.seed = seed;
    }
    if let Some(v) = args.weights {
        cfg.adapter.weights = Some(v);
    }
    if let Some(v) = args.device {
        cfg.adapter.device = v;
    }
    if !root_given {
        anyhow::bail!("--root is required (or a --config that sets root)");
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = match Cli::parse().command {
        Command::Run(args) => run_config(args).and_then(|cfg| {
            let summary = run_dataset(&cfg)?;
            let s = summary.report.scores;
            println!(
                "{} {}: {} tiles, {} failed, F1 {:.4} mIoU {:.4} OA {:.4} -> {}",
                summary.report.dataset,
                cfg.variant.name(),
                summary.report.per_tile.len(),
                summary.failures.len(),
                s.f1,
                s.miou,
                s.oa,
                summary.out.display()
            );
            Ok(summary.status.exit_code())
        }),
        Command::Eval(args) => (|| -> Result<i32> {
            let report = eval_predictions(&args.pred, args.dataset, &args.gt, args.aggregate)?;
            if let Some(path) = &args.out {
                report.save(path)?;
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&report.scores).context("encoding scores")?
            );
            Ok(0)
        })(),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
