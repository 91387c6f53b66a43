//! Dataset runs and offline evaluation.
//!
//! A run writes into the output directory:
//! `<id>.png` (change map, 0 / 255), `<id>_cmp.png` (colorized comparison),
//! `<id>_diag.json` (per-tile diagnostics), `report.json` and `failures.json`.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use anyhow::{bail, Context, Result};
use scm_core::metrics::{accumulate, render, Aggregation, ConfusionCounts};
use scm_core::pipeline::{run_pair, PipelineConfig, ThresholdSource};
use scm_core::{AdapterSet, ChangeMap, Diagnostics, RgbImage, Variant};

use crate::config::RunConfig;
use crate::datasets::{Dataset, DatasetKind};
use crate::io::{load_change_map, save_mask, save_rgb};
use crate::report::{EvalReport, Failure, TileRecord};

/// How a run ended; maps onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Success,
    /// Some tiles failed; see `failures.json`.
    Failures,
    /// The dataset had nothing to process.
    Empty,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Success => 0,
            Self::Failures => 1,
            Self::Empty => 3,
        }
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub report: EvalReport,
    pub failures: Vec<Failure>,
    pub status: RunStatus,
    pub out: PathBuf,
}

struct TileOutput {
    map: ChangeMap,
    comparison: RgbImage,
    diagnostics: Diagnostics,
    counts: ConfusionCounts,
}

fn process_tile(
    dataset: &Dataset,
    index: usize,
    adapters: &mut AdapterSet,
    pipeline: &PipelineConfig,
) -> Result<TileOutput> {
    let sample = dataset.load(index)?;
    let (map, diagnostics) = run_pair(&sample.pair, adapters, pipeline)?;
    let counts = accumulate(&map, &sample.gt)?;
    let comparison = render(&map, &sample.gt)?;
    Ok(TileOutput {
        map,
        comparison,
        diagnostics,
        counts,
    })
}

fn write_tile(out: &Path, id: &str, tile: &TileOutput) -> Result<()> {
    save_mask(&out.join(format!("{id}.png")), tile.map.mask())?;
    save_rgb(&out.join(format!("{id}_cmp.png")), &tile.comparison)?;
    let diag = serde_json::to_string_pretty(&tile.diagnostics)?;
    let path = out.join(format!("{id}_diag.json"));
    std::fs::write(&path, diag + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_failures(out: &Path, failures: &[Failure]) -> Result<()> {
    let path = out.join("failures.json");
    std::fs::write(&path, serde_json::to_string_pretty(failures)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

/// Builds one adapter replica per worker.
fn replicas(cfg: &RunConfig, count: usize) -> Result<Vec<AdapterSet>> {
    (0..count)
        .map(|_| {
            let set = cfg.adapter.build()?;
            if cfg.variant == Variant::Scm && !set.supports_attention() {
                bail!("variant scm needs a mask generator and an embedder");
            }
            Ok(set)
        })
        .collect()
}

/// Runs every tile of the configured dataset and persists maps and scores.
pub fn run_dataset(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let pipeline = cfg.pipeline()?;
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let dataset = Dataset::open(cfg.dataset, &cfg.root)?;
    let name = cfg.dataset.to_string();

    if dataset.is_empty() {
        log::warn!("dataset at {} has no items; nothing to do", cfg.root.display());
        let report = EvalReport::new(name, Some(cfg.variant), cfg.aggregate, Vec::new());
        report.save(&cfg.out.join("report.json"))?;
        write_failures(&cfg.out, &[])?;
        return Ok(RunSummary {
            report,
            failures: Vec::new(),
            status: RunStatus::Empty,
            out: cfg.out.clone(),
        });
    }

    let workers = cfg.workers.min(dataset.len());
    let adapters = replicas(cfg, workers)?;
    let next = AtomicUsize::new(0);
    let mut records: Vec<Option<TileRecord>> = vec![None; dataset.len()];
    let mut failures = Vec::new();

    std::thread::scope(|scope| -> Result<()> {
        let (tx, rx) = mpsc::channel::<(usize, Result<TileOutput>)>();
        for mut set in adapters {
            let (tx, next, dataset, pipeline) = (tx.clone(), &next, &dataset, &pipeline);
            scope.spawn(move || loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= dataset.len() {
                    break;
                }
                let result = process_tile(dataset, index, &mut set, pipeline);
                if tx.send((index, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // all file writes happen on this thread
        for (index, result) in rx {
            let id = dataset.id(index);
            let outcome = result.and_then(|tile| {
                write_tile(&cfg.out, &id, &tile)?;
                Ok(tile)
            });
            match outcome {
                Ok(tile) => {
                    if tile.diagnostics.threshold_source == ThresholdSource::Degenerate {
                        log::warn!("{id}: no usable difference values, change map left empty");
                    }
                    log::info!("{id}: {} changed pixels", tile.diagnostics.changed_pixels);
                    records[index] = Some(TileRecord::new(id, tile.counts, dataset.tile(index)));
                }
                Err(e) => {
                    let error = format!("{e:#}");
                    log::error!("{id}: {error}");
                    failures.push(Failure { id, error });
                }
            }
        }
        Ok(())
    })?;

    failures.sort_by(|a, b| a.id.cmp(&b.id));
    let report = EvalReport::new(
        name,
        Some(cfg.variant),
        cfg.aggregate,
        records.into_iter().flatten().collect(),
    );
    report.save(&cfg.out.join("report.json"))?;
    write_failures(&cfg.out, &failures)?;
    let status = if failures.is_empty() {
        RunStatus::Success
    } else {
        RunStatus::Failures
    };
    Ok(RunSummary {
        report,
        failures,
        status,
        out: cfg.out.clone(),
    })
}

/// Recomputes scores from change maps saved by a previous run.
pub fn eval_predictions(
    pred: &Path,
    kind: DatasetKind,
    gt_root: &Path,
    aggregation: Aggregation,
) -> Result<EvalReport> {
    let dataset = Dataset::open(kind, gt_root)?;
    let mut records = Vec::with_capacity(dataset.len());
    for index in 0..dataset.len() {
        let id = dataset.id(index);
        let gt = dataset.ground_truth(index)?;
        let map = load_change_map(&pred.join(format!("{id}.png"))).with_context(|| format!("prediction for {id}"))?;
        let counts = accumulate(&map, &gt).with_context(|| format!("scoring {id}"))?;
        records.push(TileRecord::new(id, counts, dataset.tile(index)));
    }
    Ok(EvalReport::new(kind.to_string(), None, aggregation, records))
}
