//! `steg eval`: detection error of a checkpoint on a dataset split.

use crate::config::RunConfig;
use crate::lockfile::DirLock;
use anyhow::{Context, Result};
use std::path::Path;
use stegcore::checkpoint::{hash_hex, load_checkpoint};
use stegcore::stegosim::{load_dataset, SplitKind};
use stegcore::trainer::{evaluate, prepare_dataset};

pub fn run(cfg: &RunConfig, checkpoint: &Path, split: SplitKind) -> Result<()> {
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    let hash = cfg.train_hash();
    let mut model = load_checkpoint(checkpoint, Some(&hash))
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let data = load_dataset(&cfg.dataset_dir)?;
    let prepared = prepare_dataset(&data)?;
    let report = evaluate(&mut model, &prepared, split, cfg.train.batch_size / 2)?;

    let text = format!(
        "split={split}\ncheckpoint={}\nconfig_hash={}\nimages={}\ncovers={}\nstegos={}\nfalse_alarms={}\nmissed_detections={}\nmisclassified={}\ndetection_error={:.6}\n",
        checkpoint.display(),
        hash_hex(&hash),
        report.total(),
        report.covers,
        report.stegos,
        report.false_alarms,
        report.missed_detections,
        report.misclassified(),
        report.error,
    );
    let report_path = cfg.out_dir.join(format!("eval_report_{split}.txt"));
    std::fs::write(&report_path, &text)
        .with_context(|| format!("writing {}", report_path.display()))?;

    println!(
        "detection error on {split}: {:.4} ({} false alarms, {} missed detections over {} images)",
        report.error,
        report.false_alarms,
        report.missed_detections,
        report.total()
    );
    println!("report: {}", report_path.display());
    Ok(())
}
