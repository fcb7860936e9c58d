//! `steg train`: joint training with history logging and checkpoints.

use crate::commands::export;
use crate::config::RunConfig;
use crate::lockfile::DirLock;
use anyhow::{Context, Result};
use stegcore::checkpoint::save_checkpoint;
use stegcore::stegosim::load_dataset;
use stegcore::trainer::{fit, init_model, prepare_dataset, write_history_csv, StepOptions};

pub fn run(cfg: &RunConfig) -> Result<()> {
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    let data = load_dataset(&cfg.dataset_dir)
        .with_context(|| format!("loading dataset from {}", cfg.dataset_dir.display()))?;
    let prepared = prepare_dataset(&data)?;
    log::info!(
        "dataset: {} pairs ({} train / {} val / {} test), {}x{}",
        data.pairs.len(),
        prepared.train_ids.len(),
        prepared.val_ids.len(),
        prepared.test_ids.len(),
        prepared.width,
        prepared.height
    );

    let mut model = init_model(&cfg.train);
    log::info!("model parameters: {}", model.param_count());
    let hash = cfg.train_hash();
    cfg.write_resolved(&cfg.out_dir)?;

    let cadence = cfg.checkpoint_every;
    let out_dir = cfg.out_dir.clone();
    let result = fit(
        &mut model,
        &prepared,
        &cfg.train,
        StepOptions::default(),
        |m, rec| {
            log::info!(
                "epoch {:>4}  lr {:.3e}  Jc {:.5}  Jr {:.3e}  J {:.4e}  train_err {:.4}  val_err {:.4}",
                rec.epoch,
                rec.lr,
                rec.jc,
                rec.jr,
                rec.j,
                rec.train_err,
                rec.val_err
            );
            if cadence > 0 && rec.epoch.is_multiple_of(cadence) {
                let path = out_dir.join(format!("checkpoint_epoch_{:04}.bin", rec.epoch));
                save_checkpoint(&path, m, &hash)?;
            }
            Ok(())
        },
    )?;

    write_history_csv(&cfg.out_dir.join("history.csv"), &result.history)?;
    save_checkpoint(&cfg.out_dir.join("checkpoint_best.bin"), &result.best_model, &hash)?;
    save_checkpoint(&cfg.out_dir.join("checkpoint_final.bin"), &model, &hash)?;

    if result.clamp_events > 0 {
        log::warn!(
            "{} probability clamp events during training",
            result.clamp_events
        );
    }
    if cfg.export_filters {
        let dir = cfg.out_dir.join("filters");
        export::export_filters(&result.best_model, &dir)?;
        log::info!("filters exported to {}", dir.display());
    }
    if cfg.export_features {
        if let Some(&pair) = prepared.val_ids.first().or(prepared.train_ids.first()) {
            let dir = cfg.out_dir.join("features");
            export::export_features_from_plane(
                &result.best_model,
                &prepared.stegos[pair],
                prepared.height,
                prepared.width,
                &dir,
            )?;
            log::info!("abs-layer feature maps exported to {}", dir.display());
        }
    }

    println!(
        "trained {} epochs; best val error {:.4} at epoch {} ({:?})",
        result.history.len(),
        result.best_val_error,
        result.best_epoch,
        result.stop
    );
    println!("history: {}", cfg.out_dir.join("history.csv").display());
    println!(
        "best checkpoint: {}",
        cfg.out_dir.join("checkpoint_best.bin").display()
    );
    Ok(())
}
