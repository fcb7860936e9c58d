//! `steg generate`: synthesize the cover/stego dataset on disk.

use crate::config::RunConfig;
use crate::lockfile::DirLock;
use anyhow::Result;
use stegcore::stegosim::{make_dataset, write_dataset, DatasetSpec};

pub fn run(cfg: &RunConfig) -> Result<()> {
    let _lock = DirLock::acquire(&cfg.dataset_dir)?;
    let spec = DatasetSpec {
        n_pairs: cfg.n_pairs,
        test_pairs: cfg.test_pairs,
        width: cfg.width,
        height: cfg.height,
        rate_bpp: cfg.rate_bpp,
        master_seed: cfg.train.seed,
    };
    log::info!(
        "generating {} + {} pairs of {}x{} at {} bpp (seed {})",
        spec.n_pairs,
        spec.test_pairs,
        spec.width,
        spec.height,
        spec.rate_bpp,
        spec.master_seed
    );
    let data = make_dataset(&spec)?;
    write_dataset(&cfg.dataset_dir, &data)?;
    cfg.write_resolved(&cfg.dataset_dir)?;
    println!(
        "wrote {} pairs ({} files) to {}",
        data.pairs.len(),
        2 * data.pairs.len(),
        cfg.dataset_dir.display()
    );
    println!(
        "split: {} train / {} val / {} test pairs",
        data.split.train.len(),
        data.split.val.len(),
        data.split.test.len()
    );
    Ok(())
}
