//! Flat key=value run configuration.
//!
//! One `key = value` pair per line, `#` comments, unknown keys are hard
//! errors. Every run writes its fully resolved configuration next to its
//! outputs; that file reloads to an equal `RunConfig`. The training section
//! is hashed (SHA-256 over its canonical serialization) and embedded in
//! checkpoints.

use anyhow::{anyhow, bail, Context, Result};
use std::path::{Path, PathBuf};
use stegcore::checkpoint::{hash_config_text, ConfigHash};
use stegcore::tensor::Real;
use stegcore::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    // dataset generation
    pub n_pairs: usize,
    pub test_pairs: usize,
    pub width: usize,
    pub height: usize,
    pub rate_bpp: Real,
    // paths and output behavior
    pub dataset_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Save a checkpoint every N epochs (0: only best and final).
    pub checkpoint_every: u32,
    pub export_filters: bool,
    pub export_features: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            n_pairs: 200,
            test_pairs: 40,
            width: 64,
            height: 64,
            rate_bpp: 0.4,
            dataset_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            checkpoint_every: 0,
            export_filters: false,
            export_features: false,
        }
    }
}

fn parse_real(key: &str, value: &str) -> Result<Real> {
    value
        .parse()
        .map_err(|_| anyhow!("config key '{key}': bad real value '{value}'"))
}

fn parse_int<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| anyhow!("config key '{key}': bad integer value '{value}'"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => bail!("config key '{key}': expected true or false, got '{value}'"),
    }
}

impl RunConfig {
    /// Parse config text, starting from defaults. Unknown keys are errors.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key=value, got '{line}'", lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "lambda" => cfg.train.lambda = parse_real(key, value)?,
                "lr0" => cfg.train.lr0 = parse_real(key, value)?,
                "lr_multiplier" => cfg.train.lr_multiplier = parse_real(key, value)?,
                "lr_drops_max" => cfg.train.lr_drops_max = parse_int(key, value)?,
                "plateau_epochs" => cfg.train.plateau_epochs = parse_int(key, value)?,
                "momentum" => cfg.train.momentum = parse_real(key, value)?,
                "batch_size" => cfg.train.batch_size = parse_int(key, value)?,
                "init_std" => cfg.train.init_std = parse_real(key, value)?,
                "fc_weight_decay" => cfg.train.fc_weight_decay = parse_real(key, value)?,
                "seed" => cfg.train.seed = parse_int(key, value)?,
                "max_epochs" => cfg.train.max_epochs = parse_int(key, value)?,
                "target_val_error" => {
                    cfg.train.target_val_error = if value.is_empty() || value == "none" {
                        None
                    } else {
                        Some(parse_real(key, value)?)
                    }
                }
                "n_pairs" => cfg.n_pairs = parse_int(key, value)?,
                "test_pairs" => cfg.test_pairs = parse_int(key, value)?,
                "width" => cfg.width = parse_int(key, value)?,
                "height" => cfg.height = parse_int(key, value)?,
                "rate_bpp" => cfg.rate_bpp = parse_real(key, value)?,
                "dataset_dir" => cfg.dataset_dir = PathBuf::from(value),
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "checkpoint_every" => cfg.checkpoint_every = parse_int(key, value)?,
                "export_filters" => cfg.export_filters = parse_bool(key, value)?,
                "export_features" => cfg.export_features = parse_bool(key, value)?,
                other => bail!("unknown config key '{other}'"),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        RunConfig::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Canonical serialization of the training section; hashed into
    /// checkpoints.
    pub fn train_section(&self) -> String {
        let t = &self.train;
        let target = match t.target_val_error {
            Some(v) => v.to_string(),
            None => "none".to_string(),
        };
        format!(
            "lambda = {}\nlr0 = {}\nlr_multiplier = {}\nlr_drops_max = {}\nplateau_epochs = {}\nmomentum = {}\nbatch_size = {}\ninit_std = {}\nfc_weight_decay = {}\nseed = {}\nmax_epochs = {}\ntarget_val_error = {}\n",
            t.lambda,
            t.lr0,
            t.lr_multiplier,
            t.lr_drops_max,
            t.plateau_epochs,
            t.momentum,
            t.batch_size,
            t.init_std,
            t.fc_weight_decay,
            t.seed,
            t.max_epochs,
            target,
        )
    }

    pub fn train_hash(&self) -> ConfigHash {
        hash_config_text(&self.train_section())
    }

    /// Fully resolved key=value text; reparses to an equal config.
    pub fn to_text(&self) -> String {
        format!(
            "# resolved run configuration\n{}n_pairs = {}\ntest_pairs = {}\nwidth = {}\nheight = {}\nrate_bpp = {}\ndataset_dir = {}\nout_dir = {}\ncheckpoint_every = {}\nexport_filters = {}\nexport_features = {}\n",
            self.train_section(),
            self.n_pairs,
            self.test_pairs,
            self.width,
            self.height,
            self.rate_bpp,
            self.dataset_dir.display(),
            self.out_dir.display(),
            self.checkpoint_every,
            self.export_filters,
            self.export_features,
        )
    }

    /// Write the resolved config next to a run's outputs.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("config.resolved.txt");
        std::fs::write(&path, self.to_text())
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
