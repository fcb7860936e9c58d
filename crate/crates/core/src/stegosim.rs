//! Seeded synthetic dataset factory: procedural grayscale covers plus an
//! LSB-matching embedder, giving cover/stego pairs with pixel-level
//! supervision at desk scale.
//!
//! LSB matching flips each pixel by +-1 independently with probability
//! `rate_bpp / 2` (the change rate of +-1 embedding at payload `rate_bpp`
//! under simple coding). Values at 0 are forced up and at 255 down, so the
//! output always stays in range and never differs from the cover by more
//! than 1.

use crate::error::{Error, Result};
use crate::pgm::{read_pgm, write_pgm, GrayImage, PgmFormat};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tensor::Real;
use rand::Rng;
use std::fmt;
use std::io::Write;
use std::path::Path;

/// One supervision unit: a cover, its stego twin, and embedding metadata.
#[derive(Debug, Clone)]
pub struct ImagePair {
    pub cover: GrayImage,
    pub stego: GrayImage,
    pub rate_bpp: Real,
    pub cover_seed: u64,
    pub embed_seed: u64,
    pub source_id: String,
}

/// Split membership by pair index. A cover and its stego always share a
/// split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub split_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitKind::Train),
            "val" => Ok(SplitKind::Val),
            "test" => Ok(SplitKind::Test),
            other => Err(Error::Parse(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub pairs: Vec<ImagePair>,
    pub split: DatasetSplit,
}

/// Generation parameters for [`make_dataset`].
#[derive(Debug, Clone, Copy)]
pub struct DatasetSpec {
    /// Pairs split 4/5 train, 1/5 validation.
    pub n_pairs: usize,
    /// Additional held-out pairs, never touched during training.
    pub test_pairs: usize,
    pub width: usize,
    pub height: usize,
    pub rate_bpp: Real,
    pub master_seed: u64,
}

/// Procedural grayscale texture: smoothed band-limited noise over low-order
/// gradient fields plus a few smooth waves, quantized to 8 bits. Seeded and
/// reproducible; never constant (std >= 2 gray levels by construction).
pub fn gen_cover(width: usize, height: usize, texture_seed: u64) -> GrayImage {
    assert!(width >= 32 && height >= 32, "covers are at least 32x32");
    let mut rng = rng_from_seed(texture_seed);

    let base: f64 = rng.gen_range(80.0..176.0);
    let grad_x: f64 = rng.gen_range(-30.0..30.0);
    let grad_y: f64 = rng.gen_range(-30.0..30.0);
    let noise_amp: f64 = rng.gen_range(6.0..24.0);
    let sigma: f64 = rng.gen_range(1.0..3.0);
    let n_waves = rng.gen_range(1..=3);
    let waves: Vec<(f64, f64, f64, f64)> = (0..n_waves)
        .map(|_| {
            let amp = rng.gen_range(3.0..15.0);
            let period = rng.gen_range(16.0..64.0);
            let angle = rng.gen_range(0.0..std::f64::consts::PI);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            (amp, period, angle, phase)
        })
        .collect();

    // White noise, then a separable Gaussian blur with replicated borders.
    let mut noise: Vec<f64> = (0..width * height)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let ksum: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.into_iter().map(|k| k / ksum).collect();

    let blur_pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut dst = vec![0.0; src.len()];
        for y in 0..height {
            for x in 0..width {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let off = k as isize - radius;
                    let (sx, sy) = if horizontal {
                        ((x as isize + off).clamp(0, width as isize - 1), y as isize)
                    } else {
                        (x as isize, (y as isize + off).clamp(0, height as isize - 1))
                    };
                    acc += kv * src[sy as usize * width + sx as usize];
                }
                dst[y * width + x] = acc;
            }
        }
        dst
    };
    noise = blur_pass(&noise, true);
    noise = blur_pass(&noise, false);

    // Normalize the blurred field to unit std so noise_amp is in gray levels.
    let mean = noise.iter().sum::<f64>() / noise.len() as f64;
    let var = noise.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / noise.len() as f64;
    let inv_std = 1.0 / var.sqrt().max(1e-9);

    let mut img = GrayImage::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let u = x as f64 / width as f64 - 0.5;
            let v = y as f64 / height as f64 - 0.5;
            let mut value = base + grad_x * u + grad_y * v;
            for &(amp, period, angle, phase) in &waves {
                let t = (x as f64 * angle.cos() + y as f64 * angle.sin()) / period;
                value += amp * (std::f64::consts::TAU * t + phase).sin();
            }
            value += noise_amp * (noise[y * width + x] - mean) * inv_std;
            img.set(x, y, value.round().clamp(0.0, 255.0) as u8);
        }
    }
    img
}

/// LSB-matching embedding: each pixel changes by +-1 with probability
/// `rate_bpp / 2`, direction uniform (forced inward at 0 and 255).
pub fn embed_lsbm(cover: &GrayImage, rate_bpp: Real, embed_seed: u64) -> Result<GrayImage> {
    if !(0.0..=1.0).contains(&rate_bpp) {
        return Err(Error::Config(format!(
            "rate_bpp must be in [0, 1], got {rate_bpp}"
        )));
    }
    let mut stego = cover.clone();
    if rate_bpp == 0.0 {
        return Ok(stego);
    }
    #[allow(clippy::unnecessary_cast)] // Real may be f32
    let change_prob = rate_bpp as f64 / 2.0;
    let mut rng = rng_from_seed(embed_seed);
    for p in stego.pixels_mut() {
        if rng.gen::<f64>() < change_prob {
            let up = rng.gen::<bool>();
            *p = match (*p, up) {
                (0, _) => 1,
                (255, _) => 254,
                (v, true) => v + 1,
                (v, false) => v - 1,
            };
        }
    }
    Ok(stego)
}

fn cover_seed_for(master: u64, index: usize) -> u64 {
    derive_seed(master, 0x0001_0000_0000 | index as u64)
}

fn embed_seed_for(master: u64, index: usize) -> u64 {
    derive_seed(master, 0x0002_0000_0000 | index as u64)
}

pub fn pair_id(index: usize) -> String {
    format!("pair_{index:05}")
}

/// Generate `n_pairs + test_pairs` cover/stego pairs with per-pair RNG
/// streams, then split: the first `n_pairs` shuffle into 4/5 train and 1/5
/// validation; the remainder is the held-out test set.
pub fn make_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    if spec.n_pairs < 10 {
        return Err(Error::Config(format!(
            "need at least 10 pairs, got {}",
            spec.n_pairs
        )));
    }
    let total = spec.n_pairs + spec.test_pairs;
    let results: Vec<Result<ImagePair>> = crate::ops::map_indexed(total, |i| {
        let cover_seed = cover_seed_for(spec.master_seed, i);
        let embed_seed = embed_seed_for(spec.master_seed, i);
        let cover = gen_cover(spec.width, spec.height, cover_seed);
        let stego = embed_lsbm(&cover, spec.rate_bpp, embed_seed)?;
        Ok(ImagePair {
            cover,
            stego,
            rate_bpp: spec.rate_bpp,
            cover_seed,
            embed_seed,
            source_id: pair_id(i),
        })
    });
    let mut pairs = Vec::with_capacity(total);
    for r in results {
        pairs.push(r?);
    }

    let split_seed = derive_seed(spec.master_seed, 0x0003_0000_0000);
    let mut order: Vec<usize> = (0..spec.n_pairs).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng_from_seed(split_seed));
    let n_train = spec.n_pairs * 4 / 5;
    let train = order[..n_train].to_vec();
    let val = order[n_train..].to_vec();
    let test: Vec<usize> = (spec.n_pairs..total).collect();

    Ok(Dataset {
        pairs,
        split: DatasetSplit {
            train,
            val,
            test,
            split_seed,
        },
    })
}

impl Dataset {
    pub fn split_of(&self, index: usize) -> SplitKind {
        if self.split.test.contains(&index) {
            SplitKind::Test
        } else if self.split.val.contains(&index) {
            SplitKind::Val
        } else {
            SplitKind::Train
        }
    }
}

/// Write `<id>_cover.pgm` / `<id>_stego.pgm` for every pair plus a
/// `manifest.txt` (one record per pair: id, dims, rate, seeds, split).
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut manifest = Vec::new();
    writeln!(manifest, "# synthetic cover/stego dataset manifest").unwrap();
    writeln!(manifest, "# id,width,height,rate_bpp,cover_seed,embed_seed,split").unwrap();
    writeln!(manifest, "split_seed={}", data.split.split_seed).unwrap();
    for (i, pair) in data.pairs.iter().enumerate() {
        let id = &pair.source_id;
        write_pgm(
            &dir.join(format!("{id}_cover.pgm")),
            &pair.cover,
            PgmFormat::Binary,
        )?;
        write_pgm(
            &dir.join(format!("{id}_stego.pgm")),
            &pair.stego,
            PgmFormat::Binary,
        )?;
        writeln!(
            manifest,
            "{id},{},{},{},{},{},{}",
            pair.cover.width(),
            pair.cover.height(),
            pair.rate_bpp,
            pair.cover_seed,
            pair.embed_seed,
            data.split_of(i)
        )
        .unwrap();
    }
    let path = dir.join("manifest.txt");
    std::fs::write(&path, manifest).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Load a dataset written by [`write_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.txt");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let mut split_seed = 0;
    let mut pairs = Vec::new();
    let mut split = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        split_seed: 0,
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(v) = line.strip_prefix("split_seed=") {
            split_seed = v
                .parse()
                .map_err(|_| Error::Parse(format!("bad split_seed '{v}'")))?;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse(format!("bad manifest record '{line}'")));
        }
        let id = fields[0];
        let rate_bpp: Real = fields[3]
            .parse()
            .map_err(|_| Error::Parse(format!("bad rate '{}'", fields[3])))?;
        let cover_seed: u64 = fields[4]
            .parse()
            .map_err(|_| Error::Parse(format!("bad seed '{}'", fields[4])))?;
        let embed_seed: u64 = fields[5]
            .parse()
            .map_err(|_| Error::Parse(format!("bad seed '{}'", fields[5])))?;
        let kind: SplitKind = fields[6].parse()?;
        let cover = read_pgm(&dir.join(format!("{id}_cover.pgm")))?;
        let stego = read_pgm(&dir.join(format!("{id}_stego.pgm")))?;
        let index = pairs.len();
        pairs.push(ImagePair {
            cover,
            stego,
            rate_bpp,
            cover_seed,
            embed_seed,
            source_id: id.to_string(),
        });
        match kind {
            SplitKind::Train => split.train.push(index),
            SplitKind::Val => split.val.push(index),
            SplitKind::Test => split.test.push(index),
        }
    }
    split.split_seed = split_seed;
    Ok(Dataset { pairs, split })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let a = gen_cover(32, 32, 42);
        let b = gen_cover(32, 32, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn cover_range_and_spread() {
        for seed in 0..20 {
            let img = gen_cover(48, 32, seed);
            let (_, std) = img.stats();
            assert!(std >= 2.0, "seed {seed}: std {std}");
        }
    }

    #[test]
    fn rate_zero_returns_cover_bit_exactly() {
        let cover = gen_cover(32, 32, 7);
        let stego = embed_lsbm(&cover, 0.0, 9).unwrap();
        assert_eq!(stego, cover);
    }

    #[test]
    fn changes_are_plus_minus_one_and_in_range() {
        let cover = gen_cover(64, 64, 3);
        let stego = embed_lsbm(&cover, 0.8, 11).unwrap();
        for (&c, &s) in cover.pixels().iter().zip(stego.pixels()) {
            let d = c as i16 - s as i16;
            assert!(d.abs() <= 1, "delta {d}");
        }
    }

    #[test]
    fn saturated_pixels_step_inward() {
        let mut cover = GrayImage::new(32, 32);
        for (i, p) in cover.pixels_mut().iter_mut().enumerate() {
            *p = if i % 2 == 0 { 0 } else { 255 };
        }
        let stego = embed_lsbm(&cover, 1.0, 5).unwrap();
        for (&c, &s) in cover.pixels().iter().zip(stego.pixels()) {
            if c == 0 {
                assert!(s == 0 || s == 1);
            } else {
                assert!(s == 255 || s == 254);
            }
        }
    }

    #[test]
    fn rate_out_of_range_rejected() {
        let cover = gen_cover(32, 32, 1);
        assert!(embed_lsbm(&cover, 1.5, 1).is_err());
        assert!(embed_lsbm(&cover, -0.1, 1).is_err());
    }

    #[test]
    fn split_ratio_and_disjointness() {
        let spec = DatasetSpec {
            n_pairs: 100,
            test_pairs: 10,
            width: 32,
            height: 32,
            rate_bpp: 0.4,
            master_seed: 5,
        };
        let data = make_dataset(&spec).unwrap();
        assert_eq!(data.split.train.len(), 80);
        assert_eq!(data.split.val.len(), 20);
        assert_eq!(data.split.test.len(), 10);
        let mut all: Vec<usize> = data
            .split
            .train
            .iter()
            .chain(&data.split.val)
            .chain(&data.split.test)
            .copied()
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 110, "splits must be pairwise disjoint");
    }

    #[test]
    fn dataset_is_deterministic_under_master_seed() {
        let spec = DatasetSpec {
            n_pairs: 12,
            test_pairs: 2,
            width: 32,
            height: 32,
            rate_bpp: 0.4,
            master_seed: 77,
        };
        let a = make_dataset(&spec).unwrap();
        let b = make_dataset(&spec).unwrap();
        assert_eq!(a.split, b.split);
        for (pa, pb) in a.pairs.iter().zip(&b.pairs) {
            assert_eq!(pa.cover, pb.cover);
            assert_eq!(pa.stego, pb.stego);
        }
    }
}
