//! `steg export-filters` / `steg export-features`: learned kernels and
//! abs-layer feature maps as full-precision CSV and normalized PGM heatmaps.

use anyhow::{Context, Result};
use std::path::{Path, PathBuf};
use stegcore::pgm::{read_pgm, write_pgm, GrayImage, PgmFormat};
use stegcore::residual::residual_forward;
use stegcore::stegnet::abs_feature_maps;
use stegcore::tensor::{Real, Tensor4};
use stegcore::ModelState;

/// Min-max normalize values to 8 bits. A flat map exports as all zeros.
pub fn heatmap(values: &[Real], width: usize, height: usize) -> GrayImage {
    let min = values.iter().copied().fold(Real::INFINITY, Real::min);
    let max = values.iter().copied().fold(Real::NEG_INFINITY, Real::max);
    let mut img = GrayImage::new(width, height);
    if max > min {
        let scale = 255.0 / (max - min);
        for (p, &v) in img.pixels_mut().iter_mut().zip(values) {
            *p = ((v - min) * scale).round().clamp(0.0, 255.0) as u8;
        }
    }
    img
}

/// Full-precision CSV (17 significant digits per value).
pub fn write_matrix_csv(path: &Path, values: &[Real], rows: usize, cols: usize) -> Result<()> {
    assert_eq!(values.len(), rows * cols);
    let mut text = String::new();
    for r in 0..rows {
        let row: Vec<String> = (0..cols)
            .map(|c| format!("{:.16e}", values[r * cols + c]))
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Parse a CSV written by [`write_matrix_csv`].
pub fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<Real>>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(|line| {
            line.split(',')
                .map(|v| {
                    v.parse::<Real>()
                        .with_context(|| format!("bad value '{v}' in {}", path.display()))
                })
                .collect()
        })
        .collect()
}

/// The residual filter a kernel realizes: `delta - k` (the map applied to
/// the input when the residual is formed by subtraction).
fn effective_residual_filter(weights: &[Real], side: usize) -> Vec<Real> {
    let center = (side / 2) * side + side / 2;
    weights
        .iter()
        .enumerate()
        .map(|(i, &w)| if i == center { 1.0 - w } else { -w })
        .collect()
}

/// Export both kernels raw and as effective residual filters, CSV + PGM.
pub fn export_filters(model: &ModelState, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let mut written = Vec::new();
    let kernels = [
        ("k5", &model.residual.k5.weights, 5usize),
        ("k3", &model.residual.k3.weights, 3usize),
    ];
    for (name, weights, side) in kernels {
        let raw_csv = out_dir.join(format!("filter_{name}.csv"));
        write_matrix_csv(&raw_csv, weights, side, side)?;
        let raw_pgm = out_dir.join(format!("filter_{name}.pgm"));
        write_pgm(&raw_pgm, &heatmap(weights, side, side), PgmFormat::Binary)?;

        let effective = effective_residual_filter(weights, side);
        let eff_csv = out_dir.join(format!("filter_{name}_effective.csv"));
        write_matrix_csv(&eff_csv, &effective, side, side)?;
        let eff_pgm = out_dir.join(format!("filter_{name}_effective.pgm"));
        write_pgm(&eff_pgm, &heatmap(&effective, side, side), PgmFormat::Binary)?;

        written.extend([raw_csv, raw_pgm, eff_csv, eff_pgm]);
    }
    Ok(written)
}

/// Abs-layer feature maps for one normalized image plane.
pub fn export_features_from_plane(
    model: &ModelState,
    plane: &[Real],
    height: usize,
    width: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let x = Tensor4::from_vec(1, 1, height, width, plane.to_vec())?;
    let res = residual_forward(&x, &model.residual)?;
    let stack = Tensor4::stack_channels(&[&res.res5, &res.res3])?;
    let maps = abs_feature_maps(&stack, &model.classifier)?;

    let mut written = Vec::new();
    for ch in 0..maps.c() {
        let path = out_dir.join(format!("feature_ch{ch}.pgm"));
        write_pgm(
            &path,
            &heatmap(maps.plane(0, ch), maps.w(), maps.h()),
            PgmFormat::Binary,
        )?;
        written.push(path);
    }
    Ok(written)
}

/// Abs-layer feature maps for an image on disk.
pub fn export_features(model: &ModelState, image: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let img = read_pgm(image)?;
    let plane: Vec<Real> = img.pixels().iter().map(|&p| p as Real / 255.0).collect();
    export_features_from_plane(model, &plane, img.height(), img.width(), out_dir)
}
