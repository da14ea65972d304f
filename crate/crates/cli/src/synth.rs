//! Synthetic piecewise-constant corpora with exact ground truth.
//!
//! Scenes are random Voronoi partitions (5-30 regions by default) painted
//! with distinct colors, optionally perturbed by a spatially correlated
//! texture field. Labels are exact by construction, so a generated pair
//! self-evaluates to zero error.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use supercam_core::image::{IntensityImage, LabelMap};
use supercam_core::rng::SplitMix64;
use supercam_core::supercam::voronoi_labels;

use crate::io;

#[derive(Clone, Debug)]
pub struct SynthParams {
    pub width: u32,
    pub height: u32,
    pub min_regions: u32,
    pub max_regions: u32,
    /// Peak amplitude of the texture field added to every channel
    /// (0 disables).
    pub noise_amplitude: f64,
    /// Correlation length of the texture field in pixels.
    pub noise_scale: u32,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            width: 321,
            height: 481,
            min_regions: 5,
            max_regions: 30,
            noise_amplitude: 0.15,
            noise_scale: 3,
        }
    }
}

/// Separable box blur used to correlate the texture field.
fn box_blur(values: &mut Vec<f64>, width: usize, height: usize, radius: usize) {
    if radius == 0 {
        return;
    }
    let mut tmp = vec![0.0; values.len()];
    // horizontal
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        for x in 0..width {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(width - 1);
            tmp[y * width + x] = row[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
        }
    }
    // vertical
    for y in 0..height {
        for x in 0..width {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius).min(height - 1);
            let mut acc = 0.0;
            for sy in lo..=hi {
                acc += tmp[sy * width + x];
            }
            values[y * width + x] = acc / (hi - lo + 1) as f64;
        }
    }
}

/// Smooth noise field normalized to peak magnitude 1.
fn texture_field(width: u32, height: u32, scale: u32, rng: &mut SplitMix64) -> Vec<f64> {
    let (w, h) = (width as usize, height as usize);
    let mut field: Vec<f64> = (0..w * h).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
    for _ in 0..3 {
        box_blur(&mut field, w, h, scale as usize);
    }
    let peak = field.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut field {
            *v /= peak;
        }
    }
    field
}

/// Paint a Voronoi partition of the given sites with the given colors, plus
/// the optional texture field. Returns the image and its exact label map.
pub fn voronoi_scene(
    width: u32,
    height: u32,
    sites: &[(u32, u32)],
    colors: &[[f64; 3]],
    noise_amplitude: f64,
    noise_scale: u32,
    seed: u64,
) -> Result<(IntensityImage, LabelMap)> {
    ensure!(sites.len() == colors.len(), "one color per site");
    let labels = voronoi_labels(sites, width, height)?;
    let m = (width * height) as usize;
    let mut data = vec![0.0; m * 3];
    for (i, &l) in labels.labels().iter().enumerate() {
        for c in 0..3 {
            data[c * m + i] = colors[l as usize][c];
        }
    }
    if noise_amplitude > 0.0 {
        let mut rng = SplitMix64::new(seed ^ 0x5445_5854); // "TEXT"
        let field = texture_field(width, height, noise_scale, &mut rng);
        for c in 0..3 {
            for i in 0..m {
                data[c * m + i] = (data[c * m + i] + noise_amplitude * field[i]).clamp(0.0, 1.0);
            }
        }
    }
    Ok((IntensityImage::from_planar(width, height, 3, data)?, labels))
}

/// Generate one scene: region count uniform in `[min_regions, max_regions]`,
/// distinct random sites, colors with a minimum mutual separation.
pub fn synth_scene(params: &SynthParams, seed: u64) -> Result<(IntensityImage, LabelMap)> {
    ensure!(params.min_regions >= 1 && params.min_regions <= params.max_regions, "bad region bounds");
    let mut rng = SplitMix64::new(seed);
    let span = (params.max_regions - params.min_regions + 1) as u64;
    let k = params.min_regions + rng.below(span) as u32;

    let mut sites: Vec<(u32, u32)> = Vec::with_capacity(k as usize);
    while sites.len() < k as usize {
        let p = (rng.below(params.width as u64) as u32, rng.below(params.height as u64) as u32);
        if !sites.contains(&p) {
            sites.push(p);
        }
    }

    let mut colors: Vec<[f64; 3]> = Vec::with_capacity(k as usize);
    while colors.len() < k as usize {
        let c = [
            0.05 + 0.9 * rng.next_f64(),
            0.05 + 0.9 * rng.next_f64(),
            0.05 + 0.9 * rng.next_f64(),
        ];
        let distinct = colors.iter().all(|o| {
            let d2: f64 = (0..3).map(|i| (c[i] - o[i]).powi(2)).sum();
            d2 >= 0.25 * 0.25
        });
        if distinct || colors.len() > 512 {
            colors.push(c);
        }
    }

    voronoi_scene(
        params.width,
        params.height,
        &sites,
        &colors,
        params.noise_amplitude,
        params.noise_scale,
        rng.next_u64(),
    )
}

/// Generate `count` (image, ground-truth) pairs under `out_dir` as
/// `img_###.png` + `img_###_gt.pgm`. Deterministic per seed.
pub fn synth_corpus(
    out_dir: &Path,
    count: u32,
    seed: u64,
    params: &SynthParams,
) -> Result<Vec<(PathBuf, PathBuf)>> {
    ensure!(count >= 1, "corpus needs at least one image");
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating corpus directory {}", out_dir.display()))?;
    let mut rng = SplitMix64::new(seed);
    let mut pairs = Vec::with_capacity(count as usize);
    for i in 0..count {
        let scene_seed = rng.next_u64();
        let (img, labels) = synth_scene(params, scene_seed)?;
        let img_path = out_dir.join(format!("img_{i:03}.png"));
        let gt_path = out_dir.join(format!("img_{i:03}_gt.pgm"));
        io::save_png(&img_path, &img)?;
        io::save_label_map(&gt_path, &labels)?;
        pairs.push((img_path, gt_path));
    }
    Ok(pairs)
}
