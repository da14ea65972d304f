//! The sparse superpixel pipeline.
//!
//! The sensor side partitions the plane into `P` near-equal rectangles,
//! exposes one randomly chosen pixel per cell, and maintains only the sparse
//! set of `(seed, intensity)` pairs — never a dense frame. Off-sensor, the
//! holes are filled with the intensity of the Euclidean-nearest seed and a
//! separable Gaussian blur with radii derived from the cell extents smooths
//! the result.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::image::{IntensityImage, LabelMap};
use crate::par::{self, Exec};
use crate::report::BudgetReport;
use crate::rng;
use crate::sensor::{self, ExposureScale, SensorConfig};

/// Accounted serialized size of one superpixel entry.
pub const BYTES_PER_SUPERPIXEL: u64 = 10;

pub const SET_MAGIC: [u8; 4] = *b"SPS1";

const TAG_SEED_CELL: u64 = 0x5345_4544_4345_4C4C; // "SEEDCELL"

/// Largest supported image side for the fill kernels; keeps squared
/// distances comfortably inside u64.
const MAX_SIDE: u32 = 1 << 20;

/// Partition of the image plane into `cols x rows` near-equal rectangles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridSpec {
    width: u32,
    height: u32,
    cols: u32,
    rows: u32,
    x_bounds: Vec<u32>,
    y_bounds: Vec<u32>,
}

impl GridSpec {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cell_count(&self) -> u32 {
        self.cols * self.rows
    }

    /// Nominal (real-valued) cell width.
    pub fn cell_width(&self) -> f64 {
        self.width as f64 / self.cols as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.height as f64 / self.rows as f64
    }

    /// Pixel rectangle of cell `i` (row-major): `(x0, x1, y0, y1)` with
    /// exclusive upper bounds.
    pub fn cell_rect(&self, i: u32) -> (u32, u32, u32, u32) {
        let (col, row) = (i % self.cols, i / self.cols);
        (
            self.x_bounds[col as usize],
            self.x_bounds[col as usize + 1],
            self.y_bounds[row as usize],
            self.y_bounds[row as usize + 1],
        )
    }
}

fn spread_bounds(extent: u32, parts: u32) -> Vec<u32> {
    (0..=parts)
        .map(|i| (i as u64 * extent as u64 / parts as u64) as u32)
        .collect()
}

/// Split the plane into a grid of near-equal rectangles whose realizable
/// count `cols * rows` is close to (and never above) `target`.
///
/// Columns follow the image aspect so cells stay near-square; cell extents
/// differ by at most one pixel per dimension.
pub fn partition_grid(width: u32, height: u32, target: u32) -> Result<GridSpec> {
    if width == 0 || height == 0 {
        return Err(Error::DegenerateInput(format!("empty plane {width}x{height}")));
    }
    let pixels = width as u64 * height as u64;
    if target == 0 || target as u64 > pixels {
        return Err(Error::InvalidConfig(format!(
            "superpixel count {target} outside [1, {pixels}]"
        )));
    }
    let aspect = width as f64 / height as f64;
    let cols = ((target as f64 * aspect).sqrt().round() as u32).clamp(1, width.min(target));
    let rows = ((target as f64 / cols as f64).round() as u32)
        .clamp(1, height)
        .min(target / cols);
    Ok(GridSpec {
        width,
        height,
        cols,
        rows,
        x_bounds: spread_bounds(width, cols),
        y_bounds: spread_bounds(height, rows),
    })
}

/// One uniformly random pixel per grid cell, keyed by `(seed, cell)`.
pub fn seed_cells(grid: &GridSpec, seed: u64) -> Vec<(u32, u32)> {
    (0..grid.cell_count())
        .map(|i| {
            let (x0, x1, y0, y1) = grid.cell_rect(i);
            let dx = rng::u64_below(rng::keyed_u64(seed, [TAG_SEED_CELL, i as u64, 0]), (x1 - x0) as u64);
            let dy = rng::u64_below(rng::keyed_u64(seed, [TAG_SEED_CELL, i as u64, 1]), (y1 - y0) as u64);
            (x0 + dx as u32, y0 + dy as u32)
        })
        .collect()
}

/// The sparse on-sensor data structure: one `(seed, intensity)` entry per
/// grid cell. This is the only state the sensor side keeps.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperpixelSet {
    width: u32,
    height: u32,
    channels: usize,
    seeds: Vec<(u32, u32)>,
    cells: Vec<u32>,
    /// Entry-major: `intensities[i * channels + c]`.
    intensities: Vec<f64>,
}

impl SuperpixelSet {
    pub fn new(
        width: u32,
        height: u32,
        channels: usize,
        seeds: Vec<(u32, u32)>,
        cells: Vec<u32>,
        intensities: Vec<f64>,
    ) -> Result<Self> {
        if channels == 0 || seeds.is_empty() {
            return Err(Error::DegenerateInput("superpixel set needs >= 1 entry and channel".into()));
        }
        if cells.len() != seeds.len() || intensities.len() != seeds.len() * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} seeds, {} cells, {} intensities for {channels} channels",
                seeds.len(),
                cells.len(),
                intensities.len()
            )));
        }
        if let Some(&(x, y)) = seeds.iter().find(|&&(x, y)| x >= width || y >= height) {
            return Err(Error::OutOfBounds { x, y, width, height });
        }
        Ok(Self { width, height, channels, seeds, cells, intensities })
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn seeds(&self) -> &[(u32, u32)] {
        &self.seeds
    }

    pub fn cell(&self, i: usize) -> u32 {
        self.cells[i]
    }

    pub fn intensity(&self, i: usize) -> &[f64] {
        &self.intensities[i * self.channels..(i + 1) * self.channels]
    }

    /// Accounted byte footprint of the serialized set (header excluded).
    pub fn footprint_bytes(&self) -> u64 {
        BYTES_PER_SUPERPIXEL * self.len() as u64
    }

    /// Serialize to the `SPS1` wire format: per entry `x u16-LE | y u16-LE
    /// | R u8 | G u8 | B u8 | cell u16-LE | reserved u8` = 10 bytes. Color
    /// quantizes to 8 bits; grayscale replicates into the RGB slots.
    pub fn to_sps1_bytes(&self) -> Result<Vec<u8>> {
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::InvalidConfig(format!(
                "SPS1 stores 1- or 3-channel sets, got {}",
                self.channels
            )));
        }
        if self.width > u16::MAX as u32 + 1 || self.height > u16::MAX as u32 + 1 {
            return Err(Error::InvalidConfig(format!(
                "SPS1 coordinates are u16: {}x{} too large",
                self.width, self.height
            )));
        }
        if self.len() > u16::MAX as usize + 1 {
            return Err(Error::InvalidConfig(format!("SPS1 cell ids are u16: {} entries too many", self.len())));
        }
        let quant = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let mut out = Vec::with_capacity(16 + 10 * self.len());
        out.extend_from_slice(&SET_MAGIC);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for i in 0..self.len() {
            let (x, y) = self.seeds[i];
            let rgb = match self.channels {
                1 => [quant(self.intensity(i)[0]); 3],
                _ => {
                    let v = self.intensity(i);
                    [quant(v[0]), quant(v[1]), quant(v[2])]
                }
            };
            out.extend_from_slice(&(x as u16).to_le_bytes());
            out.extend_from_slice(&(y as u16).to_le_bytes());
            out.extend_from_slice(&rgb);
            out.extend_from_slice(&(self.cells[i] as u16).to_le_bytes());
            out.push(0);
        }
        Ok(out)
    }

    pub fn save_sps1(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_sps1_bytes()?)?;
        Ok(())
    }

    /// Parse the `SPS1` wire format. The result always carries 3 channels.
    pub fn from_sps1_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Parse {
                offset: bytes.len() as u64,
                what: "shorter than the 16-byte header".into(),
            });
        }
        if bytes[..4] != SET_MAGIC {
            return Err(Error::Parse { offset: 0, what: "bad magic, expected \"SPS1\"".into() });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let (count, width, height) = (word(4) as usize, word(8), word(12));
        let expect = 16 + 10 * count;
        if bytes.len() != expect {
            return Err(Error::Parse {
                offset: bytes.len().min(expect) as u64,
                what: format!("expected {expect} bytes for {count} entries, got {}", bytes.len()),
            });
        }
        let mut seeds = Vec::with_capacity(count);
        let mut cells = Vec::with_capacity(count);
        let mut intensities = Vec::with_capacity(count * 3);
        for i in 0..count {
            let e = &bytes[16 + 10 * i..16 + 10 * (i + 1)];
            seeds.push((
                u16::from_le_bytes([e[0], e[1]]) as u32,
                u16::from_le_bytes([e[2], e[3]]) as u32,
            ));
            intensities.extend([e[4], e[5], e[6]].map(|v| v as f64 / 255.0));
            cells.push(u16::from_le_bytes([e[7], e[8]]) as u32);
        }
        SuperpixelSet::new(width, height, 3, seeds, cells, intensities)
    }

    pub fn load_sps1(path: &Path) -> Result<Self> {
        Self::from_sps1_bytes(&fs::read(path)?)
    }
}

/// How seed intensities are measured.
pub enum MeasureMode<'a> {
    /// Copy the ground-truth pixel value (noise-free upper bound).
    Direct,
    /// Expose each seed through the single-photon sensor model.
    Spad { config: &'a SensorConfig, scale: ExposureScale, seed: u64 },
}

/// Instrumentation counters proving the sparsity contract: the sensor side
/// reads exactly one ground-truth pixel per seed and performs only
/// single-pixel Bernoulli draws.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MeasureStats {
    pub gt_pixel_reads: u64,
    pub bernoulli_draws: u64,
}

/// Measure one intensity per seed, producing the sparse set.
pub fn measure_seeds(
    image: &IntensityImage,
    seeds: &[(u32, u32)],
    mode: MeasureMode<'_>,
) -> Result<(SuperpixelSet, MeasureStats)> {
    if seeds.is_empty() {
        return Err(Error::DegenerateInput("no seeds to measure".into()));
    }
    if let Some(&(x, y)) = seeds.iter().find(|&&(x, y)| !image.in_bounds(x, y)) {
        return Err(Error::OutOfBounds { x, y, width: image.width(), height: image.height() });
    }
    if let MeasureMode::Spad { config, .. } = &mode {
        config.validate()?;
    }

    let channels = image.channels();
    let reads = AtomicU64::new(0);
    let draws = AtomicU64::new(0);
    let read_pixel = |x: u32, y: u32| -> Vec<f64> {
        reads.fetch_add(1, Ordering::Relaxed);
        (0..channels).map(|c| image.get(x, y, c)).collect()
    };

    let per_seed: Vec<Vec<f64>> = par::map_collect(Exec::Auto, seeds.len(), |i| {
        let (x, y) = seeds[i];
        let values = read_pixel(x, y);
        match &mode {
            MeasureMode::Direct => values,
            MeasureMode::Spad { config, scale, seed } => {
                let e = sensor::expose_intensities(&values, x, y, *scale, config, *seed);
                draws.fetch_add(e.draws, Ordering::Relaxed);
                e.estimates
            }
        }
    });

    let mut intensities = Vec::with_capacity(seeds.len() * channels);
    for est in per_seed {
        intensities.extend(est);
    }
    let set = SuperpixelSet::new(
        image.width(),
        image.height(),
        channels,
        seeds.to_vec(),
        (0..seeds.len() as u32).collect(),
        intensities,
    )?;
    let stats = MeasureStats {
        gt_pixel_reads: reads.into_inner(),
        bernoulli_draws: draws.into_inner(),
    };
    Ok((set, stats))
}

// ---------------------------------------------------------------------------
// Nearest-seed fill (exact Voronoi label propagation)
// ---------------------------------------------------------------------------

/// Uniform bucket grid over the seeds for exact expanding-ring queries.
struct SeedIndex<'a> {
    seeds: &'a [(u32, u32)],
    bcols: u32,
    brows: u32,
    x_bounds: Vec<u32>,
    y_bounds: Vec<u32>,
    buckets: Vec<Vec<u32>>,
    col_of: Vec<u32>,
    row_of: Vec<u32>,
}

impl<'a> SeedIndex<'a> {
    fn build(seeds: &'a [(u32, u32)], width: u32, height: u32) -> Self {
        let n = seeds.len() as f64;
        let aspect = width as f64 / height as f64;
        let bcols = ((n * aspect).sqrt().round() as u32).clamp(1, width);
        let brows = ((n / aspect).sqrt().round() as u32).clamp(1, height);
        let x_bounds = spread_bounds(width, bcols);
        let y_bounds = spread_bounds(height, brows);

        let index_of = |bounds: &[u32], extent: u32| -> Vec<u32> {
            let mut of = vec![0u32; extent as usize];
            for i in 0..bounds.len() - 1 {
                for v in bounds[i]..bounds[i + 1] {
                    of[v as usize] = i as u32;
                }
            }
            of
        };
        let col_of = index_of(&x_bounds, width);
        let row_of = index_of(&y_bounds, height);

        let mut buckets = vec![Vec::new(); bcols as usize * brows as usize];
        for (i, &(x, y)) in seeds.iter().enumerate() {
            let b = row_of[y as usize] as usize * bcols as usize + col_of[x as usize] as usize;
            buckets[b].push(i as u32);
        }
        Self { seeds, bcols, brows, x_bounds, y_bounds, buckets, col_of, row_of }
    }

    #[inline]
    fn scan_bucket(&self, bc: u32, br: u32, px: u32, py: u32, best: &mut (u64, u32)) {
        // Lower bound from the bucket's pixel rectangle; skip only when it
        // cannot beat or tie the current best (ties go to the lowest id).
        let rx0 = self.x_bounds[bc as usize];
        let rx1 = self.x_bounds[bc as usize + 1] - 1;
        let ry0 = self.y_bounds[br as usize];
        let ry1 = self.y_bounds[br as usize + 1] - 1;
        let dx = if px < rx0 { rx0 - px } else if px > rx1 { px - rx1 } else { 0 } as u64;
        let dy = if py < ry0 { ry0 - py } else if py > ry1 { py - ry1 } else { 0 } as u64;
        if dx * dx + dy * dy > best.0 {
            return;
        }
        for &id in &self.buckets[br as usize * self.bcols as usize + bc as usize] {
            let (sx, sy) = self.seeds[id as usize];
            let dx = sx.abs_diff(px) as u64;
            let dy = sy.abs_diff(py) as u64;
            let d = dx * dx + dy * dy;
            if d < best.0 || (d == best.0 && id < best.1) {
                *best = (d, id);
            }
        }
    }

    /// Exact nearest seed for a pixel, equidistant ties to the lowest id.
    fn nearest(&self, px: u32, py: u32) -> u32 {
        let bx = self.col_of[px as usize];
        let by = self.row_of[py as usize];
        let mut best = (u64::MAX, u32::MAX);
        let mut k = 0u32;
        loop {
            // Buckets at Chebyshev ring k from the home bucket.
            let x0 = bx.saturating_sub(k);
            let x1 = (bx + k).min(self.bcols - 1);
            if k == 0 {
                self.scan_bucket(bx, by, px, py, &mut best);
            } else {
                if by >= k {
                    for bc in x0..=x1 {
                        self.scan_bucket(bc, by - k, px, py, &mut best);
                    }
                }
                if by + k < self.brows {
                    for bc in x0..=x1 {
                        self.scan_bucket(bc, by + k, px, py, &mut best);
                    }
                }
                let ry0 = by.saturating_sub(k - 1);
                let ry1 = (by + k - 1).min(self.brows - 1);
                if bx >= k {
                    for br in ry0..=ry1 {
                        self.scan_bucket(bx - k, br, px, py, &mut best);
                    }
                }
                if bx + k < self.bcols {
                    for br in ry0..=ry1 {
                        self.scan_bucket(bx + k, br, px, py, &mut best);
                    }
                }
            }

            // Everything not yet visited lies outside the pixel rectangle
            // spanned by rings <= k; stop once even a tie is impossible.
            let covered_left = bx <= k;
            let covered_right = bx + k >= self.bcols - 1;
            let covered_top = by <= k;
            let covered_bottom = by + k >= self.brows - 1;
            if covered_left && covered_right && covered_top && covered_bottom {
                return best.1;
            }
            let mut outside = u64::MAX;
            if !covered_left {
                let margin = (px - (self.x_bounds[(bx - k) as usize] - 1)) as u64;
                outside = outside.min(margin * margin);
            }
            if !covered_right {
                let margin = (self.x_bounds[(bx + k + 1) as usize] - px) as u64;
                outside = outside.min(margin * margin);
            }
            if !covered_top {
                let margin = (py - (self.y_bounds[(by - k) as usize] - 1)) as u64;
                outside = outside.min(margin * margin);
            }
            if !covered_bottom {
                let margin = (self.y_bounds[(by + k + 1) as usize] - py) as u64;
                outside = outside.min(margin * margin);
            }
            if outside > best.0 {
                return best.1;
            }
            k += 1;
        }
    }
}

fn voronoi_impl(seeds: &[(u32, u32)], width: u32, height: u32, exec: Exec) -> Result<LabelMap> {
    if seeds.is_empty() {
        return Err(Error::DegenerateInput("no seeds".into()));
    }
    if width == 0 || height == 0 || width > MAX_SIDE || height > MAX_SIDE {
        return Err(Error::InvalidImage(format!("unsupported plane size {width}x{height}")));
    }
    if let Some(&(x, y)) = seeds.iter().find(|&&(x, y)| x >= width || y >= height) {
        return Err(Error::OutOfBounds { x, y, width, height });
    }
    let index = SeedIndex::build(seeds, width, height);
    let mut labels = vec![0u32; width as usize * height as usize];
    par::for_each_chunk_mut(exec, &mut labels, width as usize, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = index.nearest(x as u32, y as u32);
        }
    });
    LabelMap::from_labels(width, height, labels)
}

/// Label every pixel with the id of its Euclidean-nearest seed; equidistant
/// ties go to the lowest id. Exact (matches a brute-force scan bit for bit).
pub fn voronoi_labels(seeds: &[(u32, u32)], width: u32, height: u32) -> Result<LabelMap> {
    voronoi_impl(seeds, width, height, Exec::Auto)
}

/// Sequential reference path for [`voronoi_labels`].
pub fn voronoi_labels_seq(seeds: &[(u32, u32)], width: u32, height: u32) -> Result<LabelMap> {
    voronoi_impl(seeds, width, height, Exec::Seq)
}

fn fill_impl(
    set: &SuperpixelSet,
    width: u32,
    height: u32,
    exec: Exec,
) -> Result<(LabelMap, IntensityImage)> {
    let labels = voronoi_impl(set.seeds(), width, height, exec)?;
    let channels = set.channels();
    let m = width as usize * height as usize;
    let mut data = vec![0.0; m * channels];
    let label_slice = labels.labels();
    par::for_each_chunk_mut(exec, &mut data, m, |c, plane| {
        for (out, &l) in plane.iter_mut().zip(label_slice) {
            *out = set.intensity(l as usize)[c];
        }
    });
    Ok((labels, IntensityImage::from_planar_unchecked(width, height, channels, data)))
}

/// Fill the holes: every pixel takes the intensity of its nearest seed,
/// yielding the label map and the rendered (pre-blur) image.
pub fn nearest_fill(set: &SuperpixelSet, width: u32, height: u32) -> Result<(LabelMap, IntensityImage)> {
    fill_impl(set, width, height, Exec::Auto)
}

/// Sequential reference path for [`nearest_fill`].
pub fn nearest_fill_seq(
    set: &SuperpixelSet,
    width: u32,
    height: u32,
) -> Result<(LabelMap, IntensityImage)> {
    fill_impl(set, width, height, Exec::Seq)
}

// ---------------------------------------------------------------------------
// Derived Gaussian blur
// ---------------------------------------------------------------------------

/// Standard deviation such that a 255-level Gaussian first drops below one
/// level exactly at offset `radius + 1`.
pub fn radius_to_sigma(radius: u32) -> f64 {
    (radius as f64 + 1.0) / (2.0 * 255f64.ln()).sqrt()
}

/// Separable Gaussian kernel with per-axis radii and the derived sigmas.
#[derive(Clone, Debug, PartialEq)]
pub struct BlurKernel {
    pub radius_x: u32,
    pub radius_y: u32,
    pub sigma_x: f64,
    pub sigma_y: f64,
    taps_x: Vec<f64>,
    taps_y: Vec<f64>,
}

fn kernel_taps(radius: u32, sigma: f64) -> Vec<f64> {
    // Taps at integer offsets in [-(r+1), r+1], normalized to unit sum.
    let half = radius as i64 + 1;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

impl BlurKernel {
    pub fn from_radii(radius_x: u32, radius_y: u32) -> Self {
        let sigma_x = radius_to_sigma(radius_x);
        let sigma_y = radius_to_sigma(radius_y);
        Self {
            radius_x,
            radius_y,
            sigma_x,
            sigma_y,
            taps_x: kernel_taps(radius_x, sigma_x),
            taps_y: kernel_taps(radius_y, sigma_y),
        }
    }

    pub fn taps_x(&self) -> &[f64] {
        &self.taps_x
    }

    pub fn taps_y(&self) -> &[f64] {
        &self.taps_y
    }
}

/// Blur radii equal to half the cell extents (rounded half-up), sigma from
/// the 255-level relation.
pub fn derive_blur_kernel(grid: &GridSpec) -> BlurKernel {
    BlurKernel::from_radii(
        (grid.cell_width() / 2.0).round() as u32,
        (grid.cell_height() / 2.0).round() as u32,
    )
}

fn blur_impl(image: &IntensityImage, kernel: &BlurKernel, exec: Exec) -> IntensityImage {
    let (width, height) = (image.width() as usize, image.height() as usize);
    let m = width * height;
    let half_x = kernel.taps_x.len() as i64 / 2;
    let half_y = kernel.taps_y.len() as i64 / 2;

    let mut out = vec![0.0; m * image.channels()];
    for c in 0..image.channels() {
        let src = image.channel(c);

        // Horizontal pass, clamp-to-edge.
        let mut tmp = vec![0.0; m];
        par::for_each_chunk_mut(exec, &mut tmp, width, |y, row| {
            let src_row = &src[y * width..(y + 1) * width];
            for (x, out) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (k, &t) in kernel.taps_x.iter().enumerate() {
                    let sx = (x as i64 + k as i64 - half_x).clamp(0, width as i64 - 1);
                    acc += t * src_row[sx as usize];
                }
                *out = acc;
            }
        });

        // Vertical pass.
        let plane = &mut out[c * m..(c + 1) * m];
        par::for_each_chunk_mut(exec, plane, width, |y, row| {
            for (x, out) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (k, &t) in kernel.taps_y.iter().enumerate() {
                    let sy = (y as i64 + k as i64 - half_y).clamp(0, height as i64 - 1);
                    acc += t * tmp[sy as usize * width + x];
                }
                *out = acc;
            }
        });
    }
    IntensityImage::from_planar_unchecked(image.width(), image.height(), image.channels(), out)
}

/// Two separable 1-D passes (x then y) with replicated borders. Output
/// dimensions are unchanged and each axis kernel sums to one.
pub fn gaussian_blur(image: &IntensityImage, kernel: &BlurKernel) -> IntensityImage {
    blur_impl(image, kernel, Exec::Auto)
}

/// Sequential reference path for [`gaussian_blur`].
pub fn gaussian_blur_seq(image: &IntensityImage, kernel: &BlurKernel) -> IntensityImage {
    blur_impl(image, kernel, Exec::Seq)
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

/// Everything one pipeline run produces.
pub struct SupercamRun {
    /// Nearest-seed fill before blur.
    pub raw: IntensityImage,
    /// Final output after the derived Gaussian blur.
    pub blurred: IntensityImage,
    pub labels: LabelMap,
    pub set: SuperpixelSet,
    pub grid: GridSpec,
    pub kernel: BlurKernel,
    pub report: BudgetReport,
    pub stats: MeasureStats,
}

/// Run the whole pipeline under a byte budget: `P = budget / 10` seeds
/// (capped at the realizable grid), measured either directly or through the
/// sensor model, then fill and blur. No dense measurement buffer is ever
/// allocated on the sensor side — only the `P`-entry sparse set.
pub fn run_supercam(
    image: &IntensityImage,
    budget_bytes: u64,
    sensor_config: Option<&SensorConfig>,
    seed: u64,
) -> Result<SupercamRun> {
    if budget_bytes < BYTES_PER_SUPERPIXEL {
        return Err(Error::BudgetTooSmall {
            budget: budget_bytes,
            why: format!("needs at least {BYTES_PER_SUPERPIXEL} bytes for one superpixel"),
        });
    }
    let target = (budget_bytes / BYTES_PER_SUPERPIXEL)
        .min(image.pixel_count() as u64)
        .min(u32::MAX as u64) as u32;
    let grid = partition_grid(image.width(), image.height(), target)?;
    let seeds = seed_cells(&grid, seed);
    let mode = match sensor_config {
        None => MeasureMode::Direct,
        Some(config) => MeasureMode::Spad {
            config,
            scale: sensor::compute_exposure_scale(image, config)?,
            seed,
        },
    };
    let (set, stats) = measure_seeds(image, &seeds, mode)?;
    let (labels, raw) = nearest_fill(&set, image.width(), image.height())?;
    let kernel = derive_blur_kernel(&grid);
    let blurred = gaussian_blur(&raw, &kernel);
    let report = BudgetReport {
        budget_bytes,
        image_bytes: 0,
        state_bytes: budget_bytes,
        realized_units: set.len() as u32,
        scaled_width: image.width(),
        scaled_height: image.height(),
        footprint_bytes: set.footprint_bytes(),
    };
    Ok(SupercamRun { raw, blurred, labels, set, grid, kernel, report, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    // Brute-force nearest-seed oracle with the tie rule: lexicographic
    // minimum of (squared distance, id). Independent of the ring search.
    fn brute_force_labels(seeds: &[(u32, u32)], width: u32, height: u32) -> Vec<u32> {
        let mut out = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                let mut best = (u64::MAX, u32::MAX);
                for (id, &(sx, sy)) in seeds.iter().enumerate() {
                    let dx = sx.abs_diff(x) as u64;
                    let dy = sy.abs_diff(y) as u64;
                    let d = dx * dx + dy * dy;
                    if (d, id as u32) < best {
                        best = (d, id as u32);
                    }
                }
                out.push(best.1);
            }
        }
        out
    }

    #[test]
    fn partition_examples() {
        // 6x4 with P = 6: a 3x2 grid of 2x2 cells.
        let g = partition_grid(6, 4, 6).unwrap();
        assert_eq!((g.cols(), g.rows()), (3, 2));
        for i in 0..6 {
            let (x0, x1, y0, y1) = g.cell_rect(i);
            assert_eq!((x1 - x0, y1 - y0), (2, 2));
        }
        // P = 1: a single cell covering the image.
        let g = partition_grid(7, 5, 1).unwrap();
        assert_eq!(g.cell_count(), 1);
        assert_eq!(g.cell_rect(0), (0, 7, 0, 5));
    }

    #[test]
    fn partition_tiles_exactly_and_never_exceeds_target() {
        let cases = [
            (6u32, 4u32, 6u32),
            (321, 481, 6800),
            (321, 481, 20500),
            (321, 481, 61500),
            (13, 29, 7),
            (100, 1, 50),
            (1, 100, 50),
            (17, 17, 17 * 17),
        ];
        for (w, h, p) in cases {
            let g = partition_grid(w, h, p).unwrap();
            assert!(g.cell_count() <= p, "{w}x{h} target {p} realized {}", g.cell_count());
            // coverage oracle: every pixel is in exactly one cell
            let mut hits = vec![0u32; (w * h) as usize];
            for i in 0..g.cell_count() {
                let (x0, x1, y0, y1) = g.cell_rect(i);
                assert!(x1 > x0 && y1 > y0, "empty cell in {w}x{h}/{p}");
                for y in y0..y1 {
                    for x in x0..x1 {
                        hits[(y * w + x) as usize] += 1;
                    }
                }
            }
            assert!(hits.iter().all(|&c| c == 1), "tiling broken for {w}x{h}/{p}");
        }
        // budget-sized instance keeps a realizable count near the target
        let g = partition_grid(321, 481, 6800).unwrap();
        assert!(g.cell_count() >= 6600, "realized {}", g.cell_count());
    }

    #[test]
    fn partition_cell_extents_differ_by_at_most_one() {
        let g = partition_grid(321, 481, 6800).unwrap();
        let mut widths: Vec<u32> = (0..g.cols())
            .map(|c| g.x_bounds[c as usize + 1] - g.x_bounds[c as usize])
            .collect();
        widths.sort_unstable();
        assert!(widths[widths.len() - 1] - widths[0] <= 1);
    }

    #[test]
    fn partition_rejects_bad_counts() {
        assert!(partition_grid(4, 4, 0).is_err());
        assert!(partition_grid(4, 4, 17).is_err());
    }

    #[test]
    fn seeding_is_deterministic_and_in_cell() {
        let g = partition_grid(33, 21, 40).unwrap();
        let a = seed_cells(&g, 5);
        assert_eq!(a, seed_cells(&g, 5));
        assert_ne!(a, seed_cells(&g, 6));
        for (i, &(x, y)) in a.iter().enumerate() {
            let (x0, x1, y0, y1) = g.cell_rect(i as u32);
            assert!(x >= x0 && x < x1 && y >= y0 && y < y1);
        }
    }

    #[test]
    fn unit_cells_force_the_seed() {
        let g = partition_grid(4, 4, 16).unwrap();
        let seeds = seed_cells(&g, 123);
        for (i, &(x, y)) in seeds.iter().enumerate() {
            let (x0, _, y0, _) = g.cell_rect(i as u32);
            assert_eq!((x, y), (x0, y0));
        }
    }

    #[test]
    fn seed_positions_are_uniform_within_a_cell() {
        // 4x4 cell sampled over many seeds: per-pixel frequency within
        // 3 sigma of 1/16.
        let g = partition_grid(4, 4, 1).unwrap();
        let n = 100_000u32;
        let mut counts = [[0u32; 4]; 4];
        for seed in 0..n {
            let (x, y) = seed_cells(&g, seed as u64)[0];
            counts[y as usize][x as usize] += 1;
        }
        let p = 1.0 / 16.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for row in counts {
            for c in row {
                assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "count {c}");
            }
        }
    }

    #[test]
    fn direct_measurement_copies_ground_truth() {
        let img = IntensityImage::constant(10, 8, 3, 0.42).unwrap();
        let g = partition_grid(10, 8, 12).unwrap();
        let seeds = seed_cells(&g, 0);
        let (set, stats) = measure_seeds(&img, &seeds, MeasureMode::Direct).unwrap();
        assert_eq!(stats.gt_pixel_reads, set.len() as u64);
        assert_eq!(stats.bernoulli_draws, 0);
        for i in 0..set.len() {
            assert!(set.intensity(i).iter().all(|&v| v == 0.42));
        }
    }

    #[test]
    fn spad_measurement_is_unbiased_within_tolerance() {
        // F = 4096, p = 2, constant image: mean seed estimate within 5%.
        let img = IntensityImage::constant(64, 64, 1, 0.5).unwrap();
        let config = SensorConfig { frames_per_exposure: 4096, mean_photons_per_pixel: 2.0, ..Default::default() };
        let scale = sensor::compute_exposure_scale(&img, &config).unwrap();
        let g = partition_grid(64, 64, 1024).unwrap();
        let seeds = seed_cells(&g, 1);
        let (set, stats) =
            measure_seeds(&img, &seeds, MeasureMode::Spad { config: &config, scale, seed: 1 }).unwrap();
        assert_eq!(stats.gt_pixel_reads, 1024);
        assert_eq!(stats.bernoulli_draws, 1024 * 4096);
        let mean: f64 = (0..set.len()).map(|i| set.intensity(i)[0]).sum::<f64>() / set.len() as f64;
        assert!((mean / 0.5 - 1.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn footprint_is_ten_bytes_per_superpixel() {
        let seeds: Vec<(u32, u32)> = (0..6800u32).map(|i| (i % 321, i / 321)).collect();
        let cells: Vec<u32> = (0..6800).collect();
        let set =
            SuperpixelSet::new(321, 481, 1, seeds, cells, vec![0.5; 6800]).unwrap();
        assert_eq!(set.footprint_bytes(), 68_000);
        let bytes = set.to_sps1_bytes().unwrap();
        assert_eq!(bytes.len() as u64 - 16, set.footprint_bytes());
    }

    #[test]
    fn sps1_round_trip_quantizes_intensities() {
        let set = SuperpixelSet::new(
            8,
            8,
            3,
            vec![(1, 2), (5, 7)],
            vec![0, 1],
            vec![0.1, 0.5, 0.9, 0.0, 1.0, 0.25],
        )
        .unwrap();
        let back = SuperpixelSet::from_sps1_bytes(&set.to_sps1_bytes().unwrap()).unwrap();
        assert_eq!(back.seeds(), set.seeds());
        assert_eq!(back.cell(1), 1);
        for i in 0..set.len() {
            for c in 0..3 {
                assert!((back.intensity(i)[c] - set.intensity(i)[c]).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn sps1_rejects_corrupt_bytes() {
        let set =
            SuperpixelSet::new(4, 4, 1, vec![(0, 0)], vec![0], vec![0.3]).unwrap();
        let mut bytes = set.to_sps1_bytes().unwrap();
        bytes.pop();
        assert!(matches!(
            SuperpixelSet::from_sps1_bytes(&bytes),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            SuperpixelSet::from_sps1_bytes(b"XXXX"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn single_seed_fills_whole_image() {
        let set =
            SuperpixelSet::new(9, 6, 1, vec![(4, 3)], vec![0], vec![0.7]).unwrap();
        let (labels, filled) = nearest_fill(&set, 9, 6).unwrap();
        assert!(labels.labels().iter().all(|&l| l == 0));
        assert!(filled.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn fill_matches_brute_force_on_small_instance() {
        let seeds = vec![(1, 1), (6, 2), (2, 6), (7, 7)];
        let labels = voronoi_labels(&seeds, 8, 8).unwrap();
        assert_eq!(labels.labels(), brute_force_labels(&seeds, 8, 8).as_slice());
    }

    #[test]
    fn fill_matches_brute_force_on_random_instances() {
        let mut rng = SplitMix64::new(2024);
        for _ in 0..120 {
            let w = 1 + rng.below(32) as u32;
            let h = 1 + rng.below(32) as u32;
            let n = 1 + rng.below(64) as usize;
            let seeds: Vec<(u32, u32)> = (0..n)
                .map(|_| (rng.below(w as u64) as u32, rng.below(h as u64) as u32))
                .collect();
            let fast = voronoi_labels(&seeds, w, h).unwrap();
            let slow = brute_force_labels(&seeds, w, h);
            assert_eq!(fast.labels(), slow.as_slice(), "{w}x{h} seeds {seeds:?}");
            let seq = voronoi_labels_seq(&seeds, w, h).unwrap();
            assert_eq!(fast.labels(), seq.labels());
        }
    }

    #[test]
    fn lattice_seeds_reproduce_their_grid_cells() {
        // Seeds at the centers of a 3x3 lattice of 3x3 cells: the Voronoi
        // cells are exactly the generating rectangles.
        let g = partition_grid(9, 9, 9).unwrap();
        let seeds: Vec<(u32, u32)> = (0..9)
            .map(|i| {
                let (x0, x1, y0, y1) = g.cell_rect(i);
                ((x0 + x1) / 2, (y0 + y1) / 2)
            })
            .collect();
        let labels = voronoi_labels(&seeds, 9, 9).unwrap();
        for y in 0..9 {
            for x in 0..9 {
                let expected = (y / 3) * 3 + x / 3;
                assert_eq!(labels.get(x, y), expected);
            }
        }
    }

    #[test]
    fn duplicate_seeds_resolve_to_lowest_id() {
        let seeds = vec![(3, 3), (3, 3), (0, 0)];
        let labels = voronoi_labels(&seeds, 6, 6).unwrap();
        assert_eq!(labels.get(3, 3), 0);
        assert_eq!(labels.labels(), brute_force_labels(&seeds, 6, 6).as_slice());
    }

    #[test]
    fn sigma_satisfies_the_255_level_identity() {
        for r in 0..=64u32 {
            let sigma = radius_to_sigma(r);
            let level = 255.0 * (-((r as f64 + 1.0).powi(2)) / (2.0 * sigma * sigma)).exp();
            assert!((level - 1.0).abs() < 1e-12, "r = {r}: level {level}");
        }
        // r = 4: sigma = 5 / sqrt(2 ln 255)
        let sigma = radius_to_sigma(4);
        assert!((sigma - 5.0 / (2.0 * 255f64.ln()).sqrt()).abs() < 1e-15);
        assert!((sigma - 1.5019).abs() < 1e-3);
    }

    #[test]
    fn zero_radius_kernel_is_nearly_identity() {
        let k = BlurKernel::from_radii(0, 0);
        assert_eq!(k.taps_x().len(), 3);
        assert!((k.taps_x().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(k.taps_x()[1] > 0.99);
        let img = IntensityImage::from_fn(5, 5, 1, |x, y, _| (x + y) as f64 * 0.05).unwrap();
        let blurred = gaussian_blur(&img, &k);
        for (a, b) in img.data().iter().zip(blurred.data()) {
            assert!((a - b).abs() < 0.01);
        }
    }

    #[test]
    fn derived_radii_are_half_the_cell_extent() {
        let g = partition_grid(321, 481, 6800).unwrap();
        let k = derive_blur_kernel(&g);
        assert_eq!(k.radius_x, (g.cell_width() / 2.0).round() as u32);
        assert_eq!(k.radius_y, (g.cell_height() / 2.0).round() as u32);
    }

    #[test]
    fn blur_preserves_constants() {
        let img = IntensityImage::constant(20, 15, 3, 0.37).unwrap();
        let blurred = gaussian_blur(&img, &BlurKernel::from_radii(3, 5));
        for &v in blurred.data() {
            assert!((v - 0.37).abs() < 1e-9);
        }
    }

    #[test]
    fn separable_blur_matches_dense_2d_convolution() {
        let mut rng = SplitMix64::new(7);
        let img = IntensityImage::from_fn(16, 16, 1, |_, _, _| rng.next_f64()).unwrap();
        let kernel = BlurKernel::from_radii(2, 3);
        let blurred = gaussian_blur(&img, &kernel);
        let seq = gaussian_blur_seq(&img, &kernel);
        assert_eq!(blurred, seq);

        let hx = kernel.taps_x().len() as i64 / 2;
        let hy = kernel.taps_y().len() as i64 / 2;
        for y in 0..16i64 {
            for x in 0..16i64 {
                let mut acc = 0.0;
                for (j, &ty) in kernel.taps_y().iter().enumerate() {
                    for (i, &tx) in kernel.taps_x().iter().enumerate() {
                        let sx = (x + i as i64 - hx).clamp(0, 15) as u32;
                        let sy = (y + j as i64 - hy).clamp(0, 15) as u32;
                        acc += tx * ty * img.get(sx, sy, 0);
                    }
                }
                assert!((acc - blurred.get(x as u32, y as u32, 0)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn impulse_response_is_the_normalized_kernel() {
        let mut img = IntensityImage::new(17, 17, 1).unwrap();
        img.set(8, 8, 0, 1.0);
        let kernel = BlurKernel::from_radii(2, 2);
        let blurred = gaussian_blur(&img, &kernel);
        for (j, &ty) in kernel.taps_y().iter().enumerate() {
            for (i, &tx) in kernel.taps_x().iter().enumerate() {
                let x = (8 + i - 3) as u32;
                let y = (8 + j - 3) as u32;
                assert!((blurred.get(x, y, 0) - tx * ty).abs() < 1e-12);
            }
        }
        // symmetry about the impulse
        assert_eq!(blurred.get(5, 8, 0), blurred.get(11, 8, 0));
        assert_eq!(blurred.get(8, 5, 0), blurred.get(8, 11, 0));
    }

    #[test]
    fn full_run_respects_the_budget_and_sparsity_contract() {
        let img = IntensityImage::from_fn(60, 45, 3, |x, y, c| {
            0.1 + 0.8 * ((x / 10 + y / 10 + c as u32) % 2) as f64
        })
        .unwrap();
        let run = run_supercam(&img, 680, None, 3).unwrap();
        assert!(run.report.footprint_bytes <= 680);
        assert_eq!(run.report.realized_units as usize, run.set.len());
        assert_eq!(run.stats.gt_pixel_reads, run.set.len() as u64);
        assert_eq!(run.labels.segment_count() as usize, run.set.len());

        let config = SensorConfig { frames_per_exposure: 64, ..Default::default() };
        let run = run_supercam(&img, 680, Some(&config), 3).unwrap();
        assert_eq!(run.stats.gt_pixel_reads, run.set.len() as u64);
        assert_eq!(run.stats.bernoulli_draws, run.set.len() as u64 * 64 * 3);
    }

    #[test]
    fn constant_image_direct_run_stays_constant() {
        let img = IntensityImage::constant(32, 24, 1, 0.6).unwrap();
        let run = run_supercam(&img, 500, None, 9).unwrap();
        for &v in run.blurred.data() {
            assert!((v - 0.6).abs() < 1e-9);
        }
    }

    #[test]
    fn tiny_budget_is_rejected() {
        let img = IntensityImage::constant(4, 4, 1, 0.5).unwrap();
        assert!(matches!(
            run_supercam(&img, 9, None, 0),
            Err(Error::BudgetTooSmall { .. })
        ));
    }
}
