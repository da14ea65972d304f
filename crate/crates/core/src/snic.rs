//! Memory-restricted SNIC baseline.
//!
//! An off-the-shelf SNIC needs the whole image resident next to its
//! clustering state, so the comparison pipeline first splits the byte budget
//! between a downsampled copy of the image and the per-cluster centroid
//! state (default 5:1 in favour of the image), runs priority-queue region
//! growing on the small image, paints segment means, and upsamples back to
//! source resolution — optionally followed by the same blur kernel the
//! sparse pipeline derives for this budget.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::color::srgb_to_lab;
use crate::error::{Error, Result};
use crate::image::{IntensityImage, LabelMap};
use crate::report::BudgetReport;
use crate::supercam::{self, BYTES_PER_SUPERPIXEL};

/// Knobs of the restricted pipeline, all with the defaults used throughout.
#[derive(Clone, Debug, PartialEq)]
pub struct SnicParams {
    /// Relative weight of the spatial term in the clustering distance.
    pub compactness: f64,
    /// image : superpixel byte ratio of the budget split.
    pub ratio: u64,
    /// Centroid state priced per cluster: five running means at 4 bytes.
    pub bytes_per_superpixel: u64,
    /// Stored image priced at 8-bit RGB.
    pub bytes_per_pixel: u64,
}

impl Default for SnicParams {
    fn default() -> Self {
        Self { compactness: 10.0, ratio: 5, bytes_per_superpixel: 20, bytes_per_pixel: 3 }
    }
}

/// How a total budget is divided between image and superpixel state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BudgetSplit {
    pub total_bytes: u64,
    pub image_bytes: u64,
    pub superpixel_bytes: u64,
    pub ratio: u64,
}

/// Budget split plus the derived working scale and cluster count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BudgetAllocation {
    pub split: BudgetSplit,
    pub scaled_width: u32,
    pub scaled_height: u32,
    pub superpixel_count: u32,
}

/// Split `total_bytes` at `ratio : 1`, then derive the largest
/// aspect-preserving image scale and cluster count that fit.
pub fn allocate_budget(
    total_bytes: u64,
    source_width: u32,
    source_height: u32,
    params: &SnicParams,
) -> Result<BudgetAllocation> {
    if params.ratio == 0 {
        return Err(Error::InvalidConfig("budget ratio must be >= 1".into()));
    }
    let superpixel_bytes = total_bytes / (params.ratio + 1);
    let image_bytes = total_bytes - superpixel_bytes;
    let max_area = image_bytes / params.bytes_per_pixel;
    let k = (superpixel_bytes / params.bytes_per_superpixel) as u32;
    if max_area == 0 || k == 0 {
        return Err(Error::BudgetTooSmall {
            budget: total_bytes,
            why: format!(
                "split {image_bytes}:{superpixel_bytes} leaves room for {max_area} pixels and {k} superpixels"
            ),
        });
    }

    // Aspect-preserving scale, never above source resolution.
    let src_area = source_width as u64 * source_height as u64;
    let s = ((max_area as f64) / (src_area as f64)).sqrt().min(1.0);
    let mut scaled_width = ((source_width as f64 * s).floor() as u32).clamp(1, source_width);
    let scaled_height = ((source_height as f64 * s).floor() as u32).clamp(1, source_height);
    if scaled_width as u64 * scaled_height as u64 > max_area {
        // extreme aspect ratios can overshoot after the >= 1 clamps
        scaled_width = ((max_area / scaled_height as u64) as u32).max(1);
        if scaled_width as u64 * scaled_height as u64 > max_area {
            return Err(Error::BudgetTooSmall {
                budget: total_bytes,
                why: "image share cannot hold a single row".into(),
            });
        }
    }
    let k = k.min((scaled_width as u64 * scaled_height as u64).min(u32::MAX as u64) as u32);
    Ok(BudgetAllocation {
        split: BudgetSplit { total_bytes, image_bytes, superpixel_bytes, ratio: params.ratio },
        scaled_width,
        scaled_height,
        superpixel_count: k,
    })
}

/// Exact area-average resampling to a strictly smaller (or equal) grid.
pub fn downsample(image: &IntensityImage, target_w: u32, target_h: u32) -> Result<IntensityImage> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::InvalidConfig("downsample target must be >= 1".into()));
    }
    if target_w > image.width() || target_h > image.height() {
        return Err(Error::InvalidConfig(format!(
            "downsample target {target_w}x{target_h} exceeds source {}x{}",
            image.width(),
            image.height()
        )));
    }
    if target_w == image.width() && target_h == image.height() {
        return Ok(image.clone());
    }

    // Per-axis fractional box spans: target index -> (first source index,
    // overlap weights). Weights along one axis sum to source/target.
    fn spans(source: u32, target: u32) -> Vec<(usize, Vec<f64>)> {
        let step = source as f64 / target as f64;
        (0..target)
            .map(|i| {
                let lo = i as f64 * step;
                let hi = (i + 1) as f64 * step;
                let first = lo.floor() as usize;
                let last = (hi.ceil() as usize).min(source as usize) - 1;
                let weights = (first..=last)
                    .map(|s| {
                        let cell_lo = (s as f64).max(lo);
                        let cell_hi = ((s + 1) as f64).min(hi);
                        (cell_hi - cell_lo).max(0.0)
                    })
                    .collect();
                (first, weights)
            })
            .collect()
    }

    let x_spans = spans(image.width(), target_w);
    let y_spans = spans(image.height(), target_h);
    let inv_area = (target_w as f64 / image.width() as f64) * (target_h as f64 / image.height() as f64);

    let mut out = IntensityImage::new(target_w, target_h, image.channels())?;
    for c in 0..image.channels() {
        let src = image.channel(c);
        let sw = image.width() as usize;
        for (ty, (y0, wy)) in y_spans.iter().enumerate() {
            for (tx, (x0, wx)) in x_spans.iter().enumerate() {
                let mut acc = 0.0;
                for (dy, &vy) in wy.iter().enumerate() {
                    let row = &src[(y0 + dy) * sw..(y0 + dy + 1) * sw];
                    let mut line = 0.0;
                    for (dx, &vx) in wx.iter().enumerate() {
                        line += vx * row[x0 + dx];
                    }
                    acc += vy * line;
                }
                out.set(tx as u32, ty as u32, c, acc * inv_area);
            }
        }
    }
    Ok(out)
}

#[derive(Debug)]
struct Candidate {
    dist: f64,
    seq: u64,
    x: u32,
    y: u32,
    cluster: u32,
}

// Min-heap by (distance, insertion order): first-in wins ties.
impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.seq == other.seq
    }
}
impl Eq for Candidate {}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Cluster {
    count: f64,
    lab_sum: [f64; 3],
    pos_sum: [f64; 2],
    native_sum: Vec<f64>,
}

/// SNIC region growing: seeds on a regular grid, one shared priority queue,
/// online centroid updates in joint CIELAB + position space.
///
/// The queue key is the squared distance
/// `||lab - centroid_lab||^2 + (compactness / s)^2 * ||pos - centroid_pos||^2`
/// with `s = sqrt(M / K)`; squaring does not change the pop order. Returns
/// the label map and the per-segment mean colors in the image's native
/// value space.
pub fn snic_segment(
    image: &IntensityImage,
    superpixels: u32,
    compactness: f64,
) -> Result<(LabelMap, Vec<Vec<f64>>)> {
    let m = image.pixel_count();
    if superpixels == 0 || superpixels as u64 > m as u64 {
        return Err(Error::InvalidConfig(format!(
            "superpixel count {superpixels} outside [1, {m}]"
        )));
    }
    if !(compactness > 0.0 && compactness.is_finite()) {
        return Err(Error::InvalidConfig(format!("compactness {compactness} must be > 0")));
    }
    let (width, height) = (image.width(), image.height());
    let channels = image.channels();

    // Seed sites at the centers of a near-square grid of K cells.
    let grid = supercam::partition_grid(width, height, superpixels)?;
    let sites: Vec<(u32, u32)> = (0..grid.cell_count())
        .map(|i| {
            let (x0, x1, y0, y1) = grid.cell_rect(i);
            ((x0 + x1) / 2, (y0 + y1) / 2)
        })
        .collect();
    let k = sites.len();

    let lab: Vec<[f64; 3]> = (0..m)
        .map(|i| {
            let (x, y) = ((i % width as usize) as u32, (i / width as usize) as u32);
            match channels {
                1 => {
                    let v = image.get(x, y, 0);
                    srgb_to_lab(v, v, v)
                }
                _ => srgb_to_lab(image.get(x, y, 0), image.get(x, y, 1), image.get(x, y, 2)),
            }
        })
        .collect();

    let s = (m as f64 / k as f64).sqrt();
    let w_pos2 = (compactness / s) * (compactness / s);

    const UNLABELED: u32 = u32::MAX;
    let mut labels = vec![UNLABELED; m];
    let mut clusters: Vec<Cluster> = (0..k)
        .map(|_| Cluster {
            count: 0.0,
            lab_sum: [0.0; 3],
            pos_sum: [0.0; 2],
            native_sum: vec![0.0; channels],
        })
        .collect();

    let mut heap = BinaryHeap::with_capacity(4 * m);
    let mut seq = 0u64;
    for (i, &(x, y)) in sites.iter().enumerate() {
        heap.push(Candidate { dist: 0.0, seq, x, y, cluster: i as u32 });
        seq += 1;
    }

    let mut labeled = 0usize;
    while let Some(c) = heap.pop() {
        let idx = c.y as usize * width as usize + c.x as usize;
        if labels[idx] != UNLABELED {
            continue;
        }
        labels[idx] = c.cluster;
        labeled += 1;

        let cl = &mut clusters[c.cluster as usize];
        let px_lab = lab[idx];
        cl.count += 1.0;
        for d in 0..3 {
            cl.lab_sum[d] += px_lab[d];
        }
        cl.pos_sum[0] += c.x as f64;
        cl.pos_sum[1] += c.y as f64;
        for ch in 0..channels {
            cl.native_sum[ch] += image.get(c.x, c.y, ch);
        }

        let mean_lab = [
            cl.lab_sum[0] / cl.count,
            cl.lab_sum[1] / cl.count,
            cl.lab_sum[2] / cl.count,
        ];
        let mean_pos = [cl.pos_sum[0] / cl.count, cl.pos_sum[1] / cl.count];

        let neighbors = [
            (c.x.wrapping_sub(1), c.y),
            (c.x + 1, c.y),
            (c.x, c.y.wrapping_sub(1)),
            (c.x, c.y + 1),
        ];
        for (nx, ny) in neighbors {
            if nx >= width || ny >= height {
                continue;
            }
            let nidx = ny as usize * width as usize + nx as usize;
            if labels[nidx] != UNLABELED {
                continue;
            }
            let nl = lab[nidx];
            let dc = (nl[0] - mean_lab[0]).powi(2)
                + (nl[1] - mean_lab[1]).powi(2)
                + (nl[2] - mean_lab[2]).powi(2);
            let dp = (nx as f64 - mean_pos[0]).powi(2) + (ny as f64 - mean_pos[1]).powi(2);
            heap.push(Candidate { dist: dc + w_pos2 * dp, seq, x: nx, y: ny, cluster: c.cluster });
            seq += 1;
        }
    }
    debug_assert_eq!(labeled, m);

    let means = clusters
        .iter()
        .map(|cl| cl.native_sum.iter().map(|&v| v / cl.count).collect())
        .collect();
    Ok((LabelMap::from_labels(width, height, labels)?, means))
}

/// Paint each pixel its segment mean, then nearest-neighbor upsample.
pub fn render_and_upsample(
    labels: &LabelMap,
    means: &[Vec<f64>],
    target_w: u32,
    target_h: u32,
) -> Result<IntensityImage> {
    if means.is_empty() {
        return Err(Error::DegenerateInput("no segment means".into()));
    }
    if target_w < labels.width() || target_h < labels.height() {
        return Err(Error::InvalidConfig("render target smaller than the label grid".into()));
    }
    let channels = means[0].len();
    let (sw, sh) = (labels.width() as u64, labels.height() as u64);
    IntensityImage::from_fn(target_w, target_h, channels, |x, y, c| {
        let sx = (x as u64 * sw / target_w as u64) as u32;
        let sy = (y as u64 * sh / target_h as u64) as u32;
        means[labels.get(sx, sy) as usize][c]
    })
}

/// Nearest-neighbor upsample of a label map (same index mapping as
/// [`render_and_upsample`]).
pub fn upsample_labels(labels: &LabelMap, target_w: u32, target_h: u32) -> Result<LabelMap> {
    if target_w < labels.width() || target_h < labels.height() {
        return Err(Error::InvalidConfig("upsample target smaller than the label grid".into()));
    }
    let (sw, sh) = (labels.width() as u64, labels.height() as u64);
    LabelMap::from_fn(target_w, target_h, |x, y| {
        labels.get(
            (x as u64 * sw / target_w as u64) as u32,
            (y as u64 * sh / target_h as u64) as u32,
        )
    })
}

/// Output of one restricted-SNIC run.
pub struct SnicRun {
    /// Rendered superpixel image at source resolution (blurred when
    /// requested).
    pub rendered: IntensityImage,
    /// Labels upsampled to source resolution.
    pub labels: LabelMap,
    /// Labels on the downsampled working grid.
    pub scaled_labels: LabelMap,
    pub means: Vec<Vec<f64>>,
    pub report: BudgetReport,
}

/// Full restricted pipeline: allocate, downsample, segment, render,
/// upsample, and optionally blur with the kernel the sparse pipeline
/// derives for the same budget at source resolution.
pub fn run_snic_restricted(
    image: &IntensityImage,
    budget_bytes: u64,
    with_blur: bool,
    params: &SnicParams,
) -> Result<SnicRun> {
    let alloc = allocate_budget(budget_bytes, image.width(), image.height(), params)?;
    let small = downsample(image, alloc.scaled_width, alloc.scaled_height)?;
    let (scaled_labels, means) = snic_segment(&small, alloc.superpixel_count, params.compactness)?;
    let mut rendered =
        render_and_upsample(&scaled_labels, &means, image.width(), image.height())?;
    let labels = upsample_labels(&scaled_labels, image.width(), image.height())?;
    if with_blur {
        let target = (budget_bytes / BYTES_PER_SUPERPIXEL)
            .min(image.pixel_count() as u64)
            .max(1)
            .min(u32::MAX as u64) as u32;
        let grid = supercam::partition_grid(image.width(), image.height(), target)?;
        rendered = supercam::gaussian_blur(&rendered, &supercam::derive_blur_kernel(&grid));
    }
    let realized = scaled_labels.segment_count();
    let footprint = params.bytes_per_pixel
        * (alloc.scaled_width as u64 * alloc.scaled_height as u64)
        + params.bytes_per_superpixel * realized as u64;
    let report = BudgetReport {
        budget_bytes,
        image_bytes: alloc.split.image_bytes,
        state_bytes: alloc.split.superpixel_bytes,
        realized_units: realized,
        scaled_width: alloc.scaled_width,
        scaled_height: alloc.scaled_height,
        footprint_bytes: footprint,
    };
    Ok(SnicRun { rendered, labels, scaled_labels, means, report })
}
