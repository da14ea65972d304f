//! Superpixel quality metrics: under-segmentation error, boundary
//! precision/recall inside an epsilon tolerance band, mean-IoU error against
//! the max-overlap ground-truth segment, and per-image depth metrics.
//!
//! Ground truth may carry a void mask; void pixels are excluded from the
//! pixel total and from every overlap and boundary count.

use crate::error::{Error, Result};
use crate::image::LabelMap;

/// Ground-truth partition plus an optional void mask.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub labels: LabelMap,
    /// `true` marks pixels excluded from evaluation.
    pub void: Option<Vec<bool>>,
}

impl GroundTruth {
    pub fn from_labels(labels: LabelMap) -> Self {
        Self { labels, void: None }
    }

    pub fn new(labels: LabelMap, void: Option<Vec<bool>>) -> Result<Self> {
        if let Some(mask) = &void {
            if mask.len() != labels.pixel_count() {
                return Err(Error::DimensionMismatch(format!(
                    "void mask has {} entries for {} pixels",
                    mask.len(),
                    labels.pixel_count()
                )));
            }
        }
        Ok(Self { labels, void })
    }

    #[inline]
    fn is_void(&self, idx: usize) -> bool {
        self.void.as_ref().is_some_and(|m| m[idx])
    }
}

/// Binary image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitmap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl Bitmap {
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn count(&self) -> u64 {
        self.data.iter().filter(|&&b| b).count() as u64
    }
}

/// Boundary match counts and rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryScore {
    pub precision: f64,
    pub recall: f64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

/// Depth accuracy for one image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthScore {
    /// Mean absolute relative error `|d - d_hat| / d` over valid pixels.
    pub abs_rel: f64,
    /// Fraction of valid pixels with `max(d/d_hat, d_hat/d) < 1.25`.
    pub delta1: f64,
    pub valid_count: u64,
}

/// Dense depth map with an optional validity mask; non-positive ground
/// truth values are always treated as invalid.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
    pub mask: Option<Vec<bool>>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>, mask: Option<Vec<bool>>) -> Result<Self> {
        let n = width as usize * height as usize;
        if values.len() != n || mask.as_ref().is_some_and(|m| m.len() != n) {
            return Err(Error::DimensionMismatch("depth data does not match dimensions".into()));
        }
        Ok(Self { width, height, values, mask })
    }
}

/// Combined per-image metric record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub ue: f64,
    pub precision: f64,
    pub recall: f64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub miou_error: f64,
    pub abs_rel: Option<f64>,
    pub delta1: Option<f64>,
}

fn check_dims(pred: &LabelMap, gt: &GroundTruth) -> Result<()> {
    if pred.width() != gt.labels.width() || pred.height() != gt.labels.height() {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.labels.width(),
            gt.labels.height()
        )));
    }
    Ok(())
}

/// Sorted run-length contingency over valid pixels: `((s, g), count)` plus
/// per-segment valid-pixel sizes.
struct Contingency {
    pairs: Vec<(u64, u64)>,
    pred_sizes: Vec<u64>,
    gt_sizes: Vec<u64>,
    valid: u64,
}

fn contingency(pred: &LabelMap, gt: &GroundTruth) -> Contingency {
    let ks = pred.segment_count() as usize;
    let kg = gt.labels.segment_count() as usize;
    let mut keys: Vec<u64> = Vec::with_capacity(pred.pixel_count());
    let mut pred_sizes = vec![0u64; ks];
    let mut gt_sizes = vec![0u64; kg];
    for (idx, (&s, &g)) in pred.labels().iter().zip(gt.labels.labels()).enumerate() {
        if gt.is_void(idx) {
            continue;
        }
        keys.push((s as u64) << 32 | g as u64);
        pred_sizes[s as usize] += 1;
        gt_sizes[g as usize] += 1;
    }
    let valid = keys.len() as u64;
    keys.sort_unstable();
    let mut pairs = Vec::new();
    let mut i = 0;
    while i < keys.len() {
        let k = keys[i];
        let mut j = i + 1;
        while j < keys.len() && keys[j] == k {
            j += 1;
        }
        pairs.push((k, (j - i) as u64));
        i = j;
    }
    Contingency { pairs, pred_sizes, gt_sizes, valid }
}

/// Under-segmentation error: for every ground-truth segment, each
/// overlapping predicted segment contributes the smaller of its inside and
/// outside parts; the total is normalized by the valid pixel count.
///
/// Zero exactly when the prediction refines the ground truth.
pub fn under_segmentation_error(pred: &LabelMap, gt: &GroundTruth) -> Result<f64> {
    check_dims(pred, gt)?;
    let table = contingency(pred, gt);
    if table.valid == 0 {
        return Err(Error::DegenerateInput("no valid pixels".into()));
    }
    let mut total = 0u64;
    for &(key, count) in &table.pairs {
        let s = (key >> 32) as usize;
        total += count.min(table.pred_sizes[s] - count);
    }
    Ok(total as f64 / table.valid as f64)
}

/// Mean over predicted segments of `1 - IoU` with the ground-truth segment
/// of maximum overlap (ties to the lowest ground-truth id).
pub fn miou_error(pred: &LabelMap, gt: &GroundTruth) -> Result<f64> {
    check_dims(pred, gt)?;
    let table = contingency(pred, gt);
    if table.valid == 0 {
        return Err(Error::DegenerateInput("no valid pixels".into()));
    }
    // pairs are sorted by (s, g); strict improvement keeps the lowest g on
    // ties
    let mut best: Vec<(u64, u64)> = vec![(0, 0); table.pred_sizes.len()];
    for &(key, count) in &table.pairs {
        let s = (key >> 32) as usize;
        if count > best[s].0 {
            best[s] = (count, key & 0xFFFF_FFFF);
        }
    }
    let mut sum = 0.0;
    let mut segments = 0u64;
    for (s, &(overlap, g)) in best.iter().enumerate() {
        if table.pred_sizes[s] == 0 {
            continue; // empty or fully void segment
        }
        segments += 1;
        let union = table.pred_sizes[s] + table.gt_sizes[g as usize] - overlap;
        sum += 1.0 - overlap as f64 / union as f64;
    }
    if segments == 0 {
        return Err(Error::DegenerateInput("prediction has no segments".into()));
    }
    Ok(sum / segments as f64)
}

/// Thin one-sided boundary map: a pixel is boundary iff its label differs
/// from its right or bottom neighbor.
pub fn boundary_map(labels: &LabelMap) -> Bitmap {
    boundary_map_masked(labels, None)
}

/// Boundary map with void exclusion: void pixels are never boundary and
/// comparisons against void neighbors are skipped.
pub fn boundary_map_masked(labels: &LabelMap, void: Option<&[bool]>) -> Bitmap {
    let (w, h) = (labels.width(), labels.height());
    let is_void = |x: u32, y: u32| -> bool {
        void.is_some_and(|m| m[y as usize * w as usize + x as usize])
    };
    let mut data = vec![false; w as usize * h as usize];
    for y in 0..h {
        for x in 0..w {
            if is_void(x, y) {
                continue;
            }
            let here = labels.get(x, y);
            let right = x + 1 < w && !is_void(x + 1, y) && labels.get(x + 1, y) != here;
            let below = y + 1 < h && !is_void(x, y + 1) && labels.get(x, y + 1) != here;
            data[y as usize * w as usize + x as usize] = right || below;
        }
    }
    Bitmap { width: w, height: h, data }
}

/// Match radius from the image diagonal: `ceil(0.0025 * diag)`; the
/// tolerance window is then `(2r + 1) x (2r + 1)`.
pub fn default_match_radius(width: u32, height: u32) -> u32 {
    let diag = ((width as f64).powi(2) + (height as f64).powi(2)).sqrt();
    (0.0025 * diag).ceil() as u32
}

/// Chebyshev box dilation by `radius`.
fn dilate(map: &Bitmap, radius: u32) -> Bitmap {
    let (w, h) = (map.width as i64, map.height as i64);
    let r = radius as i64;
    // horizontal pass
    let mut hpass = vec![false; map.data.len()];
    for y in 0..h {
        for x in 0..w {
            let lo = (x - r).max(0);
            let hi = (x + r).min(w - 1);
            hpass[(y * w + x) as usize] =
                (lo..=hi).any(|sx| map.data[(y * w + sx) as usize]);
        }
    }
    let mut data = vec![false; map.data.len()];
    for y in 0..h {
        for x in 0..w {
            let lo = (y - r).max(0);
            let hi = (y + r).min(h - 1);
            data[(y * w + x) as usize] = (lo..=hi).any(|sy| hpass[(sy * w + x) as usize]);
        }
    }
    Bitmap { width: map.width, height: map.height, data }
}

/// Boundary precision/recall with the default diagonal-derived radius.
pub fn boundary_precision_recall(pred: &Bitmap, gt: &Bitmap) -> Result<BoundaryScore> {
    boundary_precision_recall_with_radius(pred, gt, default_match_radius(pred.width, pred.height))
}

/// Boundary precision/recall with an explicit match radius.
///
/// A predicted boundary pixel is a true positive when a ground-truth
/// boundary pixel lies inside its `(2r+1) x (2r+1)` window; remaining
/// predicted pixels are false positives. False negatives are the
/// ground-truth boundary pixels left over after subtracting the true
/// positives, floored at zero so recall stays in [0, 1].
pub fn boundary_precision_recall_with_radius(
    pred: &Bitmap,
    gt: &Bitmap,
    radius: u32,
) -> Result<BoundaryScore> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::DimensionMismatch(format!(
            "boundary maps {}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let reach = dilate(gt, radius);
    let mut tp = 0u64;
    let mut fp = 0u64;
    for (i, &p) in pred.data.iter().enumerate() {
        if p {
            if reach.data[i] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let gt_total = gt.count();
    let fn_count = gt_total.saturating_sub(tp);
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 1.0 };
    let recall = if tp + fn_count > 0 { tp as f64 / (tp + fn_count) as f64 } else { 1.0 };
    Ok(BoundaryScore {
        precision,
        recall,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_count,
    })
}

/// AbsRel and delta1 over the valid ground-truth pixels of one image.
pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap) -> Result<DepthScore> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::DimensionMismatch(format!(
            "depth maps {}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let mut abs_rel = 0.0;
    let mut hits = 0u64;
    let mut valid = 0u64;
    for i in 0..gt.values.len() {
        if gt.mask.as_ref().is_some_and(|m| !m[i]) {
            continue;
        }
        let d = gt.values[i];
        if d <= 0.0 {
            continue;
        }
        let p = pred.values[i];
        if !(p > 0.0) {
            return Err(Error::DegenerateInput(format!(
                "non-positive predicted depth {p} at valid pixel {i}"
            )));
        }
        valid += 1;
        abs_rel += (d - p).abs() / d;
        if (d / p).max(p / d) < 1.25 {
            hits += 1;
        }
    }
    if valid == 0 {
        return Err(Error::DegenerateInput("empty depth mask".into()));
    }
    Ok(DepthScore {
        abs_rel: abs_rel / valid as f64,
        delta1: hits as f64 / valid as f64,
        valid_count: valid,
    })
}

/// All label-based metrics for one image; depth fields are left unset.
pub fn evaluate_labels(pred: &LabelMap, gt: &GroundTruth) -> Result<MetricReport> {
    check_dims(pred, gt)?;
    let ue = under_segmentation_error(pred, gt)?;
    let miou = miou_error(pred, gt)?;
    let void = gt.void.as_deref();
    let pred_b = boundary_map_masked(pred, void);
    let gt_b = boundary_map_masked(&gt.labels, void);
    let score = boundary_precision_recall(&pred_b, &gt_b)?;
    Ok(MetricReport {
        ue,
        precision: score.precision,
        recall: score.recall,
        true_positives: score.true_positives,
        false_positives: score.false_positives,
        false_negatives: score.false_negatives,
        miou_error: miou,
        abs_rel: None,
        delta1: None,
    })
}
