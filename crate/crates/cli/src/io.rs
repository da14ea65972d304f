//! Image, label-map, and depth-map ingestion plus PNG output.
//!
//! Pixel values are normalized straight to [0, 1] with no gamma transform:
//! stored values are treated as linear photon-flux proxies.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use supercam_core::image::{IntensityImage, LabelMap};
use supercam_core::metrics::{DepthMap, GroundTruth};

use crate::pnm;

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

/// Load a PNG (8-bit gray/RGB) or binary PGM/PPM as an intensity image.
pub fn load_image(path: &Path) -> Result<IntensityImage> {
    let img = match extension(path).as_str() {
        "png" => {
            let dynimg = image::open(path).with_context(|| format!("reading {}", path.display()))?;
            match dynimg {
                image::DynamicImage::ImageLuma8(g) => {
                    let (w, h) = g.dimensions();
                    let data = g.into_raw().iter().map(|&v| v as f64 / 255.0).collect();
                    IntensityImage::from_planar(w, h, 1, data)?
                }
                other => {
                    let rgb = other.into_rgb8();
                    let (w, h) = rgb.dimensions();
                    let raw = rgb.into_raw();
                    let m = (w * h) as usize;
                    let mut data = vec![0.0; m * 3];
                    for (i, px) in raw.chunks_exact(3).enumerate() {
                        for c in 0..3 {
                            data[c * m + i] = px[c] as f64 / 255.0;
                        }
                    }
                    IntensityImage::from_planar(w, h, 3, data)?
                }
            }
        }
        "pgm" | "ppm" | "pnm" => {
            let pnm = pnm::read_pnm(path).with_context(|| format!("reading {}", path.display()))?;
            let m = (pnm.width * pnm.height) as usize;
            let scale = 1.0 / pnm.maxval as f64;
            let mut data = vec![0.0; m * pnm.channels];
            for i in 0..m {
                for c in 0..pnm.channels {
                    data[c * m + i] = pnm.samples[i * pnm.channels + c] as f64 * scale;
                }
            }
            IntensityImage::from_planar(pnm.width, pnm.height, pnm.channels, data)?
        }
        other => bail!("unsupported image format .{other} ({})", path.display()),
    };
    Ok(img)
}

/// Quantize to 8 bits and write a PNG.
pub fn save_png(path: &Path, img: &IntensityImage) -> Result<()> {
    let quant = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let (w, h) = (img.width(), img.height());
    match img.channels() {
        1 => {
            let buf: Vec<u8> = img.channel(0).iter().map(|&v| quant(v)).collect();
            image::GrayImage::from_raw(w, h, buf)
                .expect("buffer sized to dimensions")
                .save(path)?;
        }
        3 => {
            let m = (w * h) as usize;
            let mut buf = vec![0u8; m * 3];
            for i in 0..m {
                for c in 0..3 {
                    buf[i * 3 + c] = quant(img.channel(c)[i]);
                }
            }
            image::RgbImage::from_raw(w, h, buf)
                .expect("buffer sized to dimensions")
                .save(path)?;
        }
        n => bail!("cannot write {n}-channel image as PNG"),
    }
    Ok(())
}

/// Load raw segment ids from a 16-bit PGM (pixel value = id) or a CSV of
/// ids (rows are lines, `;` also accepted as a row separator).
pub fn load_label_map(path: &Path) -> Result<LabelMap> {
    match extension(path).as_str() {
        "pgm" | "pnm" => {
            let pnm = pnm::read_pnm(path).with_context(|| format!("reading {}", path.display()))?;
            if pnm.channels != 1 {
                bail!("label maps must be grayscale ({})", path.display());
            }
            Ok(LabelMap::from_labels(
                pnm.width,
                pnm.height,
                pnm.samples.iter().map(|&s| s as u32).collect(),
            )?)
        }
        "csv" => {
            let text = fs::read_to_string(path)?;
            let mut rows: Vec<Vec<u32>> = Vec::new();
            for line in text.replace(';', "\n").lines() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let row: Vec<u32> = line
                    .split(',')
                    .map(|t| t.trim().parse::<u32>().with_context(|| format!("bad id {t:?}")))
                    .collect::<Result<_>>()?;
                rows.push(row);
            }
            let height = rows.len() as u32;
            let width = rows.first().map_or(0, |r| r.len()) as u32;
            if rows.iter().any(|r| r.len() as u32 != width) {
                bail!("ragged CSV label rows in {}", path.display());
            }
            Ok(LabelMap::from_labels(width, height, rows.concat())?)
        }
        other => bail!("unsupported label format .{other} ({})", path.display()),
    }
}

/// Load ground-truth labels, compacting ids to a contiguous range.
/// With `void_zero`, raw id 0 marks pixels excluded from evaluation.
pub fn load_ground_truth(path: &Path, void_zero: bool) -> Result<GroundTruth> {
    let raw = load_label_map(path)?;
    let void = if void_zero {
        let mask: Vec<bool> = raw.labels().iter().map(|&l| l == 0).collect();
        mask.iter().any(|&v| v).then_some(mask)
    } else {
        None
    };
    let (compact, _) = raw.compact_ids();
    Ok(GroundTruth::new(compact, void)?)
}

/// Load a depth map from a CSV of row-major reals; non-positive entries are
/// masked invalid.
pub fn load_depth_csv(path: &Path) -> Result<DepthMap> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.replace(';', "\n").lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad depth {t:?}")))
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    let height = rows.len() as u32;
    let width = rows.first().map_or(0, |r| r.len()) as u32;
    if width == 0 || height == 0 || rows.iter().any(|r| r.len() as u32 != width) {
        bail!("empty or ragged depth CSV {}", path.display());
    }
    let values = rows.concat();
    let mask: Vec<bool> = values.iter().map(|&v| v > 0.0).collect();
    Ok(DepthMap::new(width, height, values, Some(mask))?)
}

/// Write a label map as 16-bit PGM (ids must fit).
pub fn save_label_map(path: &Path, labels: &LabelMap) -> Result<()> {
    let values: Vec<u16> = labels
        .labels()
        .iter()
        .map(|&l| u16::try_from(l).map_err(|_| anyhow::anyhow!("label {l} does not fit 16-bit PGM")))
        .collect::<Result<_>>()?;
    pnm::write_pgm16(path, labels.width(), labels.height(), &values)?;
    Ok(())
}

/// One corpus member: an image and its paired ground-truth labels.
#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub id: String,
    pub image: PathBuf,
    pub ground_truth: PathBuf,
}

/// Scan a corpus directory for images paired with `<stem>_gt.pgm` or
/// `<stem>_gt.csv`, sorted by id.
pub fn discover_corpus(dir: &Path) -> Result<Vec<CorpusEntry>> {
    let mut entries = Vec::new();
    let listing =
        fs::read_dir(dir).with_context(|| format!("reading corpus directory {}", dir.display()))?;
    for item in listing {
        let path = item?.path();
        let ext = extension(&path);
        if !matches!(ext.as_str(), "png" | "ppm" | "pgm") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        if stem.ends_with("_gt") || stem.ends_with("_depth_gt") {
            continue;
        }
        let gt_pgm = dir.join(format!("{stem}_gt.pgm"));
        let gt_csv = dir.join(format!("{stem}_gt.csv"));
        let ground_truth = if gt_pgm.exists() {
            gt_pgm
        } else if gt_csv.exists() {
            gt_csv
        } else {
            bail!("image {} has no matching ground truth (_gt.pgm/_gt.csv)", path.display());
        };
        entries.push(CorpusEntry { id: stem, image: path, ground_truth });
    }
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    if entries.is_empty() {
        bail!("corpus directory {} contains no images", dir.display());
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_maxval_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("white.ppm");
        pnm::write_ppm8(&path, 2, 2, &[255u8; 12]).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.channels(), 3);
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn png_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = IntensityImage::from_fn(7, 5, 3, |x, y, c| {
            ((x + 2 * y + 3 * c as u32) % 11) as f64 / 10.0
        })
        .unwrap();
        save_png(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-9);
        }
    }

    #[test]
    fn truncated_ppm_is_a_parse_error_with_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.ppm");
        let mut bytes = b"P6 4 4 255 ".to_vec();
        bytes.extend_from_slice(&[0u8; 10]);
        fs::write(&path, &bytes).unwrap();
        let err = format!("{:?}", load_image(&path).unwrap_err());
        assert!(err.contains("offset"), "{err}");
    }

    #[test]
    fn labels_from_pgm_and_csv_with_compaction() {
        let dir = tempfile::tempdir().unwrap();
        let pgm = dir.path().join("ids.pgm");
        pnm::write_pgm16(&pgm, 2, 2, &[7, 7, 7, 7]).unwrap();
        let gt = load_ground_truth(&pgm, false).unwrap();
        assert_eq!(gt.labels.segment_count(), 1);

        let csv = dir.path().join("ids.csv");
        fs::write(&csv, "3,3\n9,9\n").unwrap();
        let gt = load_ground_truth(&csv, false).unwrap();
        assert_eq!(gt.labels.segment_count(), 2);
        assert_eq!(gt.labels.labels(), &[0, 0, 1, 1]);

        // semicolon row separator form
        let csv2 = dir.path().join("ids2.csv");
        fs::write(&csv2, "0,0;1,1").unwrap();
        let gt = load_ground_truth(&csv2, false).unwrap();
        assert_eq!(gt.labels.segment_count(), 2);
    }

    #[test]
    fn void_zero_masks_and_compacts() {
        let dir = tempfile::tempdir().unwrap();
        let pgm = dir.path().join("v.pgm");
        pnm::write_pgm16(&pgm, 3, 1, &[0, 5, 9]).unwrap();
        let gt = load_ground_truth(&pgm, true).unwrap();
        assert_eq!(gt.void.as_deref(), Some([true, false, false].as_slice()));
    }

    #[test]
    fn depth_csv_masks_nonpositive() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("d.csv");
        fs::write(&csv, "1.5,0\n2.5,3.5\n").unwrap();
        let d = load_depth_csv(&csv).unwrap();
        assert_eq!(d.mask.as_deref(), Some([true, false, true, true].as_slice()));
    }
}
