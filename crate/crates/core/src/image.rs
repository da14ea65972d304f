//! Dense image containers: linear-scale intensity images and segment label
//! maps. These are the working canvases shared by the sensor simulation,
//! both pipelines, and the metrics.

use crate::error::{Error, Result};

/// Dense 2-D grid of nonnegative linear photon-flux values, one plane per
/// channel (planar layout: `data[ch * w * h + y * w + x]`). Grayscale is the
/// one-channel case; color images carry three channels processed
/// independently.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityImage {
    width: u32,
    height: u32,
    channels: usize,
    data: Vec<f64>,
}

impl IntensityImage {
    pub fn new(width: u32, height: u32, channels: usize) -> Result<Self> {
        Self::check_dims(width, height, channels)?;
        let len = width as usize * height as usize * channels;
        Ok(Self { width, height, channels, data: vec![0.0; len] })
    }

    /// Build from planar data, validating the intensity invariants
    /// (finite, nonnegative, correct length).
    pub fn from_planar(width: u32, height: u32, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::check_dims(width, height, channels)?;
        let expect = width as usize * height as usize * channels;
        if data.len() != expect {
            return Err(Error::InvalidImage(format!(
                "planar data has {} values, expected {expect}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidImage(format!("intensity value {v} is not finite and nonnegative")));
        }
        Ok(Self { width, height, channels, data })
    }

    /// Internal constructor for values already known to be valid.
    pub(crate) fn from_planar_unchecked(
        width: u32,
        height: u32,
        channels: usize,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), width as usize * height as usize * channels);
        Self { width, height, channels, data }
    }

    pub fn from_fn<F: FnMut(u32, u32, usize) -> f64>(
        width: u32,
        height: u32,
        channels: usize,
        mut f: F,
    ) -> Result<Self> {
        Self::check_dims(width, height, channels)?;
        let mut data = Vec::with_capacity(width as usize * height as usize * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::from_planar(width, height, channels, data)
    }

    pub fn constant(width: u32, height: u32, channels: usize, value: f64) -> Result<Self> {
        Self::from_planar(
            width,
            height,
            channels,
            vec![value; width as usize * height as usize * channels],
        )
    }

    fn check_dims(width: u32, height: u32, channels: usize) -> Result<()> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be >= 1, got {width}x{height}x{channels}"
            )));
        }
        Ok(())
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

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, channel: usize) -> f64 {
        let m = self.pixel_count();
        self.data[channel * m + y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, channel: usize, value: f64) {
        let m = self.pixel_count();
        self.data[channel * m + y as usize * self.width as usize + x as usize] = value;
    }

    pub fn in_bounds(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height
    }

    /// One channel plane, row-major.
    pub fn channel(&self, channel: usize) -> &[f64] {
        let m = self.pixel_count();
        &self.data[channel * m..(channel + 1) * m]
    }

    pub fn channel_mut(&mut self, channel: usize) -> &mut [f64] {
        let m = self.pixel_count();
        &mut self.data[channel * m..(channel + 1) * m]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Mean over all pixel values in all channels.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }
}

/// Dense 2-D grid of segment identifiers: the common currency of every
/// metric. Ids produced by this crate are contiguous `0..K`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn from_labels(width: u32, height: u32, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("dimensions must be >= 1, got {width}x{height}")));
        }
        if labels.len() != width as usize * height as usize {
            return Err(Error::InvalidImage(format!(
                "label data has {} entries, expected {}",
                labels.len(),
                width as usize * height as usize
            )));
        }
        Ok(Self { width, height, labels })
    }

    pub fn from_fn<F: FnMut(u32, u32) -> u32>(width: u32, height: u32, mut f: F) -> Result<Self> {
        let mut labels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y));
            }
        }
        Self::from_labels(width, height, labels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Number of segments assuming contiguous ids (`max + 1`).
    pub fn segment_count(&self) -> u32 {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Remap ids to a contiguous `0..K` range, preserving ascending id
    /// order. Returns the compacted map and the segment count.
    pub fn compact_ids(&self) -> (LabelMap, u32) {
        let mut seen: Vec<u32> = self.labels.clone();
        seen.sort_unstable();
        seen.dedup();
        let remap = |id: u32| seen.binary_search(&id).unwrap() as u32;
        let labels = self.labels.iter().map(|&l| remap(l)).collect();
        (
            LabelMap { width: self.width, height: self.height, labels },
            seen.len() as u32,
        )
    }
}
