//! Passive single-photon pixel array simulation.
//!
//! Photon arrivals at a pixel are Poisson; since each pixel can register at
//! most one detection per binary frame, a frame readout is a Bernoulli draw
//! with `P{B=1} = 1 - exp(-(c*I*eta + r_q))`, where `c` is the per-image
//! exposure scale (exposure time folded in), `I` the linear intensity,
//! `eta` the quantum efficiency and `r_q` dark counts per frame.
//!
//! The exposure scale is calibrated so the expected detections per pixel per
//! frame average to `p/F` for a target of `p` mean photons per pixel over
//! the whole `F`-frame exposure. Recovery inverts the detection probability
//! from the per-pixel detection sums (log compression).
//!
//! Per-pixel draws are keyed by `(seed, channel, frame, x, y)`, so exposing
//! one pixel in isolation ([`expose_pixel`]) sees exactly the bits the full
//! cube sampler would produce for that pixel.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::IntensityImage;
use crate::par::{self, Exec};
use crate::rng;

pub const CUBE_MAGIC: [u8; 4] = *b"SPC1";

/// Sensor model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorConfig {
    /// Fraction of incident photons detected, in (0, 1].
    pub quantum_efficiency: f64,
    /// Spurious detections per frame, >= 0.
    pub dark_count_rate: f64,
    /// Number of binary frames per exposure.
    pub frames_per_exposure: u32,
    /// Calibration target: mean photon detections per pixel over the full
    /// exposure.
    pub mean_photons_per_pixel: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            quantum_efficiency: 1.0,
            dark_count_rate: 0.0,
            frames_per_exposure: 4096,
            mean_photons_per_pixel: 2.0,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quantum_efficiency > 0.0 && self.quantum_efficiency <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "quantum efficiency {} outside (0, 1]",
                self.quantum_efficiency
            )));
        }
        if !(self.dark_count_rate >= 0.0 && self.dark_count_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "dark count rate {} must be finite and >= 0",
                self.dark_count_rate
            )));
        }
        if self.frames_per_exposure == 0 {
            return Err(Error::InvalidConfig("frames per exposure must be >= 1".into()));
        }
        if !(self.mean_photons_per_pixel > 0.0 && self.mean_photons_per_pixel.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "mean photons per pixel {} must be finite and > 0",
                self.mean_photons_per_pixel
            )));
        }
        let per_frame = self.mean_photons_per_pixel / self.frames_per_exposure as f64;
        if per_frame >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "mean photons per pixel per frame {per_frame} must be < 1 to be a valid Bernoulli mean"
            )));
        }
        Ok(())
    }
}

/// Per-image exposure scaling of intensity to Bernoulli log-odds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExposureScale(pub f64);

/// Calibrate the exposure scale: `c = p / (F * I_avg)`.
pub fn compute_exposure_scale(image: &IntensityImage, config: &SensorConfig) -> Result<ExposureScale> {
    config.validate()?;
    let mean = image.mean();
    if mean <= 0.0 {
        return Err(Error::DegenerateInput(
            "all-zero image: exposure calibration needs I_avg > 0".into(),
        ));
    }
    Ok(ExposureScale(
        config.mean_photons_per_pixel / (config.frames_per_exposure as f64 * mean),
    ))
}

/// Per-frame detection probability for a pixel of the given intensity.
#[inline]
pub fn detection_probability(intensity: f64, scale: ExposureScale, config: &SensorConfig) -> f64 {
    1.0 - (-(scale.0 * intensity * config.quantum_efficiency + config.dark_count_rate)).exp()
}

/// Invert the detection probability for one pixel's detection count.
///
/// Saturated pixels (`s == frames`) are clamped to `frames - 1/2` before the
/// log (continuity-corrected clamp); estimates that go negative after dark
/// count subtraction clamp to 0.
#[inline]
pub fn recover_single(detections: u32, frames: u32, scale: ExposureScale, config: &SensorConfig) -> f64 {
    let f = frames as f64;
    let s = if detections >= frames { f - 0.5 } else { detections as f64 };
    let est = (-(1.0 - s / f).ln() - config.dark_count_rate)
        / (scale.0 * config.quantum_efficiency);
    est.max(0.0)
}

/// Bit-packed stack of binary photon-detection frames for one channel.
///
/// Layout matches the `SPC1` file format: frame-major, rows padded to a byte
/// boundary, MSB-first within a byte. Per-pixel detection sums are kept in
/// step with the packed bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhotonCube {
    width: u32,
    height: u32,
    frame_count: u32,
    row_stride: usize,
    frames: Vec<u8>,
    sums: Vec<u32>,
}

impl PhotonCube {
    fn empty(width: u32, height: u32, frame_count: u32) -> Self {
        let row_stride = (width as usize + 7) / 8;
        Self {
            width,
            height,
            frame_count,
            row_stride,
            frames: vec![0u8; row_stride * height as usize * frame_count as usize],
            sums: vec![0u32; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn frame_count(&self) -> u32 {
        self.frame_count
    }

    fn frame_bytes(&self) -> usize {
        self.row_stride * self.height as usize
    }

    #[inline]
    pub fn bit(&self, frame: u32, x: u32, y: u32) -> bool {
        let idx = frame as usize * self.frame_bytes() + y as usize * self.row_stride + x as usize / 8;
        self.frames[idx] >> (7 - x % 8) & 1 == 1
    }

    /// Detection count for one pixel.
    #[inline]
    pub fn sum(&self, x: u32, y: u32) -> u32 {
        self.sums[y as usize * self.width as usize + x as usize]
    }

    pub fn sums(&self) -> &[u32] {
        &self.sums
    }

    pub fn packed_frames(&self) -> &[u8] {
        &self.frames
    }

    fn recompute_sums(&mut self, exec: Exec) {
        let width = self.width;
        let row_stride = self.row_stride;
        let frame_bytes = self.frame_bytes();
        let frame_count = self.frame_count;
        let frames = std::mem::take(&mut self.frames);
        let mut sums = std::mem::take(&mut self.sums);
        par::for_each_chunk_mut(exec, &mut sums, width as usize, |y, row| {
            for (x, out) in row.iter_mut().enumerate() {
                let byte = y * row_stride + x / 8;
                let mask = 1u8 << (7 - x % 8);
                let mut s = 0u32;
                for f in 0..frame_count as usize {
                    s += u32::from(frames[f * frame_bytes + byte] & mask != 0);
                }
                *out = s;
            }
        });
        self.frames = frames;
        self.sums = sums;
    }

    /// Check the sums invariant against the packed bits.
    pub fn verify_sums(&self) -> Result<()> {
        for y in 0..self.height {
            for x in 0..self.width {
                let pop = (0..self.frame_count).filter(|&f| self.bit(f, x, y)).count() as u32;
                if pop != self.sum(x, y) {
                    return Err(Error::InvalidImage(format!(
                        "sum at ({x}, {y}) is {} but popcount is {pop}",
                        self.sum(x, y)
                    )));
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn frame_draw(seed: u64, channel: u32, frame: u32, x: u32, y: u32) -> u64 {
    rng::keyed_u64(
        seed,
        [((channel as u64) << 32) | frame as u64, x as u64, y as u64],
    )
}

fn sample_impl(
    image: &IntensityImage,
    channel: usize,
    scale: ExposureScale,
    config: &SensorConfig,
    seed: u64,
    exec: Exec,
) -> Result<PhotonCube> {
    config.validate()?;
    if !(scale.0 > 0.0 && scale.0.is_finite()) {
        return Err(Error::InvalidConfig(format!("exposure scale {} must be finite and > 0", scale.0)));
    }
    if channel >= image.channels() {
        return Err(Error::InvalidConfig(format!(
            "channel {channel} out of range for {}-channel image",
            image.channels()
        )));
    }
    let (width, height) = (image.width(), image.height());
    let plane = image.channel(channel);
    let probs: Vec<f64> = plane
        .iter()
        .map(|&v| detection_probability(v, scale, config))
        .collect();

    let mut cube = PhotonCube::empty(width, height, config.frames_per_exposure);
    let row_stride = cube.row_stride;
    let frame_bytes = cube.frame_bytes();
    par::for_each_chunk_mut(exec, &mut cube.frames, frame_bytes, |frame, bytes| {
        let frame = frame as u32;
        for y in 0..height {
            let row = &probs[y as usize * width as usize..(y as usize + 1) * width as usize];
            for (x, &p) in row.iter().enumerate() {
                if rng::unit_f64(frame_draw(seed, channel as u32, frame, x as u32, y)) < p {
                    bytes[y as usize * row_stride + x / 8] |= 1 << (7 - x % 8);
                }
            }
        }
    });
    cube.recompute_sums(exec);
    Ok(cube)
}

/// Sample a full photon cube for one channel of the image. Deterministic for
/// a fixed seed regardless of execution schedule.
pub fn sample_photon_cube(
    image: &IntensityImage,
    channel: usize,
    scale: ExposureScale,
    config: &SensorConfig,
    seed: u64,
) -> Result<PhotonCube> {
    sample_impl(image, channel, scale, config, seed, Exec::Auto)
}

/// Sequential reference path for [`sample_photon_cube`]; used by the bench
/// suite and the parallel-consistency tests.
pub fn sample_photon_cube_seq(
    image: &IntensityImage,
    channel: usize,
    scale: ExposureScale,
    config: &SensorConfig,
    seed: u64,
) -> Result<PhotonCube> {
    sample_impl(image, channel, scale, config, seed, Exec::Seq)
}

/// Recover per-pixel intensity estimates from a photon cube by inverting the
/// detection probability of the summed binary frames.
pub fn recover_intensity(
    cube: &PhotonCube,
    scale: ExposureScale,
    config: &SensorConfig,
) -> Result<IntensityImage> {
    if cube.frame_count == 0 {
        return Err(Error::InvalidConfig("photon cube has no frames".into()));
    }
    let values = cube
        .sums
        .iter()
        .map(|&s| recover_single(s, cube.frame_count, scale, config))
        .collect();
    Ok(IntensityImage::from_planar_unchecked(cube.width, cube.height, 1, values))
}

/// Single-pixel exposure: estimates for every channel of one pixel plus the
/// number of Bernoulli draws actually performed.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelExposure {
    pub estimates: Vec<f64>,
    pub draws: u64,
}

/// Sample `F` binary frames for a single pixel from the given per-channel
/// intensities and recover the estimate. Shares the full sampler's keying,
/// so it reproduces the cube path for that pixel bit for bit.
pub fn expose_intensities(
    values: &[f64],
    x: u32,
    y: u32,
    scale: ExposureScale,
    config: &SensorConfig,
    seed: u64,
) -> PixelExposure {
    let frames = config.frames_per_exposure;
    let mut draws = 0u64;
    let estimates = values
        .iter()
        .enumerate()
        .map(|(channel, &v)| {
            let p = detection_probability(v, scale, config);
            let mut s = 0u32;
            for frame in 0..frames {
                draws += 1;
                if rng::unit_f64(frame_draw(seed, channel as u32, frame, x, y)) < p {
                    s += 1;
                }
            }
            recover_single(s, frames, scale, config)
        })
        .collect();
    PixelExposure { estimates, draws }
}

/// Expose a single pixel of the image without touching any other pixel
/// (the "no full frame stored" contract).
pub fn expose_pixel(
    image: &IntensityImage,
    x: u32,
    y: u32,
    scale: ExposureScale,
    config: &SensorConfig,
    seed: u64,
) -> Result<PixelExposure> {
    config.validate()?;
    if !image.in_bounds(x, y) {
        return Err(Error::OutOfBounds { x, y, width: image.width(), height: image.height() });
    }
    let values: Vec<f64> = (0..image.channels()).map(|c| image.get(x, y, c)).collect();
    Ok(expose_intensities(&values, x, y, scale, config, seed))
}

/// Declared layout of a photon-cube file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CubeLayout {
    /// Self-describing `SPC1` file: magic, u32-LE width/height/frame count,
    /// then packed frames.
    Spc1,
    /// Headerless packed frames with externally known dimensions (raw
    /// captures). Same packing as `SPC1` bodies.
    Raw { width: u32, height: u32, frame_count: u32 },
}

/// Write a cube in the `SPC1` format.
pub fn save_photon_cube(path: &Path, cube: &PhotonCube) -> Result<()> {
    let mut out = Vec::with_capacity(16 + cube.frames.len());
    out.extend_from_slice(&CUBE_MAGIC);
    out.extend_from_slice(&cube.width.to_le_bytes());
    out.extend_from_slice(&cube.height.to_le_bytes());
    out.extend_from_slice(&cube.frame_count.to_le_bytes());
    out.extend_from_slice(&cube.frames);
    fs::write(path, out)?;
    Ok(())
}

/// Load a photon cube, recomputing and validating detection sums.
pub fn load_photon_cube(path: &Path, layout: CubeLayout) -> Result<PhotonCube> {
    let bytes = fs::read(path)?;
    let (width, height, frame_count, body_off) = match layout {
        CubeLayout::Spc1 => {
            if bytes.len() < 16 {
                return Err(Error::Parse {
                    offset: bytes.len() as u64,
                    what: format!("file of {} bytes is shorter than the 16-byte header", bytes.len()),
                });
            }
            if bytes[..4] != CUBE_MAGIC {
                return Err(Error::Parse {
                    offset: 0,
                    what: format!("bad magic {:02x?}, expected \"SPC1\"", &bytes[..4]),
                });
            }
            let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
            (word(4), word(8), word(12), 16usize)
        }
        CubeLayout::Raw { width, height, frame_count } => (width, height, frame_count, 0),
    };
    if width == 0 || height == 0 || frame_count == 0 {
        return Err(Error::Parse {
            offset: body_off as u64,
            what: format!("degenerate cube dimensions {width}x{height}x{frame_count}"),
        });
    }
    let row_stride = (width as usize + 7) / 8;
    let expect = body_off + row_stride * height as usize * frame_count as usize;
    if bytes.len() < expect {
        return Err(Error::Parse {
            offset: bytes.len() as u64,
            what: format!("truncated frame data: expected {expect} bytes total"),
        });
    }
    if bytes.len() > expect {
        return Err(Error::Parse {
            offset: expect as u64,
            what: format!("{} trailing bytes after frame data", bytes.len() - expect),
        });
    }
    let mut cube = PhotonCube::empty(width, height, frame_count);
    cube.frames.copy_from_slice(&bytes[body_off..]);
    cube.recompute_sums(Exec::Auto);
    cube.verify_sums()?;
    Ok(cube)
}
