//! Emulation of a superpixelation camera: a sensor that builds a sparse
//! superpixel image directly from single-photon measurements instead of
//! storing a full-resolution frame.
//!
//! The crate is organised around the stages of that pipeline:
//!
//! - [`sensor`] — passive single-photon pixel array simulation (Bernoulli
//!   binary frames, exposure calibration, log-compression recovery) and the
//!   `SPC1` photon-cube file format.
//! - [`supercam`] — the sparse pipeline itself: grid partition, one random
//!   seed per cell, selective per-pixel exposure, nearest-seed fill, and the
//!   closed-form separable Gaussian blur.
//! - [`snic`] — a memory-restricted SNIC baseline that splits the same byte
//!   budget between a downsampled image and priority-queue clustering state.
//! - [`metrics`] — under-segmentation error, boundary precision/recall with
//!   an epsilon tolerance band, mIoU error, and depth metrics.
//!
//! All randomness is counter-based and keyed, so results are bit-identical
//! for a fixed seed regardless of thread count. The `parallel` feature
//! (default) enables rayon data-parallel kernels; without it every operation
//! falls back to the equivalent sequential loop.

pub mod color;
pub mod error;
pub mod image;
pub mod metrics;
mod par;
pub mod report;
pub mod rng;
pub mod sensor;
pub mod snic;
pub mod supercam;

pub use error::{Error, Result};
pub use image::{IntensityImage, LabelMap};
pub use report::BudgetReport;
