//! Harness around the core pipelines: dataset ingestion, synthetic corpus
//! generation, budget sweeps with CSV/SVG reports, and output rendering.

pub mod chart;
pub mod io;
pub mod pnm;
pub mod render;
pub mod sweep;
pub mod synth;
