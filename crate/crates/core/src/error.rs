//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("coordinates ({x}, {y}) out of bounds for {width}x{height}")]
    OutOfBounds { x: u32, y: u32, width: u32, height: u32 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("budget of {budget} bytes too small: {why}")]
    BudgetTooSmall { budget: u64, why: String },

    #[error("parse error at byte {offset}: {what}")]
    Parse { offset: u64, what: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
