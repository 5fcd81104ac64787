use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown preset `{requested}`; available: {}", available.join(", "))]
    UnknownPreset {
        requested: String,
        available: Vec<String>,
    },

    #[error("linear solve failed: {0}")]
    Singular(String),

    #[error("random stream exhausted after {0} points")]
    StreamExhausted(u64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("implied-vol inversion: price {price} outside no-arbitrage band ({lo}, {hi})")]
    ArbitrageBand { price: f64, lo: f64, hi: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
