use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("objective vector length mismatch: {left} vs {right}")]
    ObjectiveLengthMismatch { left: usize, right: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("hypervolume is only implemented for 2 objectives, got {0}")]
    UnsupportedDimension(usize),

    #[error("atom pair ({i}, {j}) at distance {distance:.4} below overlap threshold")]
    Overlap { i: usize, j: usize, distance: f64 },

    #[error("permutation mutation requires at least two distinct species")]
    SingleSpecies,

    #[error("unknown species label `{0}`")]
    UnknownSpecies(String),

    #[error("invalid genotype: {0}")]
    InvalidGenotype(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
