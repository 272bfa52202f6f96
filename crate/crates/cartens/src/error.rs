use thiserror::Error;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported tensor rank {0} (this build caps ranks at {1})")]
    UnsupportedRank(usize, usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid contraction signature (nu1={0}, nu2={1}, nu3={2})")]
    InvalidSignature(usize, usize, usize),

    #[error("invalid cell: {0}")]
    InvalidCell(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown species {0}")]
    UnknownSpecies(i64),

    #[error("unknown label id {0} (table has {1} entries)")]
    UnknownLabel(usize, usize),

    #[error("missing attribute: {0}")]
    MissingAttribute(String),

    #[error("model capability missing: {0}")]
    Capability(String),

    #[error("hardness must be positive, got {0}")]
    HardnessPositivity(f64),

    #[error("wrong structure variant: {0}")]
    WrongVariant(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
