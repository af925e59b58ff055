use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid degree spec: {0}")]
    InvalidDegree(String),

    #[error("dimension C({n}+{m}, {m}) overflows the integer representation")]
    DimensionOverflow { n: u32, m: u32 },

    #[error("invalid multi-index {index:?} for degree {n} in dimension {m}")]
    InvalidMultiIndex { index: Vec<u32>, n: u32, m: u32 },

    #[error("invalid chart {chart} for dimension {m}")]
    InvalidChart { chart: usize, m: usize },

    #[error("chart {target} is singular at this point (homogeneous coordinate vanishes)")]
    SingularChart { target: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("coefficient count {got} does not match d_n = {expected}")]
    CoefficientCount { expected: usize, got: usize },

    #[error("degree n = {n} not supported by formula {formula}: {reason}")]
    UnsupportedDegree {
        n: u32,
        formula: &'static str,
        reason: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("spherical curve does not cover the window u in [{lo}, {hi}] needed at x = {x}")]
    BridgeSupport { x: f64, lo: f64, hi: f64 },

    #[error("curve does not cover histogram support [{lo}, {hi}]")]
    CoverageGap { lo: f64, hi: f64 },

    #[error("empty pool: {0}")]
    EmptyPool(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
