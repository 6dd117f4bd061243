use thiserror::Error;

/// Errors raised by the numerical layers of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kernel spectrum is atomic and has no density")]
    AtomicSpectrum,

    #[error("point set is empty")]
    EmptyPointSet,

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("grid mismatch: fields live on different grids")]
    GridMismatch,

    #[error("operator is not nonnegative: eigenvalue {min_eigenvalue:e} below -{tolerance:e}")]
    NotNonnegative { min_eigenvalue: f64, tolerance: f64 },

    #[error("field is not in S: residual {residual:e} exceeds {allowed:e}")]
    NotInS { residual: f64, allowed: f64 },

    #[error("eigenvalue at index {index} is not positive")]
    NonpositiveEigenvalue { index: usize },

    #[error("requested {requested} modes but only {rank} are retained")]
    RankExceeded { requested: usize, rank: usize },

    #[error("blow-up at step {step} (t = {time}): |u| = {value:e} exceeds clamp")]
    BlowUp { step: usize, time: f64, value: f64 },

    #[error("gain is not globally Lipschitz; set allow_non_lipschitz to simulate it")]
    NonLipschitzGain,

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

impl Error {
    /// Short machine-readable tag used on the CLI diagnostic stream.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::AtomicSpectrum => "AtomicSpectrum",
            Error::EmptyPointSet => "EmptyPointSet",
            Error::InvalidDomain(_) => "InvalidDomain",
            Error::GridMismatch => "GridMismatch",
            Error::NotNonnegative { .. } => "NotNonnegative",
            Error::NotInS { .. } => "NotInS",
            Error::NonpositiveEigenvalue { .. } => "NonpositiveEigenvalue",
            Error::RankExceeded { .. } => "RankExceeded",
            Error::BlowUp { .. } => "BlowUp",
            Error::NonLipschitzGain => "NonLipschitzGain",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::InsufficientData(_) => "InsufficientData",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
        }
    }

    /// Numerical failures as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NotNonnegative { .. } | Error::BlowUp { .. } | Error::NotInS { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
