use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shift of curve {curve} is {value}, outside the open interval (-1/4, 1/4)")]
    ShiftOutOfRange { curve: usize, value: f64 },
    #[error("first curve must be the reference (a[1] = 1, theta[1] = 0)")]
    FirstCurveNotReference,
    #[error("scale of curve {curve} is zero")]
    ZeroScale { curve: usize },
    #[error("first Fourier coefficient of the shape is zero")]
    ZeroFirstFourier,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("quadrature did not reach tolerance {tol:e}")]
    QuadratureFailure { tol: f64 },
    #[error("design density vanishes at x = {x}")]
    ZeroDensity { x: f64 },
    #[error("non-symmetric innovation needs both Fourier coefficients (f1, g1)")]
    MissingCoefficients,
    #[error("operation requires the dual-run sign mode")]
    WrongMode,
    #[error("argument `{0}` must be nonzero")]
    ZeroArgument(&'static str),
    #[error("estimated first Fourier coefficient {value:e} is too close to zero")]
    DegenerateF1 { value: f64 },
    #[error("out-of-order update: expected observation {expected}, got {got}")]
    OutOfOrderUpdate { expected: usize, got: usize },
    #[error("no kernel mass at x = {x}")]
    Unavailable { x: f64 },
    #[error("scale estimate of curve {curve} is zero")]
    ZeroScaleEstimate { curve: usize },
    #[error("weights degenerate at x = {x}")]
    DegenerateWeights { x: f64 },
    #[error("invalid weights at x = {x}: {reason}")]
    InvalidWeights { x: f64, reason: String },
    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("stability condition 4*pi*|f1|*min|a| > 1 violated (value {value})")]
    StabilityConditionViolated { value: f64 },
    #[error("negative variance {value} at index {index}")]
    NegativeVariance { index: usize, value: f64 },
    #[error("bandwidth exponent {alpha} must exceed 1/3")]
    AlphaTooSmall { alpha: f64 },
    #[error("curve {curve}: density vanishes at both shifted points for x = {x}")]
    ZeroDensityAtShiftedPoint { curve: usize, x: f64 },
    #[error("no beats detected")]
    NoBeatsDetected,
    #[error("signal too short: {0}")]
    SignalTooShort(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index {index} out of range for {len} curves")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Stable machine-readable code, e.g. `ShiftOutOfRange`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::ShiftOutOfRange { .. } => "ShiftOutOfRange",
            Error::FirstCurveNotReference => "FirstCurveNotReference",
            Error::ZeroScale { .. } => "ZeroScale",
            Error::ZeroFirstFourier => "ZeroFirstFourier",
            Error::InvalidParams(_) => "InvalidParams",
            Error::InvalidShape(_) => "InvalidShape",
            Error::InvalidDensity(_) => "InvalidDensity",
            Error::InvalidKernel(_) => "InvalidKernel",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::ZeroDensity { .. } => "ZeroDensity",
            Error::MissingCoefficients => "MissingCoefficients",
            Error::WrongMode => "WrongMode",
            Error::ZeroArgument(_) => "ZeroArgument",
            Error::DegenerateF1 { .. } => "DegenerateF1",
            Error::OutOfOrderUpdate { .. } => "OutOfOrderUpdate",
            Error::Unavailable { .. } => "Unavailable",
            Error::ZeroScaleEstimate { .. } => "ZeroScaleEstimate",
            Error::DegenerateWeights { .. } => "DegenerateWeights",
            Error::InvalidWeights { .. } => "InvalidWeights",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::StabilityConditionViolated { .. } => "StabilityConditionViolated",
            Error::NegativeVariance { .. } => "NegativeVariance",
            Error::AlphaTooSmall { .. } => "AlphaTooSmall",
            Error::ZeroDensityAtShiftedPoint { .. } => "ZeroDensityAtShiftedPoint",
            Error::NoBeatsDetected => "NoBeatsDetected",
            Error::SignalTooShort(_) => "SignalTooShort",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::Io(_) => "Io",
            Error::Parse(_) => "Parse",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::ShiftOutOfRange { .. }
            | Error::FirstCurveNotReference
            | Error::ZeroScale { .. }
            | Error::ZeroFirstFourier
            | Error::InvalidParams(_)
            | Error::InvalidShape(_)
            | Error::InvalidDensity(_)
            | Error::InvalidKernel(_)
            | Error::MissingCoefficients
            | Error::WrongMode
            | Error::AlphaTooSmall { .. }
            | Error::InvalidWeights { .. }
            | Error::IndexOutOfRange { .. } => ErrorClass::Config,
            Error::InsufficientData { .. }
            | Error::NoBeatsDetected
            | Error::SignalTooShort(_)
            | Error::DimensionMismatch(_)
            | Error::OutOfOrderUpdate { .. }
            | Error::Io(_)
            | Error::Parse(_) => ErrorClass::Data,
            _ => ErrorClass::Numeric,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
