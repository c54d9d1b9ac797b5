use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degree {k} out of range for dimension {n}")]
    DegreeOutOfRange { n: usize, k: isize },
    #[error("ambient dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("degree mismatch: {left} vs {right}")]
    DegreeMismatch { left: isize, right: isize },
    #[error("vector must have unit length, got {0}")]
    NotNormalized(f64),
    #[error("algebra error: {0}")]
    Algebra(String),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("matrix is singular: {0}")]
    Singular(String),
    #[error("ellipticity violation: {0}")]
    Ellipticity(String),
    #[error("mesh parse error at line {line}: {msg}")]
    MeshParse { line: usize, msg: String },
    #[error("invalid mesh: {0}")]
    MeshInvalid(String),
    #[error("stencil error: {0}")]
    Stencil(String),
    #[error("data incompatible: {0}")]
    DataIncompatible(String),
    #[error("spectrum hit: lambda = {lambda} lies on the spectrum (estimated inverse condition {rcond:e}, suspected eigenvalue {suspected})")]
    SpectrumHit { lambda: f64, rcond: f64, suspected: f64 },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("symmetric input required: {0}")]
    SymmetricRequired(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("expression error at bytes {start}..{end}: {msg}")]
    Expression { start: usize, end: usize, msg: String },
    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DataIncompatible(_) => 2,
            Error::SpectrumHit { .. } => 3,
            Error::Config(_) | Error::Expression { .. } => 4,
            _ => 1,
        }
    }

    /// Short machine-readable code used in reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DataIncompatible(_) => "data_incompatible",
            Error::SpectrumHit { .. } => "spectrum_hit",
            Error::Config(_) => "config",
            Error::Expression { .. } => "expression",
            Error::MeshParse { .. } | Error::MeshInvalid(_) => "mesh",
            Error::Io { .. } => "io",
            Error::Ellipticity(_) => "ellipticity",
            Error::Stencil(_) => "stencil",
            _ => "internal",
        }
    }
}
