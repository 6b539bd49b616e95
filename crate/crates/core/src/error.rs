//! Crate-wide error type.
//!
//! Every variant carries a stable machine-readable category (used by the CLI
//! for its one-line error output) plus a human-readable detail message.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// MJD outside the validity window of the sidereal-time polynomial.
    #[error("mjd-out-of-range: {0}")]
    MjdOutOfRange(String),

    /// Fringe geometry undefined (e.g. a celestial pole declination).
    #[error("geometry-singularity: {0}")]
    GeometrySingularity(String),

    /// Source direction outside the usable element beam.
    #[error("out-of-beam: {0}")]
    OutOfBeam(String),

    /// Non-finite or otherwise invalid numeric input.
    #[error("domain-error: {0}")]
    Domain(String),

    /// Configuration file missing, malformed, or inconsistent.
    #[error("config-error: {0}")]
    Config(String),

    /// Input data with wrong shape (block length, column count, ...).
    #[error("shape-error: {0}")]
    Shape(String),

    /// Noise estimate unusable (all-zero or non-finite spectrum).
    #[error("degenerate-noise: {0}")]
    DegenerateNoise(String),

    /// Statistic undefined for the given inputs (empty window, zero mean).
    #[error("degenerate-statistics: {0}")]
    DegenerateStatistics(String),

    /// A precondition on operation inputs was violated.
    #[error("precondition-violation: {0}")]
    Precondition(String),

    /// Malformed record in an event or pair file.
    #[error("schema-error: {0}")]
    Schema(String),

    #[error("io-error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable category token, the part before the first ':' in `Display`.
    pub fn category(&self) -> &'static str {
        match self {
            Error::MjdOutOfRange(_) => "mjd-out-of-range",
            Error::GeometrySingularity(_) => "geometry-singularity",
            Error::OutOfBeam(_) => "out-of-beam",
            Error::Domain(_) => "domain-error",
            Error::Config(_) => "config-error",
            Error::Shape(_) => "shape-error",
            Error::DegenerateNoise(_) => "degenerate-noise",
            Error::DegenerateStatistics(_) => "degenerate-statistics",
            Error::Precondition(_) => "precondition-violation",
            Error::Schema(_) => "schema-error",
            Error::Io(_) => "io-error",
        }
    }
}
