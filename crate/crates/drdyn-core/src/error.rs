//! Error type shared across the crate.

use thiserror::Error;

/// Errors raised by geometry, evaluation, simulation, and reporting.
#[derive(Debug, Error)]
pub enum Error {
    /// The projection of the origin onto the sphere is the whole sphere;
    /// no single-valued step exists there.
    #[error("the origin cannot be projected onto the sphere (multivalued projection)")]
    OriginNotProjectable,

    /// The line offset is outside the range required by the operation.
    #[error("lambda = {lambda} is outside the required range {expected}")]
    LambdaOutOfRange { lambda: f64, expected: &'static str },

    /// A vector with the wrong dimension was passed to a configured operation.
    #[error("dimension mismatch: expected d = {expected}, got d = {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The construction needs both e1 and e2, so d >= 2.
    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    /// Vectors must have finite coordinates.
    #[error("coordinate {index} is not finite ({value})")]
    NonFiniteCoordinate { index: usize, value: f64 },

    /// The point is outside the slab 0 < <x,e1> <= 1 where F is defined.
    #[error("point is outside the slab 0 < <x,e1> <= 1 (got <x,e1> = {x1})")]
    OutsideDelta { x1: f64 },

    /// The point is outside the open half-space <x,e1> > 0.
    #[error("point is outside the half-space <x,e1> > 0 (got <x,e1> = {x1})")]
    OutsideHPlus { x1: f64 },

    /// No sample satisfied the exclusion constraint of an infimum estimate.
    #[error("no sample satisfies the exclusion constraint at t = {t}")]
    EmptySampleRegion { t: f64 },

    /// An envelope cell has no supporting trajectory.
    #[error("no trajectory supports the envelope level s = {level}")]
    InsufficientData { level: f64 },

    /// A caller-supplied parameter fails validation.
    #[error("invalid {what}: {why}")]
    InvalidParameter { what: &'static str, why: String },

    #[error("serialization failed: {0}")]
    Serialize(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::InvalidParameter {
            what,
            why: why.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
