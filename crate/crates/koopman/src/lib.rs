//! Spectral analysis of Koopman operators from snapshot data.
//!
//! The library is organized as a pipeline: `dynamics` produces snapshot pairs
//! from built-in or ingested systems, `dictionary` evaluates observable
//! families on them, `galerkin` assembles the Gram/Koopman/stiffness matrices
//! (G, A, L), and `spectral` turns those into residual-validated spectra and
//! pseudospectra. `rage` adds time-averaged projected-norm functionals that
//! split an observable into pure-point and continuous spectral mass, and
//! `scidemo` holds oracle constructions with closed-form spectra used to
//! validate everything end to end.

pub mod dictionary;
pub mod dynamics;
pub mod galerkin;
pub mod linalg;
pub mod rage;
pub mod scidemo;
pub mod spectral;

use thiserror::Error;

/// Errors shared across the pipeline modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("no data at requested point")]
    NoDataAtPoint,
    #[error("point {index} lies outside the state space")]
    PointOutsideSpace { index: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("intervals {first} and {second} overlap")]
    OverlappingIntervals { first: usize, second: usize },
    #[error("quadrature rule incompatible with points: {0}")]
    QuadratureMismatch(String),
    #[error("Gram matrix is numerically zero")]
    GramZero,
    #[error("triple is not orthonormal; call orthonormalize first")]
    NonOrthonormalTriple,
    #[error("certificate refused: {0}")]
    CertificateRefused(String),
    #[error("eigensolver failed: {0}")]
    EigensolverFailure(String),
    #[error("horizon {horizon} exceeds series length {len}")]
    HorizonExceedsSeries { horizon: usize, len: usize },
    #[error("degenerate series: Hankel matrix is numerically rank zero")]
    DegenerateSeries,
    #[error("operator norm {norm:.6} exceeds the isometry budget")]
    NotAContraction { norm: f64 },
    #[error("partition schedule produces |S_n| below 1e-14 before depth {depth}; deepen float budget")]
    DeepenFloatBudget { depth: usize },
    #[error("inconsistent declaration: {0}")]
    InconsistentDeclaration(String),
    #[error("empty observable list")]
    EmptyObservables,
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
