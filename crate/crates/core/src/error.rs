use thiserror::Error;

use crate::symplectic::GenericityReport;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symplectic (residual {residual:e} > {tolerance:e})")]
    NotSymplectic { residual: f64, tolerance: f64 },

    #[error("block for mode {mode} is not symplectic (det {det})")]
    NonSymplecticBlock { mode: usize, det: f64 },

    #[error("random generation failed after {attempts} attempts")]
    GenerationFailure { attempts: usize },

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("degenerate source pair (det {det:e})")]
    DegeneratePair { det: f64 },

    #[error(
        "source and target pairs span different symplectic areas ({source_area} vs {target_area})"
    )]
    UnsatisfiableAlignment { source_area: f64, target_area: f64 },

    #[error("ill-conditioned alignment (condition number {condition:e} > {limit:e})")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("non-generic input: {context}")]
    EdgeCase {
        context: String,
        report: Box<GenericityReport>,
    },

    #[error(
        "input behaves like a mode permutation; no generic power within {max_power} repetitions"
    )]
    PermutationLike { max_power: usize },

    #[error("transduction is structurally impossible for this input: {0}")]
    UnsatisfiableTransduction(String),

    #[error("synthesized sequence failed certification: {0}")]
    CertificationFailed(String),

    #[error("malformed document: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
