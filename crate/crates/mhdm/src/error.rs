//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right} in {context}")]
    DimensionMismatch {
        left: String,
        right: String,
        context: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("nonpositive pixel value {value} at index {index} where {context} requires > 0")]
    NonPositive {
        value: f64,
        index: usize,
        context: &'static str,
    },

    #[error("division hazard: |u| = 0 at index {index} in modulus-weighted stencil")]
    DivisionHazard { index: usize },

    #[error("{what} did not converge after {iters} iterations (achieved {achieved:e}, tol {tol:e})")]
    NotConverged {
        what: &'static str,
        iters: usize,
        achieved: f64,
        tol: f64,
    },

    #[error("newton solve failed at pixel {index} after {iters} iterations (residual {residual:e})")]
    NewtonFailed {
        index: usize,
        iters: usize,
        residual: f64,
    },

    #[error("non-finite value detected in {solver} at inner iteration {iter} (max |u| = {max_abs:e})")]
    Numerical {
        solver: &'static str,
        iter: usize,
        max_abs: f64,
    },

    #[error("star-norm estimate diverges: |mean(w)| = {mean_abs:e} exceeds {tol:e}")]
    StarNormDivergent { mean_abs: f64, tol: f64 },

    #[error("scale {scale}: {source}")]
    AtScale {
        scale: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported image format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Annotate a solver error with the multiscale index it occurred at.
    pub fn at_scale(self, scale: usize) -> Error {
        Error::AtScale {
            scale,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
