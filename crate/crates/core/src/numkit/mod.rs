//! Deterministic dense linear algebra and randomness substrate.

mod linalg;
mod matrix;
mod rng;

pub use linalg::{
    condition_number, eigvals, inverse, spectral_norm, sqrtm_psd, svd, svd_warm, symmetric_eigen, Svd, SymEigen,
    PSD_TOL, SINGULAR_RATIO, SPECTRAL_MAX_ITER, SPECTRAL_TOL,
};
pub use matrix::{dot, norm, sq_dist, Matrix};
pub use num_complex::Complex;
pub use rng::Rng;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("{op}: dimension mismatch, expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("matrix must be square, got {0:?}")]
    NotSquare((usize, usize)),
    #[error("{0}: non-finite input")]
    NonFinite(&'static str),
    #[error("{0}: empty matrix")]
    Empty(&'static str),
    #[error("{op} did not converge after {iterations} iterations (last {last}, gap {gap})")]
    NoConvergence {
        op: &'static str,
        iterations: usize,
        last: f64,
        gap: f64,
    },
    #[error("ill-conditioned matrix: sigma_min = {sigma_min:e} (sigma_max = {sigma_max:e})")]
    IllConditioned { sigma_min: f64, sigma_max: f64 },
    #[error("singular matrix (pivot {pivot:e})")]
    Singular { pivot: f64 },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },
}
