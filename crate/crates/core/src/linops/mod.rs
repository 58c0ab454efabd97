//! Matrix-free linear operators with O(T log T) multiplies.
//!
//! The collapsed prior covariance is `K = K_b + X K_f Xᵀ` where X is the
//! strictly lower-triangular lagged-count design matrix. Multiplies by X
//! and Xᵀ are FFT convolutions with the count sequence, the baseline
//! periodic block is Toeplitz (circulant embedding), and the warped-RBF
//! excitation block goes through a structured-kernel-interpolation grid
//! whose Gram matrix is Toeplitz.

mod baseline;
mod cg;
pub(crate) mod collapsed;
mod lag;
mod ski;
mod toeplitz;

pub use baseline::BaselineOperator;
pub use cg::{cg_defaults, cg_solve, CgResult};
pub use collapsed::{CollapsedKernelOperator, ExcitationOperator, StatMode};
pub use lag::LagDesignOperator;
pub use ski::SkiOperator;
pub use toeplitz::SymToeplitz;

/// A symmetric linear operator on R^dim.
pub trait LinOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Vec<f64>;
    /// Diagonal entries, used for Jacobi preconditioning.
    fn diagonal(&self) -> Option<Vec<f64>> {
        None
    }
}
