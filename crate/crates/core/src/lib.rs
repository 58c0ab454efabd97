//! Gaussian process discrete Hawkes process (GP-DHP).
//!
//! Discrete-time self-exciting count model with GP priors on both the
//! baseline and the excitation kernel, collapsed to a single latent GP
//! for near-linear-time MAP inference:
//!
//! * [`series`] — count-series loading, validation, splits
//! * [`kernels`] — baseline and excitation covariances
//! * [`linops`] — FFT/Toeplitz/SKI fast operators and CG solves
//! * [`map_inference`] — MAP estimation of the latent intensity
//! * [`decompose`] — closed-form baseline/excitation projection, Laplace
//!   bands, branching-ratio diagnostic
//! * [`simulate`] — forward simulation with parametric excitation families
//! * [`parametric`] — parametric DHP benchmarks with NB excitation
//! * [`evaluation`] — one-step-ahead predictive log-likelihood and the CV
//!   grid harness

pub mod cli;
pub mod decompose;
pub mod error;
pub mod evaluation;
pub mod fft;
pub mod kernels;
pub mod linops;
pub mod map_inference;
pub mod parametric;
pub mod series;
pub mod simulate;

pub use error::{Error, Result};
