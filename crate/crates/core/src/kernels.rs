//! Covariance kernels for the baseline and excitation priors.
//!
//! The baseline kernel is periodic (seasonal) + linear (trend) + jitter:
//!
//! `K_b(t,s) = σ_per² exp(-2 sin²(π(t-s)/P)/ℓ_per²) + σ_lin² t s + σ_const² + ε_b² δ_{ts}`
//!
//! The excitation kernel is nonstationary in lag, built from an amplitude
//! envelope `a(d) = σ_f e^{-βd/2}` and a warped RBF on
//! `g(d) = (1 - e^{-βd})/(β ℓ_f)`:
//!
//! `K_f(d,d') = a(d) a(d') exp(-½ (g(d)-g(d'))²) + ε_f² δ_{dd'}`
//!
//! As β → 0 the envelope flattens to σ_f and the warp to d/ℓ_f, recovering
//! a stationary RBF on the original lag scale.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this β the envelope and warp are evaluated in their analytic
/// β → 0 limit; naive evaluation of (1 - e^{-βd})/β is 0/0-unstable there.
pub const BETA_LIMIT_THRESHOLD: f64 = 1e-8;

/// Default jitter standard deviation for both kernels.
pub const DEFAULT_JITTER: f64 = 1e-4;

/// Largest size accepted by the dense builders.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Baseline kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineKernelParams {
    /// Seasonal standard-deviation scale.
    pub sigma_per: f64,
    /// Seasonal length-scale.
    pub ell_per: f64,
    /// Seasonal period, e.g. 52 for weekly or 365 for daily data.
    pub period: f64,
    /// Linear-trend scale.
    pub sigma_lin: f64,
    /// Constant-kernel scale (optional; default 0).
    pub sigma_const: f64,
    /// Jitter standard deviation.
    pub eps_b: f64,
}

impl BaselineKernelParams {
    pub fn new(sigma_per: f64, ell_per: f64, period: f64, sigma_lin: f64) -> Self {
        Self {
            sigma_per,
            ell_per,
            period,
            sigma_lin,
            sigma_const: 0.0,
            eps_b: DEFAULT_JITTER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_per < 0.0 {
            return Err(Error::InvalidParameter("sigma_per must be >= 0".into()));
        }
        if self.ell_per <= 0.0 {
            return Err(Error::InvalidParameter("ell_per must be > 0".into()));
        }
        if self.period <= 0.0 {
            return Err(Error::InvalidParameter("period must be > 0".into()));
        }
        if self.sigma_lin < 0.0 {
            return Err(Error::InvalidParameter("sigma_lin must be >= 0".into()));
        }
        if self.sigma_const < 0.0 {
            return Err(Error::InvalidParameter("sigma_const must be >= 0".into()));
        }
        if self.eps_b <= 0.0 {
            return Err(Error::InvalidParameter("eps_b must be > 0".into()));
        }
        Ok(())
    }
}

/// Excitation kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationKernelParams {
    /// Amplitude scale σ_f.
    pub sigma_f: f64,
    /// Base length-scale ℓ_f.
    pub ell_f: f64,
    /// Lag-attenuation rate β >= 0.
    pub beta: f64,
    /// Jitter standard deviation.
    pub eps_f: f64,
    /// Maximum lag D_max (positive).
    pub d_max: usize,
}

impl ExcitationKernelParams {
    pub fn new(sigma_f: f64, ell_f: f64, beta: f64, d_max: usize) -> Self {
        Self {
            sigma_f,
            ell_f,
            beta,
            eps_f: DEFAULT_JITTER,
            d_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_f < 0.0 {
            return Err(Error::InvalidParameter("sigma_f must be >= 0".into()));
        }
        if self.ell_f <= 0.0 {
            return Err(Error::InvalidParameter("ell_f must be > 0".into()));
        }
        if self.beta < 0.0 {
            return Err(Error::InvalidParameter("beta must be >= 0".into()));
        }
        if self.eps_f <= 0.0 {
            return Err(Error::InvalidParameter("eps_f must be > 0".into()));
        }
        if self.d_max < 1 {
            return Err(Error::InvalidParameter("d_max must be >= 1".into()));
        }
        Ok(())
    }
}

/// Full kernel hyperparameter set for the collapsed model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelHyperparams {
    pub baseline: BaselineKernelParams,
    pub excitation: ExcitationKernelParams,
}

impl KernelHyperparams {
    pub fn validate(&self) -> Result<()> {
        self.baseline.validate()?;
        self.excitation.validate()
    }
}

/// Amplitude envelope `a(d) = σ_f exp(-βd/2)`, flat at σ_f in the β → 0 limit.
pub fn amplitude_envelope(d: usize, p: &ExcitationKernelParams) -> f64 {
    if p.beta < BETA_LIMIT_THRESHOLD {
        p.sigma_f
    } else {
        p.sigma_f * (-p.beta * d as f64 / 2.0).exp()
    }
}

/// Lag warp `g(d) = (1 - e^{-βd})/(β ℓ_f)`, which tends to d/ℓ_f as β → 0.
pub fn lag_warp(d: usize, p: &ExcitationKernelParams) -> f64 {
    warp_real(d as f64, p)
}

pub(crate) fn warp_real(d: f64, p: &ExcitationKernelParams) -> f64 {
    if p.beta < BETA_LIMIT_THRESHOLD {
        d / p.ell_f
    } else {
        (1.0 - (-p.beta * d).exp()) / (p.beta * p.ell_f)
    }
}

/// Baseline covariance K_b(t,s), 1-based indices.
pub fn baseline_cov(t: usize, s: usize, p: &BaselineKernelParams) -> f64 {
    let tau = t as f64 - s as f64;
    let sin_term = (std::f64::consts::PI * tau / p.period).sin();
    let periodic =
        p.sigma_per * p.sigma_per * (-2.0 * sin_term * sin_term / (p.ell_per * p.ell_per)).exp();
    // Group t*s first so the product is exactly symmetric in (t, s).
    let linear = p.sigma_lin * p.sigma_lin * ((t as f64) * (s as f64));
    let constant = p.sigma_const * p.sigma_const;
    let jitter = if t == s { p.eps_b * p.eps_b } else { 0.0 };
    periodic + linear + constant + jitter
}

/// Baseline cross-covariance between a prediction bin and a training
/// bin: identical to [`baseline_cov`] but without the jitter term,
/// which belongs to the noise model rather than the latent function.
pub fn baseline_cov_cross(t: usize, s: usize, p: &BaselineKernelParams) -> f64 {
    let tau = t as f64 - s as f64;
    let sin_term = (std::f64::consts::PI * tau / p.period).sin();
    let periodic =
        p.sigma_per * p.sigma_per * (-2.0 * sin_term * sin_term / (p.ell_per * p.ell_per)).exp();
    let linear = p.sigma_lin * p.sigma_lin * ((t as f64) * (s as f64));
    let constant = p.sigma_const * p.sigma_const;
    periodic + linear + constant
}

/// Stationary part of the baseline kernel at integer lag τ (no linear,
/// constant, or jitter terms). Used by the Toeplitz fast multiply.
pub(crate) fn baseline_periodic_at_lag(tau: usize, p: &BaselineKernelParams) -> f64 {
    let sin_term = (std::f64::consts::PI * tau as f64 / p.period).sin();
    p.sigma_per * p.sigma_per * (-2.0 * sin_term * sin_term / (p.ell_per * p.ell_per)).exp()
}

/// Stationary RBF on warped lags: `exp(-½ (g(d)-g(d'))²)`.
pub fn stationary_rbf(d: usize, d2: usize, p: &ExcitationKernelParams) -> f64 {
    let gap = lag_warp(d, p) - lag_warp(d2, p);
    (-0.5 * gap * gap).exp()
}

/// Excitation covariance K_f(d,d'), lags 1-based.
pub fn excitation_cov(d: usize, d2: usize, p: &ExcitationKernelParams) -> f64 {
    let core = amplitude_envelope(d, p) * amplitude_envelope(d2, p) * stationary_rbf(d, d2, p);
    let jitter = if d == d2 { p.eps_f * p.eps_f } else { 0.0 };
    core + jitter
}

/// Dense T×T baseline Gram matrix. Small-instance oracle for the fast paths.
pub fn build_dense_baseline(t_len: usize, p: &BaselineKernelParams) -> Result<DMatrix<f64>> {
    build_dense_baseline_capped(t_len, p, DEFAULT_DENSE_CAP)
}

pub fn build_dense_baseline_capped(
    t_len: usize,
    p: &BaselineKernelParams,
    cap: usize,
) -> Result<DMatrix<f64>> {
    if t_len > cap {
        return Err(Error::DenseCapExceeded { size: t_len, cap });
    }
    Ok(DMatrix::from_fn(t_len, t_len, |i, j| {
        baseline_cov(i + 1, j + 1, p)
    }))
}

/// Dense D_max×D_max excitation Gram matrix.
pub fn build_dense_excitation(p: &ExcitationKernelParams) -> Result<DMatrix<f64>> {
    build_dense_excitation_capped(p, DEFAULT_DENSE_CAP)
}

pub fn build_dense_excitation_capped(
    p: &ExcitationKernelParams,
    cap: usize,
) -> Result<DMatrix<f64>> {
    if p.d_max > cap {
        return Err(Error::DenseCapExceeded {
            size: p.d_max,
            cap,
        });
    }
    Ok(DMatrix::from_fn(p.d_max, p.d_max, |i, j| {
        excitation_cov(i + 1, j + 1, p)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn exc(sigma_f: f64, ell_f: f64, beta: f64, d_max: usize) -> ExcitationKernelParams {
        ExcitationKernelParams::new(sigma_f, ell_f, beta, d_max)
    }

    #[test]
    fn envelope_values() {
        let p = exc(1.0, 10.0, 0.0, 50);
        for d in [1, 7, 50] {
            assert_eq!(amplitude_envelope(d, &p), 1.0);
        }
        let p = exc(2.0, 10.0, 0.2, 50);
        assert_relative_eq!(
            amplitude_envelope(10, &p),
            2.0 * (-1.0f64).exp(),
            max_relative = 1e-12
        );
        let p = exc(0.0, 10.0, 0.3, 50);
        assert_eq!(amplitude_envelope(5, &p), 0.0);
    }

    #[test]
    fn warp_values_and_monotonicity() {
        let p = exc(1.0, 10.0, 0.0, 50);
        assert_relative_eq!(lag_warp(5, &p), 0.5, max_relative = 1e-12);
        let p = exc(1.0, 10.0, 0.1, 50);
        assert_relative_eq!(
            lag_warp(1, &p),
            (1.0 - (-0.1f64).exp()) / 1.0,
            max_relative = 1e-12
        );
        for beta in [0.0, 0.05, 0.4] {
            let p = exc(1.0, 10.0, beta, 50);
            // Stay where the increment e^{-βd}(1-e^{-β}) is representable;
            // past βd ≈ 36 the warp saturates in f64.
            let d_cap = if beta > 0.0 { (30.0 / beta) as usize } else { 100 };
            for d in 1..d_cap.min(100) {
                assert!(lag_warp(d + 1, &p) > lag_warp(d, &p));
            }
        }
    }

    #[test]
    fn baseline_cov_values() {
        let mut p = BaselineKernelParams::new(1.0, 1.0, 4.0, 0.0);
        p.eps_b = 1e-300; // effectively disable jitter but keep it valid
        assert_relative_eq!(baseline_cov(3, 3, &p), 1.0, max_relative = 1e-12);
        // Full-period separation: sin(π) = 0.
        let p2 = BaselineKernelParams {
            sigma_per: 1.5,
            ell_per: 2.0,
            period: 4.0,
            sigma_lin: 0.0,
            sigma_const: 0.0,
            eps_b: 1e-300,
        };
        assert_relative_eq!(baseline_cov(5, 1, &p2), 1.5 * 1.5, max_relative = 1e-12);
        // t-s = 1, P = 4: sin²(π/4) = 1/2, ℓ = 1 gives exp(-1).
        assert_relative_eq!(
            baseline_cov(2, 1, &p),
            (-1.0f64).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn excitation_cov_values() {
        let mut p = exc(1.0, 10.0, 0.0, 50);
        p.eps_f = 1e-300;
        assert_relative_eq!(excitation_cov(7, 7, &p), 1.0, max_relative = 1e-12);
        // β = 0 recovers the stationary RBF.
        let mut p = exc(1.3, 8.0, 0.0, 50);
        p.eps_f = 1e-300;
        for (d, d2) in [(1, 5), (3, 20), (10, 11)] {
            let expect = 1.3 * 1.3
                * (-((d as f64 - d2 as f64).powi(2)) / (2.0 * 8.0 * 8.0)).exp();
            assert_relative_eq!(excitation_cov(d, d2, &p), expect, max_relative = 1e-12);
        }
        // Direct evaluation at β = 0.1.
        let mut p = exc(1.0, 10.0, 0.1, 50);
        p.eps_f = 1e-300;
        let a = (-0.05f64).exp() * (-0.1f64).exp();
        let gap = (1.0 - (-0.1f64).exp()) - (1.0 - (-0.2f64).exp());
        let expect = a * (-0.5 * gap * gap).exp();
        assert_relative_eq!(excitation_cov(1, 2, &p), expect, max_relative = 1e-12);
        assert!((excitation_cov(1, 2, &p) - 0.8575).abs() < 5e-4);
        // Diagonal closed form.
        let p = exc(1.2, 10.0, 0.3, 50);
        for d in [1, 4, 17] {
            let expect = 1.2 * 1.2 * (-0.3 * d as f64).exp() + p.eps_f * p.eps_f;
            assert_relative_eq!(excitation_cov(d, d, &p), expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn symmetry() {
        let bp = BaselineKernelParams::new(0.7, 2.0, 52.0, 1e-3);
        let ep = exc(1.1, 12.0, 0.25, 40);
        for (x, y) in [(1usize, 9usize), (3, 30), (14, 2)] {
            assert_eq!(baseline_cov(x, y, &bp), baseline_cov(y, x, &bp));
            assert_eq!(excitation_cov(x, y, &ep), excitation_cov(y, x, &ep));
        }
    }

    #[test]
    fn beta_continuity_at_limit() {
        let p_small = exc(1.4, 9.0, 1e-9, 60);
        let p_zero = exc(1.4, 9.0, 0.0, 60);
        for d in 1..=60 {
            for d2 in 1..=60 {
                let near = excitation_cov(d, d2, &p_small);
                let limit = excitation_cov(d, d2, &p_zero);
                assert_relative_eq!(near, limit, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn dense_one_by_one() {
        let p = BaselineKernelParams {
            sigma_per: 1.0,
            ell_per: 1.0,
            period: 52.0,
            sigma_lin: 0.5,
            sigma_const: 0.0,
            eps_b: 0.1,
        };
        let m = build_dense_baseline(1, &p).unwrap();
        assert_relative_eq!(m[(0, 0)], 1.0 + 0.25 + 0.01, max_relative = 1e-12);
    }

    #[test]
    fn dense_cap_refusal() {
        let p = BaselineKernelParams::new(1.0, 1.0, 52.0, 0.0);
        assert!(matches!(
            build_dense_baseline_capped(10, &p, 5),
            Err(Error::DenseCapExceeded { .. })
        ));
    }

    #[test]
    fn dense_symmetric_and_cholesky_50_trials() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let bp = BaselineKernelParams {
                sigma_per: rng.gen_range(0.0..2.0),
                ell_per: rng.gen_range(0.3..5.0),
                period: rng.gen_range(4.0..60.0),
                sigma_lin: rng.gen_range(0.0..0.05),
                sigma_const: 0.0,
                eps_b: rng.gen_range(1e-4..1e-2),
            };
            let ep = ExcitationKernelParams {
                sigma_f: rng.gen_range(0.0..2.0),
                ell_f: rng.gen_range(1.0..30.0),
                beta: rng.gen_range(0.0..0.5),
                eps_f: rng.gen_range(1e-4..1e-2),
                d_max: rng.gen_range(2..40),
            };
            let kb = build_dense_baseline(24, &bp).unwrap();
            let kf = build_dense_excitation(&ep).unwrap();
            for m in [&kb, &kf] {
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        assert_eq!(m[(i, j)], m[(j, i)]);
                    }
                }
            }
            assert!(kb.clone().cholesky().is_some(), "baseline not PD: {bp:?}");
            assert!(kf.clone().cholesky().is_some(), "excitation not PD: {ep:?}");
        }
    }

    /// K_f must equal A K_stat A + ε_f² I with A = diag(a(d)).
    #[test]
    fn envelope_factorization() {
        let p = exc(1.7, 11.0, 0.22, 35);
        let kf = build_dense_excitation(&p).unwrap();
        for d in 1..=p.d_max {
            for d2 in 1..=p.d_max {
                let fact = amplitude_envelope(d, &p)
                    * stationary_rbf(d, d2, &p)
                    * amplitude_envelope(d2, &p)
                    + if d == d2 { p.eps_f * p.eps_f } else { 0.0 };
                assert_relative_eq!(kf[(d - 1, d2 - 1)], fact, max_relative = 1e-12);
            }
        }
    }
}
