//! Fast multiply for the baseline covariance K_b.
//!
//! The periodic (seasonal) component is stationary on the integer grid and
//! multiplies through a circulant-embedded Toeplitz; the linear-trend and
//! constant components are rank one and apply as inner products; jitter is
//! diagonal.

use crate::error::{Error, Result};
use crate::kernels::{baseline_periodic_at_lag, BaselineKernelParams};
use crate::linops::toeplitz::SymToeplitz;

pub struct BaselineOperator {
    params: BaselineKernelParams,
    t_len: usize,
    periodic: SymToeplitz,
}

impl BaselineOperator {
    pub fn new(t_len: usize, params: &BaselineKernelParams) -> Result<Self> {
        params.validate()?;
        if t_len == 0 {
            return Err(Error::InvalidParameter("empty horizon".into()));
        }
        let first_col: Vec<f64> = (0..t_len)
            .map(|tau| baseline_periodic_at_lag(tau, params))
            .collect();
        Ok(Self {
            params: *params,
            t_len,
            periodic: SymToeplitz::new(&first_col),
        })
    }

    pub fn dim(&self) -> usize {
        self.t_len
    }

    pub fn params(&self) -> &BaselineKernelParams {
        &self.params
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.t_len {
            return Err(Error::DimensionMismatch {
                expected: self.t_len,
                got: v.len(),
            });
        }
        let mut out = self.periodic.apply(v);
        let p = &self.params;
        // Rank-one linear term: σ_lin² t (tᵀ v), with t = (1, ..., T).
        if p.sigma_lin > 0.0 {
            let tv: f64 = v
                .iter()
                .enumerate()
                .map(|(i, &x)| (i + 1) as f64 * x)
                .sum();
            let s2 = p.sigma_lin * p.sigma_lin;
            for (i, o) in out.iter_mut().enumerate() {
                *o += s2 * (i + 1) as f64 * tv;
            }
        }
        if p.sigma_const > 0.0 {
            let sum: f64 = v.iter().sum();
            let c2 = p.sigma_const * p.sigma_const;
            for o in out.iter_mut() {
                *o += c2 * sum;
            }
        }
        let j2 = p.eps_b * p.eps_b;
        for (o, &x) in out.iter_mut().zip(v) {
            *o += j2 * x;
        }
        Ok(out)
    }

    /// Exact diagonal K_b(t,t), 1-based t.
    pub fn diag_entry(&self, t: usize) -> f64 {
        let p = &self.params;
        p.sigma_per * p.sigma_per
            + p.sigma_lin * p.sigma_lin * (t as f64) * (t as f64)
            + p.sigma_const * p.sigma_const
            + p.eps_b * p.eps_b
    }
}
