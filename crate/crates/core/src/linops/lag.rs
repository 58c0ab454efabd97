//! The lagged-count design operator X.
//!
//! `X` is T×D_max with `X[t,d] = N(t-d)` for `1 <= d <= min(t-1, D_max)`
//! and 0 otherwise. Both `Xv` and `Xᵀy` are linear (cross-)correlations
//! with the count sequence and run through one cached FFT of the counts.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;

pub struct LagDesignOperator {
    counts: Vec<f64>,
    t_len: usize,
    d_max: usize,
    counts_spec: Vec<Complex64>,
}

impl LagDesignOperator {
    pub fn new(counts: &[u64], d_max: usize) -> Self {
        let counts_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let t_len = counts_f.len();
        let len = fft::fft_len(t_len + d_max + 1);
        let counts_spec = fft::forward(&counts_f, len);
        Self {
            counts: counts_f,
            t_len,
            d_max,
            counts_spec,
        }
    }

    pub fn rows(&self) -> usize {
        self.t_len
    }

    pub fn cols(&self) -> usize {
        self.d_max
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    /// `w = X v`: `w(t) = Σ_d N(t-d) v(d)`.
    pub fn forward(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.d_max {
            return Err(Error::DimensionMismatch {
                expected: self.d_max,
                got: v.len(),
            });
        }
        // w(t) = conv(N, v)(t-1) in 0-based terms, with w(1) = 0.
        let conv = fft::convolve_spec(&self.counts_spec, v);
        let mut out = vec![0.0; self.t_len];
        for i in 1..self.t_len {
            out[i] = conv[i - 1];
        }
        Ok(out)
    }

    /// `u = Xᵀ y`: `u(d) = Σ_t N(t-d) y(t)`.
    pub fn transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.t_len {
            return Err(Error::DimensionMismatch {
                expected: self.t_len,
                got: y.len(),
            });
        }
        let corr = fft::correlate_spec(&self.counts_spec, y);
        Ok(corr[1..=self.d_max].to_vec())
    }
}
