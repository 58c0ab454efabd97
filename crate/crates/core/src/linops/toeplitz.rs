//! Symmetric Toeplitz multiply via circulant embedding.

use num_complex::Complex64;

use crate::fft;

/// Symmetric Toeplitz matrix stored as the FFT of its circulant embedding.
///
/// The n×n matrix with entries `c(|i-j|)` embeds into a circulant of
/// power-of-two size L >= 2n whose first column is
/// `[c(0), ..., c(n-1), 0, ..., 0, c(n-1), ..., c(1)]`; a multiply is one
/// forward and one inverse FFT.
pub struct SymToeplitz {
    n: usize,
    len: usize,
    spec: Vec<Complex64>,
    first_col: Vec<f64>,
}

impl SymToeplitz {
    /// Build from the first column `c(0..n-1)`.
    pub fn new(first_col: &[f64]) -> Self {
        let n = first_col.len();
        let len = fft::fft_len((2 * n).max(2));
        let mut circ = vec![0.0; len];
        circ[..n].copy_from_slice(first_col);
        for k in 1..n {
            circ[len - k] = first_col[k];
        }
        let spec = fft::forward(&circ, len);
        Self {
            n,
            len,
            spec,
            first_col: first_col.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn first_col(&self) -> &[f64] {
        &self.first_col
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        let mut out = fft::convolve_spec(&self.spec, v);
        out.truncate(self.n);
        out
    }

    /// Eigenvalues of the circulant embedding (real parts of the spectrum).
    /// Used by the stationary sampler; small negatives from rounding are
    /// the caller's concern.
    pub fn embedding_eigenvalues(&self) -> Vec<f64> {
        self.spec.iter().map(|c| c.re).collect()
    }

    pub fn embedding_len(&self) -> usize {
        self.len
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_dense_multiply() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1usize, 2, 5, 17] {
            let col: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let op = SymToeplitz::new(&col);
            let fast = op.apply(&v);
            for i in 0..n {
                let mut expect = 0.0;
                for j in 0..n {
                    expect += col[i.abs_diff(j)] * v[j];
                }
                assert_relative_eq!(fast[i], expect, epsilon = 1e-10, max_relative = 1e-10);
            }
        }
    }
}
