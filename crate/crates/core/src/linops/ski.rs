//! Structured kernel interpolation for the warped-RBF excitation block.
//!
//! `K_stat` is stationary in the warped lag `u(d) = g(d)` but not Toeplitz
//! in the integer lag, so we interpolate onto a uniform grid of M inducing
//! points in the u-domain: `K_stat ≈ W K_U Wᵀ` with W sparse (cubic
//! 4-point rows, linear at the grid edges) and `K_U` Toeplitz.

use crate::error::{Error, Result};
use crate::kernels::{lag_warp, ExcitationKernelParams};
use crate::linops::toeplitz::SymToeplitz;

/// One sparse interpolation row: up to 4 contiguous grid weights.
#[derive(Debug, Clone, Copy)]
struct InterpRow {
    start: usize,
    weights: [f64; 4],
    nnz: usize,
}

pub struct SkiOperator {
    m: usize,
    d_max: usize,
    grid_min: f64,
    spacing: f64,
    rows: Vec<InterpRow>,
    k_u: SymToeplitz,
}

impl SkiOperator {
    /// Build the grid and interpolation weights for lags `1..=d_max`.
    pub fn build(p: &ExcitationKernelParams, m: usize) -> Result<Self> {
        if m < 4 {
            return Err(Error::InvalidParameter(format!(
                "SKI grid needs at least 4 inducing points, got {m}"
            )));
        }
        if p.d_max < 2 {
            return Err(Error::InvalidParameter(
                "SKI needs d_max >= 2; use the dense path for a single lag".into(),
            ));
        }
        let u_min = lag_warp(1, p);
        let u_max = lag_warp(p.d_max, p);
        let spacing = (u_max - u_min) / (m - 1) as f64;
        if !(spacing > 0.0) {
            return Err(Error::InvalidParameter(
                "degenerate warped-lag span for SKI grid".into(),
            ));
        }

        let rows = (1..=p.d_max)
            .map(|d| interp_row(lag_warp(d, p), u_min, spacing, m))
            .collect();

        // RBF on the uniform grid depends only on |i-j| * spacing.
        let first_col: Vec<f64> = (0..m)
            .map(|k| {
                let gap = k as f64 * spacing;
                (-0.5 * gap * gap).exp()
            })
            .collect();

        Ok(Self {
            m,
            d_max: p.d_max,
            grid_min: u_min,
            spacing,
            rows,
            k_u: SymToeplitz::new(&first_col),
        })
    }

    pub fn inducing_points(&self) -> usize {
        self.m
    }

    pub fn grid_point(&self, i: usize) -> f64 {
        self.grid_min + i as f64 * self.spacing
    }

    /// `Wᵀ v` for v of length d_max.
    pub fn interp_transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        for (row, &val) in self.rows.iter().zip(v) {
            for k in 0..row.nnz {
                out[row.start + k] += row.weights[k] * val;
            }
        }
        out
    }

    /// `W z` for z on the grid.
    pub fn interp_forward(&self, z: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| {
                (0..row.nnz)
                    .map(|k| row.weights[k] * z[row.start + k])
                    .sum()
            })
            .collect()
    }

    /// `W K_U Wᵀ v`, the fast approximation to `K_stat v`.
    pub fn apply_stat(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.d_max {
            return Err(Error::DimensionMismatch {
                expected: self.d_max,
                got: v.len(),
            });
        }
        let wt = self.interp_transpose(v);
        let ku = self.k_u.apply(&wt);
        Ok(self.interp_forward(&ku))
    }

    /// Row sums of W (partition of unity holds by construction).
    pub fn row_sums(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.weights[..row.nnz].iter().sum())
            .collect()
    }
}

fn interp_row(u: f64, u_min: f64, spacing: f64, m: usize) -> InterpRow {
    let s = (u - u_min) / spacing;
    let i = (s.floor() as isize).clamp(0, m as isize - 2) as usize;
    let t = s - i as f64;
    if i >= 1 && i + 2 < m {
        // Cubic Lagrange on knots i-1, i, i+1, i+2 at local coordinate t.
        let w0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        let w2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
        let w3 = (t + 1.0) * t * (t - 1.0) / 6.0;
        InterpRow {
            start: i - 1,
            weights: [w0, w1, w2, w3],
            nnz: 4,
        }
    } else {
        InterpRow {
            start: i,
            weights: [1.0 - t, t, 0.0, 0.0],
            nnz: 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::stationary_rbf;

    fn params(beta: f64, ell_f: f64, d_max: usize) -> ExcitationKernelParams {
        ExcitationKernelParams::new(1.0, ell_f, beta, d_max)
    }

    /// Dense K_stat oracle for measuring interpolation error.
    fn max_abs_error(p: &ExcitationKernelParams, m: usize) -> f64 {
        let ski = SkiOperator::build(p, m).unwrap();
        let mut worst = 0.0f64;
        for j in 0..p.d_max {
            let mut e = vec![0.0; p.d_max];
            e[j] = 1.0;
            let col = ski.apply_stat(&e).unwrap();
            for i in 0..p.d_max {
                let exact = stationary_rbf(i + 1, j + 1, p);
                worst = worst.max((col[i] - exact).abs());
            }
        }
        worst
    }

    #[test]
    fn rejects_tiny_grid() {
        let p = params(0.1, 10.0, 32);
        assert!(SkiOperator::build(&p, 3).is_err());
    }

    #[test]
    fn row_sums_are_one() {
        for (beta, m) in [(0.0, 8), (0.1, 16), (0.35, 31)] {
            let p = params(beta, 10.0, 64);
            let ski = SkiOperator::build(&p, m).unwrap();
            for s in ski.row_sums() {
                assert!((s - 1.0).abs() < 1e-12, "row sum {s}");
            }
        }
    }

    /// With β in the limit branch the warp is linear, so m = d_max puts a
    /// knot exactly at every u(d): interpolation is the identity pattern.
    #[test]
    fn exact_at_knots() {
        let p = params(0.0, 10.0, 32);
        let err = max_abs_error(&p, 32);
        assert!(err < 1e-12, "error {err}");
    }

    #[test]
    fn error_decreases_with_grid_size() {
        let p = params(0.1, 10.0, 64);
        let errs: Vec<f64> = [8, 16, 32, 64].iter().map(|&m| max_abs_error(&p, m)).collect();
        for w in errs.windows(2) {
            assert!(w[1] < w[0], "errors not decreasing: {errs:?}");
        }
    }
}
