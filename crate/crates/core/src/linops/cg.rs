//! Preconditioned conjugate gradients for the collapsed-kernel solves.

use crate::linops::LinOp;

/// Outcome of a CG solve. Non-convergence is not an error: the best
/// iterate and residual are returned and the caller decides.
#[derive(Debug, Clone)]
pub struct CgResult {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Relative residual ‖Kx - b‖/‖b‖ at exit.
    pub residual: f64,
    pub converged: bool,
}

/// Default (tol, max_iter) tied to problem size. The iteration budget is
/// a multiple of the dimension: jittered collapsed kernels can be badly
/// conditioned and CG's finite-termination property degrades in floating
/// point.
pub fn cg_defaults(t_len: usize) -> (f64, usize) {
    (1e-8, 2 * t_len + 200)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `K x = rhs` with Jacobi (diagonal) preconditioning.
pub fn cg_solve(op: &dyn LinOp, rhs: &[f64], tol: f64, max_iter: usize) -> CgResult {
    let n = rhs.len();
    debug_assert_eq!(n, op.dim());
    let rhs_norm = dot(rhs, rhs).sqrt();
    if rhs_norm == 0.0 {
        return CgResult {
            solution: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }

    let inv_diag: Vec<f64> = match op.diagonal() {
        Some(d) => d
            .iter()
            .map(|&x| if x > 0.0 { 1.0 / x } else { 1.0 })
            .collect(),
        None => vec![1.0; n],
    };

    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);

    let mut best_x = x.clone();
    let mut best_res = 1.0;

    for iter in 1..=max_iter {
        let kp = op.apply(&p);
        let pkp = dot(&p, &kp);
        if pkp <= 0.0 || !pkp.is_finite() {
            // Operator numerically indefinite along p; stop with best iterate.
            return CgResult {
                solution: best_x,
                iterations: iter,
                residual: best_res,
                converged: false,
            };
        }
        let alpha = rz / pkp;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        let res = dot(&r, &r).sqrt() / rhs_norm;
        if res < best_res {
            best_res = res;
            best_x.copy_from_slice(&x);
        }
        if res <= tol {
            return CgResult {
                solution: x,
                iterations: iter,
                residual: res,
                converged: true,
            };
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    CgResult {
        solution: best_x,
        iterations: max_iter,
        residual: best_res,
        converged: false,
    }
}
