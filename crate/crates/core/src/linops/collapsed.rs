//! The collapsed kernel operator `K = K_b + X K_f Xᵀ`.
//!
//! The excitation block composes as `X A (W K_U Wᵀ) A Xᵀ + ε_f² X Xᵀ`,
//! using the envelope factorization `K_f = A K_stat A + ε_f² I`. Every
//! piece multiplies in O(T log T) or better.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::{amplitude_envelope, build_dense_excitation_capped, KernelHyperparams};
use crate::linops::baseline::BaselineOperator;
use crate::linops::lag::LagDesignOperator;
use crate::linops::ski::SkiOperator;
use crate::linops::LinOp;

/// How the stationary warped-RBF block multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatMode {
    /// SKI grid approximation with M inducing points.
    Ski { m: usize },
    /// Exact dense d_max×d_max multiply (small lags only).
    Dense,
    /// SKI with the default grid size `min(d_max, 128)`, falling back to
    /// dense when d_max is too small for a cubic grid.
    Auto,
}

enum StatApply {
    Ski(SkiOperator),
    Dense(DMatrix<f64>),
}

/// Multiplies by the excitation covariance `K_f = A K_stat A + ε_f² I`.
pub struct ExcitationOperator {
    envelope: Vec<f64>,
    eps_sq: f64,
    d_max: usize,
    stat: StatApply,
}

impl ExcitationOperator {
    pub fn new(hp: &KernelHyperparams, mode: StatMode) -> Result<Self> {
        let p = &hp.excitation;
        p.validate()?;
        let d_max = p.d_max;
        let envelope: Vec<f64> = (1..=d_max).map(|d| amplitude_envelope(d, p)).collect();
        let stat = match mode {
            StatMode::Dense => StatApply::Dense(dense_stat(p)),
            StatMode::Ski { m } => StatApply::Ski(SkiOperator::build(p, m)?),
            StatMode::Auto => {
                if d_max < 8 {
                    StatApply::Dense(dense_stat(p))
                } else {
                    StatApply::Ski(SkiOperator::build(p, d_max.min(128))?)
                }
            }
        };
        Ok(Self {
            envelope,
            eps_sq: p.eps_f * p.eps_f,
            d_max,
            stat,
        })
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    /// `K_f v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.d_max {
            return Err(Error::DimensionMismatch {
                expected: self.d_max,
                got: v.len(),
            });
        }
        let scaled: Vec<f64> = v.iter().zip(&self.envelope).map(|(x, a)| x * a).collect();
        let mut core = match &self.stat {
            StatApply::Ski(ski) => ski.apply_stat(&scaled)?,
            StatApply::Dense(k) => {
                let out = k * nalgebra::DVector::from_column_slice(&scaled);
                out.as_slice().to_vec()
            }
        };
        for ((c, a), x) in core.iter_mut().zip(&self.envelope).zip(v) {
            *c = *c * a + self.eps_sq * x;
        }
        Ok(core)
    }
}

fn dense_stat(p: &crate::kernels::ExcitationKernelParams) -> DMatrix<f64> {
    DMatrix::from_fn(p.d_max, p.d_max, |i, j| {
        crate::kernels::stationary_rbf(i + 1, j + 1, p)
    })
}

/// The collapsed prior covariance as a fast symmetric operator.
pub struct CollapsedKernelOperator {
    baseline: BaselineOperator,
    excitation: ExcitationOperator,
    lag: LagDesignOperator,
    diag: Vec<f64>,
    t_len: usize,
    hp_eff: KernelHyperparams,
}

impl CollapsedKernelOperator {
    /// Build for a count series; `d_max` is clamped to T-1 internally
    /// (lags beyond the horizon never touch the design matrix).
    pub fn new(counts: &[u64], hp: &KernelHyperparams, mode: StatMode) -> Result<Self> {
        hp.validate()?;
        let t_len = counts.len();
        if t_len == 0 {
            return Err(Error::InvalidParameter("empty series".into()));
        }
        let mut hp_eff = *hp;
        hp_eff.excitation.d_max = hp.excitation.d_max.min(t_len.saturating_sub(1)).max(1);

        let baseline = BaselineOperator::new(t_len, &hp_eff.baseline)?;
        let excitation = ExcitationOperator::new(&hp_eff, mode)?;
        let lag = LagDesignOperator::new(counts, hp_eff.excitation.d_max);
        let diag = exact_diagonal(&baseline, &lag, &hp_eff)?;
        Ok(Self {
            baseline,
            excitation,
            lag,
            diag,
            t_len,
            hp_eff,
        })
    }

    /// Effective hyperparameters (with d_max clamped to T-1).
    pub fn hyperparams(&self) -> &KernelHyperparams {
        &self.hp_eff
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn d_max(&self) -> usize {
        self.excitation.d_max
    }

    pub fn baseline_op(&self) -> &BaselineOperator {
        &self.baseline
    }

    pub fn excitation_op(&self) -> &ExcitationOperator {
        &self.excitation
    }

    pub fn lag_op(&self) -> &LagDesignOperator {
        &self.lag
    }

    /// Exact diagonal entries of K (not through the SKI approximation).
    pub fn diagonal_entries(&self) -> &[f64] {
        &self.diag
    }

    /// `K v = K_b v + X K_f Xᵀ v`.
    pub fn apply_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.baseline.apply(v)?;
        let xt = self.lag.transpose(v)?;
        let kf_xt = self.excitation.apply(&xt)?;
        let exc = self.lag.forward(&kf_xt)?;
        for (o, e) in out.iter_mut().zip(exc) {
            *o += e;
        }
        Ok(out)
    }
}

impl LinOp for CollapsedKernelOperator {
    fn dim(&self) -> usize {
        self.t_len
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.apply_vec(v).expect("dimension checked by caller")
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        Some(self.diag.clone())
    }
}

/// Exact diag(K). The excitation part is `x_tᵀ K_f x_t` per row x_t of X;
/// with `K_f = L Lᵀ` each column of L contributes one lag convolution, so
/// the whole diagonal costs d_max FFT multiplies.
fn exact_diagonal(
    baseline: &BaselineOperator,
    lag: &LagDesignOperator,
    hp: &KernelHyperparams,
) -> Result<Vec<f64>> {
    let t_len = baseline.dim();
    let d_max = hp.excitation.d_max;
    let mut diag: Vec<f64> = (1..=t_len).map(|t| baseline.diag_entry(t)).collect();

    let kf = build_dense_excitation_capped(&hp.excitation, usize::MAX)?;
    let chol = kf
        .cholesky()
        .ok_or_else(|| Error::Other("excitation kernel not positive definite".into()))?;
    let l = chol.l();
    for m in 0..d_max {
        // Column m of L is zero above the diagonal.
        let col: Vec<f64> = (0..d_max).map(|d| l[(d, m)]).collect();
        let conv = lag.forward(&col)?;
        for (di, c) in diag.iter_mut().zip(conv) {
            *di += c * c;
        }
    }
    Ok(diag)
}
