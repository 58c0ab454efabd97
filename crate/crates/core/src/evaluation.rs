//! One-step-ahead predictive log-likelihood (pLL) scoring and the
//! hyperparameter cross-validation grid harness.
//!
//! Scoring is plug-in Poisson: for each evaluation bin t, λ̂(t) is built
//! from the fitted model components and the *observed* history up to
//! t-1, and the per-bin term is the full Poisson log-probability
//! including log N!. For the GP model, the baseline on held-out bins is
//! the GP conditional-mean extension
//! `K_b(test, train) K_b(train, train)⁻¹ b̂(train)`.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decompose::project_components;
use crate::error::{Error, Result};
use crate::kernels::{
    baseline_cov_cross, BaselineKernelParams, ExcitationKernelParams, KernelHyperparams,
};
use crate::linops::{cg_defaults, cg_solve, BaselineOperator, CollapsedKernelOperator, LinOp, StatMode};
use crate::map_inference::{fit_map_with_operator, MapConfig};
use crate::parametric::{parametric_intensity, poisson_logpmf, ParametricDhpSpec};
use crate::series::SplitSpec;

/// A fitted GP-DHP reduced to what prediction needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpDhpModel {
    pub hyperparams: KernelHyperparams,
    /// Projected baseline b̂ over the training bins.
    pub b_hat_train: Vec<f64>,
    /// Projected excitation f̂ over lags 1..=d_max.
    pub f_hat: Vec<f64>,
    pub kappa_hat: f64,
}

impl GpDhpModel {
    pub fn train_len(&self) -> usize {
        self.b_hat_train.len()
    }

    /// Conditional-mean baseline extension weights w = K_b(train)⁻¹ b̂.
    fn extension_weights(&self) -> Result<Vec<f64>> {
        let n = self.train_len();
        let op = BaselineOperator::new(n, &self.hyperparams.baseline)?;
        let (tol, max_iter) = cg_defaults(n);
        let res = cg_solve(&BaselineLin(&op), &self.b_hat_train, tol, 2 * max_iter);
        if !res.converged && res.residual > 1e-6 {
            return Err(Error::CgNonConvergence {
                iterations: res.iterations,
                residual: res.residual,
            });
        }
        Ok(res.solution)
    }

    /// Baseline value at an arbitrary (1-based) bin: b̂(t) on the training
    /// range would equal the stored component up to jitter; beyond it,
    /// the GP conditional mean.
    pub fn baseline_at(&self, t: usize, weights: &[f64]) -> f64 {
        let p = &self.hyperparams.baseline;
        weights
            .iter()
            .enumerate()
            .map(|(j, w)| baseline_cov_cross(t, j + 1, p) * w)
            .sum()
    }
}

struct BaselineLin<'a>(&'a BaselineOperator);

impl LinOp for BaselineLin<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.0.apply(v).expect("dimension checked")
    }
    fn diagonal(&self) -> Option<Vec<f64>> {
        Some((1..=self.0.dim()).map(|t| self.0.diag_entry(t)).collect())
    }
}

/// Fit the GP-DHP on a training prefix and package it for prediction.
pub fn fit_gp_dhp(
    train_counts: &[u64],
    hp: &KernelHyperparams,
    map_cfg: &MapConfig,
) -> Result<(GpDhpModel, crate::map_inference::LatentFit)> {
    let series = crate::series::CountSeries::from_counts(train_counts.to_vec())?;
    let k = CollapsedKernelOperator::new(train_counts, hp, StatMode::Auto)?;
    let fit = fit_map_with_operator(&series, &k, map_cfg)?;
    let dec = project_components(&fit.ell_star, &k)?;
    Ok((
        GpDhpModel {
            hyperparams: *hp,
            b_hat_train: dec.b_hat,
            f_hat: dec.f_hat,
            kappa_hat: dec.kappa_hat,
        },
        fit,
    ))
}

/// The model being scored.
pub enum ModelRef<'a> {
    Gp(&'a GpDhpModel),
    Parametric(&'a ParametricDhpSpec),
}

/// pLL report for one model on one evaluation range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    /// 0-based half-open bin range scored.
    pub eval_start: usize,
    pub eval_end: usize,
    /// Total pLL; equals the sum of `per_bin`.
    pub pll: f64,
    pub per_bin: Vec<f64>,
    /// Bins where a non-positive intensity was floored.
    pub floored_bins: usize,
    pub kappa_hat: Option<f64>,
    pub notes: Vec<String>,
}

/// One-step-ahead predictive log-likelihood over `eval_range` (0-based
/// bin indices into `counts`).
pub fn predictive_loglik(
    model: &ModelRef,
    counts: &[u64],
    eval_range: Range<usize>,
    floor: f64,
) -> Result<EvalReport> {
    if eval_range.end > counts.len() || eval_range.start >= eval_range.end {
        return Err(Error::InvalidParameter(format!(
            "evaluation range {}..{} out of bounds for {} bins",
            eval_range.start,
            eval_range.end,
            counts.len()
        )));
    }
    let mut notes = Vec::new();
    let (label, lambdas, kappa) = match model {
        ModelRef::Parametric(spec) => {
            spec.validate()?;
            let lambdas: Vec<f64> = eval_range
                .clone()
                .map(|i| parametric_intensity(spec, counts, i + 1))
                .collect();
            (
                format!("parametric_{}", spec.baseline_form.label()),
                lambdas,
                Some(spec.kernel_mass()),
            )
        }
        ModelRef::Gp(gp) => {
            if eval_range.start < gp.train_len() {
                return Err(Error::InvalidParameter(
                    "evaluation range overlaps the GP training range".into(),
                ));
            }
            let weights = gp.extension_weights()?;
            notes.push(
                "baseline on held-out bins is the GP conditional-mean extension".into(),
            );
            let lambdas: Vec<f64> = eval_range
                .clone()
                .map(|i| {
                    let t = i + 1;
                    let mut lambda = gp.baseline_at(t, &weights);
                    for (idx, &f) in gp.f_hat.iter().enumerate() {
                        let d = idx + 1;
                        if d >= t {
                            break;
                        }
                        lambda += counts[t - 1 - d] as f64 * f;
                    }
                    lambda
                })
                .collect();
            ("gp_dhp".to_string(), lambdas, Some(gp.kappa_hat))
        }
    };

    let mut per_bin = Vec::with_capacity(lambdas.len());
    let mut floored = 0usize;
    for (lambda, i) in lambdas.iter().zip(eval_range.clone()) {
        let n = counts[i];
        // The rectified intensity is max{0, λ}; the floor only matters
        // where the log would diverge.
        let lam = lambda.max(0.0);
        if lam < floor && n > 0 {
            floored += 1;
        }
        per_bin.push(poisson_logpmf(n, lam, floor));
    }
    let pll = per_bin.iter().sum();
    Ok(EvalReport {
        model: label,
        eval_start: eval_range.start,
        eval_end: eval_range.end,
        pll,
        per_bin,
        floored_bins: floored,
        kappa_hat: kappa,
        notes,
    })
}

/// Hyperparameter grid for the GP-DHP cross-validation search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvGrid {
    pub beta: Vec<f64>,
    /// Periodic baseline amplitude σ_b.
    pub sigma_b: Vec<f64>,
    /// Periodic baseline length-scale ℓ_b.
    pub ell_b: Vec<f64>,
    /// Linear-trend amplitude.
    pub sigma_lin: Vec<f64>,
    pub sigma_f: Vec<f64>,
    pub ell_f: Vec<f64>,
}

impl Default for CvGrid {
    /// The published search ranges.
    fn default() -> Self {
        Self {
            beta: vec![0.1, 0.2, 0.3, 0.4],
            sigma_b: vec![0.0001, 0.01, 1.0],
            ell_b: vec![1.0, 5.0, 100.0],
            sigma_lin: vec![0.0, 1e-2, 1e-4],
            sigma_f: vec![0.5, 1.0, 2.0],
            ell_f: vec![5.0, 10.0, 20.0, 30.0],
        }
    }
}

impl CvGrid {
    pub fn validate(&self) -> Result<()> {
        if self.beta.is_empty()
            || self.sigma_b.is_empty()
            || self.ell_b.is_empty()
            || self.sigma_lin.is_empty()
            || self.sigma_f.is_empty()
            || self.ell_f.is_empty()
        {
            return Err(Error::InvalidParameter("empty grid axis".into()));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.beta.len()
            * self.sigma_b.len()
            * self.ell_b.len()
            * self.sigma_lin.len()
            * self.sigma_f.len()
            * self.ell_f.len()
    }

    /// Cells in fixed enumeration order (beta outermost, ell_f
    /// innermost); ties in the search break toward the earliest cell.
    pub fn cells(&self, fixed: &CvFixed) -> Vec<KernelHyperparams> {
        let mut out = Vec::with_capacity(self.n_cells());
        for &beta in &self.beta {
            for &sigma_b in &self.sigma_b {
                for &ell_b in &self.ell_b {
                    for &sigma_lin in &self.sigma_lin {
                        for &sigma_f in &self.sigma_f {
                            for &ell_f in &self.ell_f {
                                out.push(KernelHyperparams {
                                    baseline: BaselineKernelParams {
                                        sigma_per: sigma_b,
                                        ell_per: ell_b,
                                        period: fixed.period,
                                        sigma_lin,
                                        sigma_const: fixed.sigma_const,
                                        eps_b: fixed.eps_b,
                                    },
                                    excitation: ExcitationKernelParams {
                                        sigma_f,
                                        ell_f,
                                        beta,
                                        eps_f: fixed.eps_f,
                                        d_max: fixed.d_max,
                                    },
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Grid-independent settings shared by every cell.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CvFixed {
    pub period: f64,
    pub d_max: usize,
    pub sigma_const: f64,
    pub eps_b: f64,
    pub eps_f: f64,
    pub likelihood_floor: f64,
}

impl Default for CvFixed {
    fn default() -> Self {
        Self {
            period: 52.0,
            d_max: 100,
            sigma_const: 0.0,
            eps_b: 1e-2,
            eps_f: 1e-2,
            likelihood_floor: 1e-10,
        }
    }
}

/// One row of the audit table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvRow {
    pub index: usize,
    pub hyperparams: KernelHyperparams,
    pub valid_pll: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvOutcome {
    pub best: KernelHyperparams,
    pub best_index: usize,
    pub best_pll: f64,
    pub table: Vec<CvRow>,
    pub failures: usize,
}

fn run_cell(
    counts: &[u64],
    split: &SplitSpec,
    hp: &KernelHyperparams,
    map_cfg: &MapConfig,
    floor: f64,
) -> Result<f64> {
    let train = &counts[..split.train_end];
    let (model, _) = fit_gp_dhp(train, hp, map_cfg)?;
    let report = predictive_loglik(
        &ModelRef::Gp(&model),
        counts,
        split.train_end..split.valid_end,
        floor,
    )?;
    Ok(report.pll)
}

/// Fit each grid cell on the training split and pick the cell with the
/// best validation pLL. Failed cells are excluded and recorded.
pub fn cv_grid_search(
    counts: &[u64],
    split: &SplitSpec,
    grid: &CvGrid,
    fixed: &CvFixed,
    map_cfg: &MapConfig,
) -> Result<CvOutcome> {
    grid.validate()?;
    if split.train_end == 0 || split.valid_end <= split.train_end || split.valid_end > counts.len()
    {
        return Err(Error::InvalidSplit(format!(
            "train 0..{} / valid ..{} invalid for {} bins",
            split.train_end,
            split.valid_end,
            counts.len()
        )));
    }
    let cells = grid.cells(fixed);
    let table: Vec<CvRow> = cells
        .par_iter()
        .enumerate()
        .map(|(index, hp)| {
            match run_cell(counts, split, hp, map_cfg, fixed.likelihood_floor) {
                Ok(pll) if pll.is_finite() => CvRow {
                    index,
                    hyperparams: *hp,
                    valid_pll: Some(pll),
                    status: "ok".into(),
                },
                Ok(pll) => CvRow {
                    index,
                    hyperparams: *hp,
                    valid_pll: None,
                    status: format!("non-finite pLL {pll}"),
                },
                Err(e) => CvRow {
                    index,
                    hyperparams: *hp,
                    valid_pll: None,
                    status: format!("error: {e}"),
                },
            }
        })
        .collect();

    let failures = table.iter().filter(|r| r.valid_pll.is_none()).count();
    // Earliest-index tie-break: strict improvement required to replace.
    let mut best: Option<(usize, f64)> = None;
    for row in &table {
        if let Some(pll) = row.valid_pll {
            if best.map_or(true, |(_, b)| pll > b) {
                best = Some((row.index, pll));
            }
        }
    }
    let (best_index, best_pll) =
        best.ok_or_else(|| Error::OptimizationFailed("all grid cells failed".into()))?;
    Ok(CvOutcome {
        best: cells[best_index],
        best_index,
        best_pll,
        table,
        failures,
    })
}
