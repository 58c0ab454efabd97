//! Command-line entry point wiring all modules together.
//!
//! Subcommands: `simulate`, `fit`, `decompose`, `eval`, `cv`, `bench`,
//! `figures`. Structured outputs are JSON; anything a plot consumes is
//! CSV with a header row. Every artifact directory gets a resolved
//! configuration snapshot including the tool version and the seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::decompose::{laplace_bands, project_components, BandsConfig};
use crate::error::{Error, Result};
use crate::evaluation::{
    cv_grid_search, fit_gp_dhp, predictive_loglik, CvFixed, CvGrid, EvalReport, GpDhpModel,
    ModelRef,
};
use crate::kernels::{BaselineKernelParams, ExcitationKernelParams, KernelHyperparams};
use crate::map_inference::{fit_map, MapConfig};
use crate::parametric::{fit_parametric_mle, BaselineForm, ParametricFitConfig};
use crate::series::{load_counts, save_counts, CountSeries, SplitSpec};
use crate::simulate::{
    simulate_dhp, BaselineFamilySpec, ExcitationFamily, ExcitationFamilySpec, SimConfig,
};

#[derive(Parser, Debug)]
#[command(
    name = "gpdhp",
    version,
    about = "Gaussian process discrete Hawkes process: fit, decompose, simulate, benchmark"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a discrete Hawkes count series from a parametric family.
    Simulate(Opts),
    /// MAP-fit the latent intensity on a count series.
    Fit(Opts),
    /// Fit, then project into baseline/excitation with Laplace bands.
    Decompose(Opts),
    /// Score a single model's predictive log-likelihood on a held-out split.
    Eval(Opts),
    /// Cross-validation grid search over GP hyperparameters.
    Cv(Opts),
    /// Fit the four parametric benchmarks plus the GP model and compare pLL.
    Bench(Opts),
    /// Regenerate the synthetic-experiment CSV bundles.
    Figures(Opts),
}

/// Shared flags. File-config values are the base; flags override them.
#[derive(Args, Debug, Clone)]
struct Opts {
    /// Input count series CSV (`count` or `t,count` columns).
    #[arg(long)]
    input: Option<PathBuf>,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output artifact directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Root random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Split as `train_end,valid_end,test_end` (1-based inclusive bins).
    #[arg(long, value_parser = parse_split)]
    split: Option<SplitSpec>,
    /// Model for `eval`: gpdhp or a parametric baseline form.
    #[arg(long, value_enum)]
    model: Option<ModelChoice>,
    /// Seasonal period in bins.
    #[arg(long)]
    period: Option<f64>,
    /// Maximum excitation lag D_max.
    #[arg(long)]
    dmax: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModelChoice {
    Gpdhp,
    Const,
    Linear,
    Sin,
    Linsin,
}

impl ModelChoice {
    fn parametric_form(self) -> Option<BaselineForm> {
        match self {
            ModelChoice::Gpdhp => None,
            ModelChoice::Const => Some(BaselineForm::Constant),
            ModelChoice::Linear => Some(BaselineForm::Linear),
            ModelChoice::Sin => Some(BaselineForm::Sinusoidal),
            ModelChoice::Linsin => Some(BaselineForm::LinearSinusoidal),
        }
    }
}

fn parse_split(s: &str) -> std::result::Result<SplitSpec, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected train_end,valid_end,test_end".into());
    }
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| p.trim().parse().map_err(|_| format!("bad integer '{p}'")))
        .collect::<std::result::Result<_, String>>()?;
    SplitSpec::new(nums[0], nums[1], nums[2]).map_err(|e| e.to_string())
}

/// Optional sections of the JSON config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    hyperparams: Option<KernelHyperparams>,
    map: Option<MapConfig>,
    bands: Option<BandsConfig>,
    grid: Option<CvGrid>,
    cv_fixed: Option<CvFixed>,
    parametric: Option<ParametricFitConfig>,
    sim_baseline: Option<BaselineFamilySpec>,
    sim_excitation: Option<ExcitationFamilySpec>,
    t_len: Option<usize>,
    likelihood_floor: Option<f64>,
}

/// Everything a run needs after merging file config and flag overrides.
struct Resolved {
    opts: Opts,
    file: FileConfig,
    seed: u64,
}

impl Resolved {
    fn new(opts: Opts) -> Result<Self> {
        let file = match &opts.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text)?
            }
            None => FileConfig::default(),
        };
        let seed = opts.seed.unwrap_or(0);
        Ok(Self { opts, file, seed })
    }

    fn input_series(&self) -> Result<CountSeries> {
        let path = self
            .opts
            .input
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("--input is required".into()))?;
        load_counts(path)
    }

    fn split(&self) -> Result<SplitSpec> {
        self.opts
            .split
            .ok_or_else(|| Error::InvalidParameter("--split is required".into()))
    }

    fn period(&self) -> f64 {
        self.opts.period.unwrap_or(52.0)
    }

    fn d_max(&self) -> usize {
        self.opts.dmax.unwrap_or(100)
    }

    fn floor(&self) -> f64 {
        self.file.likelihood_floor.unwrap_or(1e-10)
    }

    fn map_cfg(&self) -> MapConfig {
        self.file.map.unwrap_or_default()
    }

    fn hyperparams(&self) -> KernelHyperparams {
        let mut hp = self.file.hyperparams.unwrap_or(KernelHyperparams {
            baseline: BaselineKernelParams {
                sigma_per: 1.0,
                ell_per: 5.0,
                period: self.period(),
                sigma_lin: 1e-2,
                sigma_const: 0.0,
                eps_b: 1e-2,
            },
            excitation: ExcitationKernelParams {
                sigma_f: 1.0,
                ell_f: 10.0,
                beta: 0.2,
                eps_f: 1e-2,
                d_max: self.d_max(),
            },
        });
        // Flags override file values.
        if let Some(p) = self.opts.period {
            hp.baseline.period = p;
        }
        if let Some(d) = self.opts.dmax {
            hp.excitation.d_max = d;
        }
        hp
    }

    /// Scored range: the test segment when present, otherwise validation.
    fn eval_range(&self, series_len: usize) -> Result<(SplitSpec, std::ops::Range<usize>)> {
        let split = self.split()?;
        if split.test_end > series_len {
            return Err(Error::InvalidSplit(format!(
                "test_end ({}) exceeds series length ({series_len})",
                split.test_end
            )));
        }
        let range = if split.test_end > split.valid_end {
            split.valid_end..split.test_end
        } else {
            split.train_end..split.valid_end
        };
        Ok((split, range))
    }

    fn snapshot(&self, command: &str) -> serde_json::Value {
        json!({
            "tool": "gpdhp",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": self.seed,
            "input": self.opts.input,
            "split": self.opts.split,
            "model": self.opts.model,
            "period": self.opts.period,
            "dmax": self.opts.dmax,
            "config_file": self.opts.config,
            "config": self.file,
        })
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            // Locale-independent numeric formatting via Rust's default
            // float display.
            let _ = write!(out, "{v}");
            first = false;
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn prepare_out(r: &Resolved, command: &str) -> Result<PathBuf> {
    let dir = r.opts.out.clone();
    std::fs::create_dir_all(&dir)?;
    write_json(&dir.join("resolved_config.json"), &r.snapshot(command))?;
    Ok(dir)
}

fn default_sim_excitation(d_max: usize) -> ExcitationFamilySpec {
    ExcitationFamilySpec {
        family: ExcitationFamily::NegativeBinomial {
            alpha: 0.6,
            r: 2.0,
            p: 0.6,
        },
        d_max,
    }
}

fn cmd_simulate(r: &Resolved) -> Result<()> {
    let dir = prepare_out(r, "simulate")?;
    let baseline = r
        .file
        .sim_baseline
        .unwrap_or_else(|| BaselineFamilySpec::constant(1.0));
    let excitation = r
        .file
        .sim_excitation
        .unwrap_or_else(|| default_sim_excitation(r.opts.dmax.unwrap_or(30)));
    let t_len = r.file.t_len.unwrap_or(1000);
    let result = simulate_dhp(
        &baseline,
        Some(&excitation),
        &SimConfig {
            t_len,
            seed: r.seed,
        },
    )?;
    save_counts(&result.series, &dir.join("series.csv"))?;
    write_json(&dir.join("simulation.json"), &result)?;
    let kernel_rows: Vec<Vec<f64>> = result
        .kernel
        .iter()
        .enumerate()
        .map(|(i, &phi)| vec![(i + 1) as f64, phi])
        .collect();
    write_csv(&dir.join("true_kernel.csv"), "d,phi", &kernel_rows)?;
    eprintln!(
        "simulated {t_len} bins, {} events, branching sum {:.4}",
        result.series.total(),
        result.branching_sum
    );
    Ok(())
}

fn cmd_fit(r: &Resolved) -> Result<()> {
    let dir = prepare_out(r, "fit")?;
    let series = r.input_series()?;
    let hp = r.hyperparams();
    let (fit, _) = fit_map(&series, &hp, &r.map_cfg())?;
    let rows: Vec<Vec<f64>> = (0..series.len())
        .map(|i| {
            vec![
                (i + 1) as f64,
                series.counts[i] as f64,
                fit.ell_star[i],
                fit.ell_star[i].max(0.0),
            ]
        })
        .collect();
    write_csv(&dir.join("intensity.csv"), "t,count,ell_star,lambda", &rows)?;
    write_json(&dir.join("fit.json"), &fit)?;
    write_json(&dir.join("hyperparams.json"), &hp)?;
    eprintln!(
        "fit: converged={} newton_iters={} grad_norm={:.3e}",
        fit.converged, fit.newton_iterations, fit.grad_norm_final
    );
    Ok(())
}

fn cmd_decompose(r: &Resolved) -> Result<()> {
    let dir = prepare_out(r, "decompose")?;
    let series = r.input_series()?;
    let hp = r.hyperparams();
    let (fit, k) = fit_map(&series, &hp, &r.map_cfg())?;
    let dec = project_components(&fit.ell_star, &k)?;
    let mut bands_cfg = r.file.bands.clone().unwrap_or_default();
    if r.opts.seed.is_some() {
        bands_cfg.seed = r.seed;
    }
    let bands = laplace_bands(&fit, &series.counts, &k, &bands_cfg)?;
    let b_rows: Vec<Vec<f64>> = (0..series.len())
        .map(|i| {
            vec![
                (i + 1) as f64,
                dec.b_hat[i],
                bands.b_lower[i],
                bands.b_upper[i],
            ]
        })
        .collect();
    write_csv(&dir.join("baseline_plot.csv"), "t,b_hat,lower,upper", &b_rows)?;
    let f_rows: Vec<Vec<f64>> = (0..dec.f_hat.len())
        .map(|i| {
            vec![
                (i + 1) as f64,
                dec.f_hat[i],
                bands.f_lower[i],
                bands.f_upper[i],
            ]
        })
        .collect();
    write_csv(
        &dir.join("excitation_plot.csv"),
        "d,f_hat,lower,upper",
        &f_rows,
    )?;
    write_json(&dir.join("fit.json"), &fit)?;
    write_json(&dir.join("decomposition.json"), &dec)?;
    write_json(&dir.join("bands.json"), &bands)?;
    eprintln!(
        "decompose: kappa_hat={:.4} residual={:.3e}",
        dec.kappa_hat, dec.reconstruction_residual
    );
    Ok(())
}

fn cmd_eval(r: &Resolved) -> Result<()> {
    let dir = prepare_out(r, "eval")?;
    let series = r.input_series()?;
    let (split, range) = r.eval_range(series.len())?;
    let model = r
        .opts
        .model
        .ok_or_else(|| Error::InvalidParameter("--model is required".into()))?;
    let train = &series.counts[..split.train_end];
    let report = match model.parametric_form() {
        None => {
            let (gp, _) = fit_gp_dhp(train, &r.hyperparams(), &r.map_cfg())?;
            write_json(&dir.join("model.json"), &gp)?;
            predictive_loglik(&ModelRef::Gp(&gp), &series.counts, range, r.floor())?
        }
        Some(form) => {
            let mut cfg = r.file.parametric.unwrap_or_default();
            cfg.seed = r.seed;
            cfg.d_max = r.d_max().min(split.train_end.saturating_sub(1)).max(1);
            let fit = fit_parametric_mle(train, form, r.period(), &cfg)?;
            write_json(&dir.join("model.json"), &fit)?;
            predictive_loglik(&ModelRef::Parametric(&fit.spec), &series.counts, range, r.floor())?
        }
    };
    write_per_bin(&dir, &report)?;
    write_json(&dir.join("eval.json"), &report)?;
    eprintln!("eval: model={} pll={:.4}", report.model, report.pll);
    Ok(())
}

fn write_per_bin(dir: &Path, report: &EvalReport) -> Result<()> {
    let rows: Vec<Vec<f64>> = report
        .per_bin
        .iter()
        .enumerate()
        .map(|(i, &v)| vec![(report.eval_start + i + 1) as f64, v])
        .collect();
    write_csv(&dir.join("per_bin.csv"), "t,log_prob", &rows)
}

fn cmd_cv(r: &Resolved) -> Result<()> {
    let dir = prepare_out(r, "cv")?;
    let series = r.input_series()?;
    let split = r.split()?;
    let grid = r.file.grid.clone().unwrap_or_default();
    let mut fixed = r.file.cv_fixed.unwrap_or_default();
    if let Some(p) = r.opts.period {
        fixed.period = p;
    }
    if let Some(d) = r.opts.dmax {
        fixed.d_max = d;
    }
    let outcome = cv_grid_search(&series.counts, &split, &grid, &fixed, &r.map_cfg())?;
    // One row per cell: hyperparameters, validation pLL, status.
    let mut table = String::from(
        "index,beta,sigma_b,ell_b,sigma_lin,sigma_f,ell_f,valid_pll,status\n",
    );
    for row in &outcome.table {
        let hp = &row.hyperparams;
        let pll = row
            .valid_pll
            .map(|v| format!("{v}"))
            .unwrap_or_default();
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{},{},{}",
            row.index,
            hp.excitation.beta,
            hp.baseline.sigma_per,
            hp.baseline.ell_per,
            hp.baseline.sigma_lin,
            hp.excitation.sigma_f,
            hp.excitation.ell_f,
            pll,
            row.status.replace(',', ";")
        );
    }
    std::fs::write(dir.join("cv_table.csv"), table)?;
    write_json(
        &dir.join("best_config.json"),
        &json!({
            "hyperparams": outcome.best,
            "index": outcome.best_index,
            "valid_pll": outcome.best_pll,
            "failures": outcome.failures,
            "cells": outcome.table.len(),
        }),
    )?;
    eprintln!(
        "cv: best cell {} (pll {:.4}), {} of {} cells failed",
        outcome.best_index,
        outcome.best_pll,
        outcome.failures,
        outcome.table.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    model: String,
    train_loglik: Option<f64>,
    pll: Option<f64>,
    kappa_hat: Option<f64>,
    status: String,
}

fn cmd_bench(r: &Resolved) -> Result<()> {
    let dir = prepare_out(r, "bench")?;
    let series = r.input_series()?;
    let (split, range) = r.eval_range(series.len())?;
    let train = &series.counts[..split.train_end];
    let floor = r.floor();
    let mut rows: Vec<BenchRow> = Vec::with_capacity(5);

    for form in [
        BaselineForm::Constant,
        BaselineForm::Linear,
        BaselineForm::Sinusoidal,
        BaselineForm::LinearSinusoidal,
    ] {
        let mut cfg = r.file.parametric.unwrap_or_default();
        cfg.seed = r.seed;
        cfg.d_max = r.d_max().min(split.train_end.saturating_sub(1)).max(1);
        let label = format!("parametric_{}", form.label());
        match fit_parametric_mle(train, form, r.period(), &cfg).and_then(|fit| {
            let rep = predictive_loglik(
                &ModelRef::Parametric(&fit.spec),
                &series.counts,
                range.clone(),
                floor,
            )?;
            Ok((fit, rep))
        }) {
            Ok((fit, rep)) => rows.push(BenchRow {
                model: label,
                train_loglik: Some(fit.train_loglik),
                pll: Some(rep.pll),
                kappa_hat: rep.kappa_hat,
                status: "ok".into(),
            }),
            Err(e) => rows.push(BenchRow {
                model: label,
                train_loglik: None,
                pll: None,
                kappa_hat: None,
                status: format!("error: {e}"),
            }),
        }
    }

    match fit_gp_dhp(train, &r.hyperparams(), &r.map_cfg()).and_then(|(gp, fit)| {
        let rep = predictive_loglik(&ModelRef::Gp(&gp), &series.counts, range.clone(), floor)?;
        Ok((gp, fit, rep))
    }) {
        Ok((gp, fit, rep)) => {
            write_json(&dir.join("gp_model.json"), &gp)?;
            rows.push(BenchRow {
                model: "gp_dhp".into(),
                train_loglik: Some(training_loglik_gp(&fit, train, floor)),
                pll: Some(rep.pll),
                kappa_hat: rep.kappa_hat,
                status: "ok".into(),
            });
        }
        Err(e) => rows.push(BenchRow {
            model: "gp_dhp".into(),
            train_loglik: None,
            pll: None,
            kappa_hat: None,
            status: format!("error: {e}"),
        }),
    }

    let mut table = String::from("model,train_loglik,pll,kappa_hat,status\n");
    for row in &rows {
        let _ = writeln!(
            table,
            "{},{},{},{},{}",
            row.model,
            row.train_loglik.map(|v| v.to_string()).unwrap_or_default(),
            row.pll.map(|v| v.to_string()).unwrap_or_default(),
            row.kappa_hat.map(|v| v.to_string()).unwrap_or_default(),
            row.status.replace(',', ";")
        );
    }
    std::fs::write(dir.join("bench_table.csv"), table)?;
    write_json(&dir.join("bench.json"), &rows)?;
    eprintln!("bench: {} model rows written", rows.len());
    Ok(())
}

/// Poisson data log-likelihood of the MAP intensity, including log N!.
fn training_loglik_gp(fit: &crate::map_inference::LatentFit, counts: &[u64], floor: f64) -> f64 {
    fit.ell_star
        .iter()
        .zip(counts)
        .map(|(&ell, &n)| crate::parametric::poisson_logpmf(n, ell.max(0.0), floor))
        .sum()
}

fn cmd_figures(r: &Resolved) -> Result<()> {
    let dir = prepare_out(r, "figures")?;
    let t_len = r.file.t_len.unwrap_or(2000);
    let d_max = r.opts.dmax.unwrap_or(30);
    let map_cfg = r.map_cfg();

    // Excitation-recovery scenarios: known kernels, constant baseline.
    let scenarios: Vec<(&str, ExcitationFamilySpec)> = vec![
        (
            "geometric",
            ExcitationFamilySpec {
                family: ExcitationFamily::Geometric { alpha: 0.8, p: 0.6 },
                d_max,
            },
        ),
        (
            "negative_binomial",
            ExcitationFamilySpec {
                family: ExcitationFamily::NegativeBinomial {
                    alpha: 0.6,
                    r: 2.0,
                    p: 0.6,
                },
                d_max,
            },
        ),
    ];
    for (i, (name, exc)) in scenarios.iter().enumerate() {
        let baseline = BaselineFamilySpec::constant(1.0);
        let sim = simulate_dhp(
            &baseline,
            Some(exc),
            &SimConfig {
                t_len,
                seed: r.seed + i as u64,
            },
        )?;
        let gp = fit_for_figures(&sim.series, d_max, &map_cfg, r)?;
        let rows: Vec<Vec<f64>> = (0..d_max)
            .map(|d| vec![(d + 1) as f64, sim.kernel[d], gp.f_hat[d]])
            .collect();
        write_csv(
            &dir.join(format!("excitation_{name}.csv")),
            "d,true_phi,f_hat",
            &rows,
        )?;
    }

    // Baseline-recovery scenarios: three baselines, shared excitation.
    let shared = default_sim_excitation(d_max);
    let baselines: Vec<(&str, BaselineFamilySpec)> = vec![
        ("constant", BaselineFamilySpec::constant(1.5)),
        (
            "linear",
            BaselineFamilySpec {
                a: 1.0,
                b: 0.5 / t_len as f64,
                c: 0.0,
                d: 0.0,
                period: 52.0,
            },
        ),
        (
            "linear_periodic",
            BaselineFamilySpec {
                a: 1.2,
                b: 0.5 / t_len as f64,
                c: 0.5,
                d: 0.0,
                period: 52.0,
            },
        ),
    ];
    for (i, (name, base)) in baselines.iter().enumerate() {
        let sim = simulate_dhp(
            base,
            Some(&shared),
            &SimConfig {
                t_len,
                seed: r.seed + 100 + i as u64,
            },
        )?;
        let gp = fit_for_figures(&sim.series, d_max, &map_cfg, r)?;
        let rows: Vec<Vec<f64>> = (0..t_len)
            .map(|t| {
                vec![
                    (t + 1) as f64,
                    base.eval(t + 1),
                    gp.b_hat_train[t],
                ]
            })
            .collect();
        write_csv(
            &dir.join(format!("baseline_{name}.csv")),
            "t,true_mu,b_hat",
            &rows,
        )?;
        let f_rows: Vec<Vec<f64>> = (0..d_max)
            .map(|d| vec![(d + 1) as f64, sim.kernel[d], gp.f_hat[d]])
            .collect();
        write_csv(
            &dir.join(format!("baseline_{name}_excitation.csv")),
            "d,true_phi,f_hat",
            &f_rows,
        )?;
    }
    eprintln!("figures: CSV bundles written to {}", dir.display());
    Ok(())
}

fn fit_for_figures(
    series: &CountSeries,
    d_max: usize,
    map_cfg: &MapConfig,
    r: &Resolved,
) -> Result<GpDhpModel> {
    let mut hp = r.hyperparams();
    hp.excitation.d_max = d_max;
    let (gp, _) = fit_gp_dhp(&series.counts, &hp, map_cfg)?;
    Ok(gp)
}

/// Parse `argv` and run; returns the process exit code. On failure an
/// error JSON `{code, message, context}` goes to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Let clap print help/version text itself.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (name, opts) = match &cli.command {
        Command::Simulate(o) => ("simulate", o),
        Command::Fit(o) => ("fit", o),
        Command::Decompose(o) => ("decompose", o),
        Command::Eval(o) => ("eval", o),
        Command::Cv(o) => ("cv", o),
        Command::Bench(o) => ("bench", o),
        Command::Figures(o) => ("figures", o),
    };
    let outcome = Resolved::new(opts.clone()).and_then(|r| match name {
        "simulate" => cmd_simulate(&r),
        "fit" => cmd_fit(&r),
        "decompose" => cmd_decompose(&r),
        "eval" => cmd_eval(&r),
        "cv" => cmd_cv(&r),
        "bench" => cmd_bench(&r),
        _ => cmd_figures(&r),
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            let err = json!({
                "code": e.code(),
                "message": e.to_string(),
                "context": { "command": name },
            });
            eprintln!("{err}");
            1
        }
    }
}
