//! E1: CGNE matvec counts across a `(kappa, eps)` grid on split-spectrum
//! systems, fitted against `C * kappa * ln(1/eps)`.
//!
//! Config keys: `kappas` (default `4,8,16,32,64`), `epsilons`
//! (`1e-2,1e-4,1e-6`), `n` (`2000`), `maxit` (`20000`).

use serde::Serialize;

use super::{
    default_threads, gnuplot_preamble, parallel_map, ExperimentConfig, ExperimentError,
    ExperimentId, ExperimentOutput,
};
use crate::instances::{split_spectrum_matrix, SpectrumLayout};
use crate::rng::{derive_seed, gaussian_vector, trial_rng};
use crate::solvers::cgne;
use crate::stats::{fit_line, fit_through_origin};

#[derive(Clone, Debug, Serialize)]
pub struct CellResult {
    pub kappa: f64,
    pub eps: f64,
    pub n: usize,
    pub seed: u64,
    pub iterations: usize,
    pub forward_matvecs: u64,
    pub adjoint_matvecs: u64,
    pub total_matvecs: u64,
    pub final_residual: f64,
    pub converged: bool,
    /// `total_matvecs / (kappa ln(1/eps))`.
    pub cell_c: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PerEpsFit {
    pub eps: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    /// Global through-origin fit of `total_matvecs = C * kappa * ln(1/eps)`.
    pub global_c: f64,
    pub global_r_squared: f64,
    pub per_eps_fits: Vec<PerEpsFit>,
    /// `matvecs(kappa_max) / matvecs(kappa_ref)` per eps (linearity check).
    pub kappa_ratios: Vec<f64>,
    /// `matvecs(eps_min) / matvecs(eps_max)` per kappa (log-dependence check).
    pub eps_ratios: Vec<f64>,
    pub all_converged: bool,
}

pub fn run(config: &ExperimentConfig) -> Result<(ExperimentOutput, Summary), ExperimentError> {
    let kappas = config.get_f64_list("kappas", &[4.0, 8.0, 16.0, 32.0, 64.0])?;
    let epsilons = config.get_f64_list("epsilons", &[1e-2, 1e-4, 1e-6])?;
    let n = config.get_usize("n", 2000)?;
    let maxit = config.get_usize("maxit", 20_000)?;
    let master = config.master_seed;

    let cells: Vec<(usize, f64, f64)> = kappas
        .iter()
        .enumerate()
        .flat_map(|(i, &k)| {
            epsilons
                .iter()
                .enumerate()
                .map(move |(j, &e)| (i * 1000 + j, k, e))
        })
        .collect();

    let results: Vec<Result<CellResult, String>> =
        parallel_map(cells, default_threads(), |&(cell_idx, kappa, eps)| {
            let seed = derive_seed(master, cell_idx as u64);
            let run_cell = || -> Result<CellResult, ExperimentError> {
                let system = split_spectrum_matrix(n, kappa, SpectrumLayout::LogLinear, seed)?;
                let mut oracle = system.oracle;
                let mut rng = trial_rng(seed, 2);
                let b = gaussian_vector(n, &mut rng);
                let report = cgne(&mut oracle, &b, eps, maxit)?;
                let total = report.forward_matvecs + report.adjoint_matvecs;
                Ok(CellResult {
                    kappa,
                    eps,
                    n,
                    seed,
                    iterations: report.iterations,
                    forward_matvecs: report.forward_matvecs,
                    adjoint_matvecs: report.adjoint_matvecs,
                    total_matvecs: total,
                    final_residual: report.relative_residual,
                    converged: report.converged,
                    cell_c: total as f64 / (kappa * (1.0 / eps).ln()),
                })
            };
            run_cell().map_err(|e| e.to_string())
        });
    let mut rows = Vec::new();
    for r in results {
        rows.push(r.map_err(|message| ExperimentError::BadConfig {
            key: "cell".into(),
            message,
        })?);
    }

    // fits
    let xs: Vec<f64> = rows.iter().map(|r| r.kappa * (1.0 / r.eps).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.total_matvecs as f64).collect();
    let global = fit_through_origin(&xs, &ys);
    let mut per_eps_fits = Vec::new();
    for &eps in &epsilons {
        let sub: Vec<&CellResult> = rows.iter().filter(|r| r.eps == eps).collect();
        let x: Vec<f64> = sub.iter().map(|r| r.kappa).collect();
        let y: Vec<f64> = sub.iter().map(|r| r.total_matvecs as f64).collect();
        let fit = fit_line(&x, &y);
        per_eps_fits.push(PerEpsFit {
            eps,
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
        });
    }
    let kappa_max = kappas.iter().cloned().fold(f64::MIN, f64::max);
    let kappa_ref = kappa_max / 8.0;
    let kappa_ratios: Vec<f64> = epsilons
        .iter()
        .filter_map(|&eps| {
            let hi = rows
                .iter()
                .find(|r| r.eps == eps && r.kappa == kappa_max)?
                .total_matvecs as f64;
            let lo = rows
                .iter()
                .find(|r| r.eps == eps && (r.kappa - kappa_ref).abs() < 1e-9)?
                .total_matvecs as f64;
            Some(hi / lo)
        })
        .collect();
    let eps_min = epsilons.iter().cloned().fold(f64::MAX, f64::min);
    let eps_max = epsilons.iter().cloned().fold(f64::MIN, f64::max);
    let eps_ratios: Vec<f64> = kappas
        .iter()
        .filter_map(|&kappa| {
            let hi = rows
                .iter()
                .find(|r| r.kappa == kappa && r.eps == eps_min)?
                .total_matvecs as f64;
            let lo = rows
                .iter()
                .find(|r| r.kappa == kappa && r.eps == eps_max)?
                .total_matvecs as f64;
            Some(hi / lo)
        })
        .collect();
    let summary = Summary {
        global_c: global.slope,
        global_r_squared: global.r_squared,
        per_eps_fits,
        kappa_ratios,
        eps_ratios,
        all_converged: rows.iter().all(|r| r.converged),
    };

    let header =
        "kappa,eps,n,seed,iterations,fwd_matvecs,adj_matvecs,total_matvecs,final_residual,converged,cell_c";
    let csv_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.kappa,
                r.eps,
                r.n,
                r.seed,
                r.iterations,
                r.forward_matvecs,
                r.adjoint_matvecs,
                r.total_matvecs,
                r.final_residual,
                r.converged,
                r.cell_c
            )
        })
        .collect();
    let mut plot = gnuplot_preamble("CGNE matvecs vs kappa", "E1_results.csv");
    plot.push_str("set logscale xy\nset xlabel 'kappa'\nset ylabel 'matvecs'\n");
    plot.push_str("plot 'E1_results.csv' using 1:8 with points pt 7 title 'measured'\n");
    let output = ExperimentOutput::assemble(ExperimentId::E1, header, &csv_rows, &summary, plot);
    Ok((output, summary))
}
