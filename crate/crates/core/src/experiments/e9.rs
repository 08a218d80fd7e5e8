//! E9: CGNE on outlier spectra. With `k` eigenvalues at `+-kappa` and the
//! rest in `+-[1, kappa_k]`, the measured matvec count is compared against
//! `2(k + kappa_k ln(2/eps)) + 10`.
//!
//! Config keys: `ks` (default `2,5,10`), `inner_kappas` (`2,4,8`), `kappa`
//! (`1000`), `n` (`1000`), `eps` (`1e-6`).

use serde::Serialize;

use super::{
    default_threads, gnuplot_preamble, parallel_map, ExperimentConfig, ExperimentError,
    ExperimentId, ExperimentOutput,
};
use crate::instances::{split_spectrum_matrix, SpectrumLayout};
use crate::rng::{derive_seed, gaussian_vector, trial_rng};
use crate::solvers::cgne;

#[derive(Clone, Debug, Serialize)]
pub struct CellRow {
    pub outliers: usize,
    pub inner_kappa: f64,
    pub kappa: f64,
    pub n: usize,
    pub eps: f64,
    pub seed: u64,
    pub matvecs: u64,
    pub bound: f64,
    pub within_bound: bool,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub rows: Vec<CellRow>,
    pub all_within_bound: bool,
    pub all_converged: bool,
}

pub fn run(config: &ExperimentConfig) -> Result<(ExperimentOutput, Summary), ExperimentError> {
    let ks = config.get_usize_list("ks", &[2, 5, 10])?;
    let inner_kappas = config.get_f64_list("inner_kappas", &[2.0, 4.0, 8.0])?;
    let kappa = config.get_f64("kappa", 1000.0)?;
    let n = config.get_usize("n", 1000)?;
    let eps = config.get_f64("eps", 1e-6)?;
    let master = config.master_seed;

    let mut cells = Vec::new();
    let mut idx = 0u64;
    for &k in &ks {
        for &ik in &inner_kappas {
            cells.push((idx, k, ik));
            idx += 1;
        }
    }
    let results: Vec<Result<CellRow, String>> = parallel_map(
        cells,
        default_threads(),
        |&(cell_idx, outliers, inner_kappa)| {
            let seed = derive_seed(master, cell_idx);
            let run_cell = || -> Result<CellRow, ExperimentError> {
                let system = split_spectrum_matrix(
                    n,
                    kappa,
                    SpectrumLayout::Outliers {
                        count: outliers,
                        inner_kappa,
                    },
                    seed,
                )?;
                let mut oracle = system.oracle;
                let mut rng = trial_rng(seed, 4);
                let b = gaussian_vector(n, &mut rng);
                let report = cgne(&mut oracle, &b, eps, 20_000)?;
                let matvecs = report.forward_matvecs + report.adjoint_matvecs;
                let bound = 2.0 * (outliers as f64 + inner_kappa * (2.0 / eps).ln()) + 10.0;
                Ok(CellRow {
                    outliers,
                    inner_kappa,
                    kappa,
                    n,
                    eps,
                    seed,
                    matvecs,
                    bound,
                    within_bound: (matvecs as f64) <= bound,
                    converged: report.converged,
                })
            };
            run_cell().map_err(|e| e.to_string())
        },
    );
    let mut rows = Vec::new();
    for r in results {
        rows.push(r.map_err(|message| ExperimentError::BadConfig {
            key: "cell".into(),
            message,
        })?);
    }
    let summary = Summary {
        all_within_bound: rows.iter().all(|r| r.within_bound),
        all_converged: rows.iter().all(|r| r.converged),
        rows: rows.clone(),
    };

    let header = "outliers,inner_kappa,kappa,n,eps,seed,matvecs,bound,within_bound,converged";
    let csv_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{}",
                r.outliers,
                r.inner_kappa,
                r.kappa,
                r.n,
                r.eps,
                r.seed,
                r.matvecs,
                r.bound,
                r.within_bound,
                r.converged
            )
        })
        .collect();
    let mut plot = gnuplot_preamble("CGNE matvecs on outlier spectra", "E9_results.csv");
    plot.push_str("set xlabel 'inner kappa'\nset ylabel 'matvecs'\n");
    plot.push_str("plot 'E9_results.csv' using 2:7 with points pt 7 title 'measured', \\\n");
    plot.push_str("     '' using 2:8 with points pt 4 title 'bound'\n");
    let output = ExperimentOutput::assemble(ExperimentId::E9, header, &csv_rows, &summary, plot);
    Ok((output, summary))
}
