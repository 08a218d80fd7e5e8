//! E5: trace-inverse estimation accuracy. One split-spectrum instance is
//! fixed; each trial draws a sphere probe `b` with `||b|| = sqrt(n)`, solves
//! `A x = b` by CGNE to relative residual `1/n`, and estimates
//! `tr(A^{-1}) ~ b' x`. Reported: the failure rate of the `5 ||A^{-1}||_F`
//! bound, and separately the failure rate of the raw `sqrt(12)` bound for
//! exact quadratic forms (solver error removed, probe variance only).
//!
//! Config keys: `n` (default `500`), `kappa` (`4`), `trials` (`2000`),
//! `raw_trials` (`10000`).

use serde::Serialize;

use super::{
    default_threads, gnuplot_preamble, parallel_map, ExperimentConfig, ExperimentError,
    ExperimentId, ExperimentOutput,
};
use crate::instances::{split_spectrum_eigenvalues, SpectrumLayout};
use crate::linalg::{dot, Lu, Mat};
use crate::oracle::{haar_orthogonal_with, MatVecOracle, Mode};
use crate::rng::{derive_seed, sphere_vector, trial_rng};
use crate::solvers::cgne;
use crate::stats::{wilson_interval, WilsonInterval};

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub n: usize,
    pub kappa: f64,
    pub trials: u64,
    pub true_trace: f64,
    pub frobenius: f64,
    /// failures of |estimate - trace| <= 5 ||A^{-1}||_F via the solver path
    pub solver_failures: u64,
    pub solver_failure_rate: f64,
    pub solver_wilson: WilsonInterval,
    /// failures of |b'A^{-1}b - trace| <= sqrt(12) ||A^{-1}||_F with exact solves
    pub raw_trials: u64,
    pub raw_failures: u64,
    pub raw_failure_rate: f64,
    pub mean_solver_matvecs: f64,
}

#[derive(Clone, Debug)]
struct TrialOut {
    seed: u64,
    estimate: f64,
    error: f64,
    matvecs: u64,
    ok: bool,
}

pub fn run(config: &ExperimentConfig) -> Result<(ExperimentOutput, Summary), ExperimentError> {
    let n = config.get_usize("n", 500)?;
    let kappa = config.get_f64("kappa", 4.0)?;
    let trials = config.get_usize("trials", 2000)? as u64;
    let raw_trials = config.get_usize("raw_trials", 10_000)? as u64;
    let master = config.master_seed;

    // One instance, materialized densely: A = Q D Q^T.
    let eigenvalues = split_spectrum_eigenvalues(n, kappa, SpectrumLayout::LogLinear)?;
    let mut inst_rng = trial_rng(master, 0);
    let q = haar_orthogonal_with(n, &mut inst_rng)?;
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += q[(i, k)] * eigenvalues[k] * q[(j, k)];
            }
            a[(i, j)] = s;
        }
    }
    let true_trace: f64 = eigenvalues.iter().map(|&l| 1.0 / l).sum();
    let frobenius: f64 = eigenvalues
        .iter()
        .map(|&l| 1.0 / (l * l))
        .sum::<f64>()
        .sqrt();
    let lu = Lu::factor(&a).map_err(|e| ExperimentError::BadConfig {
        key: "instance".into(),
        message: e.to_string(),
    })?;
    let a_shared = std::sync::Arc::new(a);

    // Solver-path trials.
    let tol = 1.0 / n as f64;
    let cells: Vec<u64> = (0..trials).collect();
    let a_ref = &a_shared;
    let results: Vec<Result<TrialOut, String>> = parallel_map(cells, default_threads(), |&trial| {
        let seed = derive_seed(master, 1000 + trial);
        let mut rng = trial_rng(seed, 0);
        let mut oracle = MatVecOracle::dense_shared(a_ref.clone(), Mode::TwoSided);
        let b = sphere_vector(n, (n as f64).sqrt(), &mut rng);
        let mut run_trial = || -> Result<TrialOut, ExperimentError> {
            let report = cgne(&mut oracle, &b, tol, 50 * n)?;
            let estimate = dot(&b, &report.solution);
            let error = (estimate - true_trace).abs();
            Ok(TrialOut {
                seed,
                estimate,
                error,
                matvecs: report.forward_matvecs + report.adjoint_matvecs,
                ok: error <= 5.0 * frobenius,
            })
        };
        run_trial().map_err(|e| e.to_string())
    });
    let mut trial_rows = Vec::new();
    for r in results {
        trial_rows.push(r.map_err(|message| ExperimentError::BadConfig {
            key: "trial".into(),
            message,
        })?);
    }
    let solver_failures = trial_rows.iter().filter(|t| !t.ok).count() as u64;

    // Raw quadratic forms with exact solves: probe variance only.
    let mut raw_failures = 0u64;
    let mut raw_rng = trial_rng(master, 2);
    for _ in 0..raw_trials {
        let b = sphere_vector(n, (n as f64).sqrt(), &mut raw_rng);
        let x = lu.solve(&b);
        let form = dot(&b, &x);
        if (form - true_trace).abs() > 12.0f64.sqrt() * frobenius {
            raw_failures += 1;
        }
    }

    let summary = Summary {
        n,
        kappa,
        trials,
        true_trace,
        frobenius,
        solver_failures,
        solver_failure_rate: solver_failures as f64 / trials as f64,
        solver_wilson: wilson_interval(solver_failures, trials),
        raw_trials,
        raw_failures,
        raw_failure_rate: raw_failures as f64 / raw_trials as f64,
        mean_solver_matvecs: trial_rows.iter().map(|t| t.matvecs as f64).sum::<f64>()
            / trials as f64,
    };

    let header = "trial,seed,estimate,true_trace,error,five_frob,matvecs,ok";
    let csv_rows: Vec<String> = trial_rows
        .iter()
        .enumerate()
        .map(|(i, t)| {
            format!(
                "{},{},{},{},{},{},{},{}",
                i,
                t.seed,
                t.estimate,
                true_trace,
                t.error,
                5.0 * frobenius,
                t.matvecs,
                t.ok
            )
        })
        .collect();
    let mut plot = gnuplot_preamble("trace-inverse estimates", "E5_results.csv");
    plot.push_str("set xlabel 'trial'\nset ylabel 'estimate'\n");
    plot.push_str("plot 'E5_results.csv' using 1:3 with points pt 7 title 'estimate', \\\n");
    plot.push_str("     '' using 1:4 with lines title 'true trace'\n");
    let output = ExperimentOutput::assemble(ExperimentId::E5, header, &csv_rows, &summary, plot);
    Ok((output, summary))
}
