//! E2: the GMRES residual wall on Haar orthogonal systems `Q x = e_1`.
//! Unrestarted GMRES runs `n-1` steps per trial against the lazy hidden-Haar
//! oracle; the table records the relative residual after `floor(n/2)` and
//! `n-1` steps and compares the trial fractions against the `1/2` and
//! `0.2/sqrt(n)` thresholds.
//!
//! Config keys: `sizes` (default `100,200,400`), `trials` (`100`).

use serde::Serialize;

use super::{
    default_threads, gnuplot_preamble, parallel_map, ExperimentConfig, ExperimentError,
    ExperimentId, ExperimentOutput,
};
use crate::instances::orthogonal_system;
use crate::rng::derive_seed;
use crate::solvers::gmres;
use crate::stats::{wilson_interval, WilsonInterval};

#[derive(Clone, Debug, Serialize)]
pub struct TrialRow {
    pub n: usize,
    pub trial: u64,
    pub seed: u64,
    pub residual_half: f64,
    pub residual_full: f64,
    pub matvecs: u64,
    pub above_half: bool,
    pub above_floor: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SizeSummary {
    pub n: usize,
    pub trials: u64,
    /// Fraction with residual after `n-1` steps at least `0.2/sqrt(n)`.
    pub fraction_above_floor: f64,
    pub floor_wilson: WilsonInterval,
    /// Fraction with residual after `floor(n/2)` steps at least `1/2`.
    pub fraction_above_half: f64,
    pub half_wilson: WilsonInterval,
    /// Mean squared residual after `floor(n/2)` steps; compare `(n-t)/n`.
    pub mean_sq_half: f64,
    pub mean_sq_half_expected: f64,
    pub mean_sq_full: f64,
    pub mean_sq_full_expected: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub sizes: Vec<SizeSummary>,
}

pub fn run(config: &ExperimentConfig) -> Result<(ExperimentOutput, Summary), ExperimentError> {
    let sizes = config.get_usize_list("sizes", &[100, 200, 400])?;
    let trials = config.get_usize("trials", 100)? as u64;
    let master = config.master_seed;

    let mut rows: Vec<TrialRow> = Vec::new();
    let mut size_summaries = Vec::new();
    for &n in &sizes {
        let cells: Vec<u64> = (0..trials).collect();
        let results: Vec<Result<TrialRow, String>> =
            parallel_map(cells, default_threads(), |&trial| {
                let seed = derive_seed(master, (n as u64) << 32 | trial);
                let run_trial = || -> Result<TrialRow, ExperimentError> {
                    let (mut oracle, b) = orthogonal_system(n, seed)?;
                    let report = gmres(&mut oracle, &b, 1e-300, n - 1)?;
                    let half_step = n / 2;
                    let residual_half = report.residual_history[half_step.min(report.iterations)];
                    let residual_full = report.relative_residual;
                    Ok(TrialRow {
                        n,
                        trial,
                        seed,
                        residual_half,
                        residual_full,
                        matvecs: report.forward_matvecs,
                        above_half: residual_half >= 0.5,
                        above_floor: residual_full >= 0.2 / (n as f64).sqrt(),
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
        let above_floor = trial_rows.iter().filter(|r| r.above_floor).count() as u64;
        let above_half = trial_rows.iter().filter(|r| r.above_half).count() as u64;
        let mean_sq_half = trial_rows
            .iter()
            .map(|r| r.residual_half * r.residual_half)
            .sum::<f64>()
            / trials as f64;
        let mean_sq_full = trial_rows
            .iter()
            .map(|r| r.residual_full * r.residual_full)
            .sum::<f64>()
            / trials as f64;
        size_summaries.push(SizeSummary {
            n,
            trials,
            fraction_above_floor: above_floor as f64 / trials as f64,
            floor_wilson: wilson_interval(above_floor, trials),
            fraction_above_half: above_half as f64 / trials as f64,
            half_wilson: wilson_interval(above_half, trials),
            mean_sq_half,
            mean_sq_half_expected: (n - n / 2) as f64 / n as f64,
            mean_sq_full,
            mean_sq_full_expected: 1.0 / n as f64,
        });
        rows.extend(trial_rows);
    }
    let summary = Summary {
        sizes: size_summaries,
    };

    let header = "n,trial,seed,residual_half,residual_full,matvecs,above_half,above_floor";
    let csv_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{}",
                r.n,
                r.trial,
                r.seed,
                r.residual_half,
                r.residual_full,
                r.matvecs,
                r.above_half,
                r.above_floor
            )
        })
        .collect();
    let mut plot = gnuplot_preamble("GMRES residual after n-1 steps", "E2_results.csv");
    plot.push_str("set xlabel 'n'\nset ylabel 'relative residual'\nset logscale y\n");
    plot.push_str("plot 'E2_results.csv' using 1:5 with points pt 6 title 'residual(n-1)', \\\n");
    plot.push_str("     '' using 1:(0.2/sqrt($1)) with lines title '0.2/sqrt(n)'\n");
    let output = ExperimentOutput::assemble(ExperimentId::E2, header, &csv_rows, &summary, plot);
    Ok((output, summary))
}
