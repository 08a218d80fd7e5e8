//! E6: sphere-concentration constants. For each `n`, Monte Carlo estimates
//! of the three event frequencies: a coordinate is not too small, half the
//! coordinates carry near-half the mass, and the point stays far from fixed
//! adversaries. The half-mass constant is asymptotic: its frequency crosses
//! 3/5 only for n in the several hundreds, which the n-sweep makes visible.
//!
//! Config keys: `sizes` (default `100,200,400,1000`), `trials` (`100000`),
//! `radius` (`1`).

use serde::Serialize;

use super::{
    default_threads, gnuplot_preamble, parallel_map, ExperimentConfig, ExperimentError,
    ExperimentId, ExperimentOutput,
};
use crate::probes::sphere_props_montecarlo;
use crate::rng::{derive_seed, trial_rng};

#[derive(Clone, Debug, Serialize)]
pub struct SizeRow {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub freq_coordinate: f64,
    pub freq_half_mass: f64,
    pub freq_far: f64,
    /// Margins over the 4/5, 3/5, 3/5 constants.
    pub margin_coordinate: f64,
    pub margin_half_mass: f64,
    pub margin_far: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub rows: Vec<SizeRow>,
}

pub fn run(config: &ExperimentConfig) -> Result<(ExperimentOutput, Summary), ExperimentError> {
    let sizes = config.get_usize_list("sizes", &[100, 200, 400, 1000])?;
    let trials = config.get_usize("trials", 100_000)?;
    let radius = config.get_f64("radius", 1.0)?;
    let master = config.master_seed;

    let results: Vec<SizeRow> = parallel_map(sizes, default_threads(), |&n| {
        let seed = derive_seed(master, n as u64);
        let mut rng = trial_rng(seed, 0);
        let freqs = sphere_props_montecarlo(n, radius, trials, &mut rng);
        SizeRow {
            n,
            trials,
            seed,
            freq_coordinate: freqs.coordinate_not_small,
            freq_half_mass: freqs.half_mass_large,
            freq_far: freqs.far_from_adversaries,
            margin_coordinate: freqs.coordinate_not_small - 0.8,
            margin_half_mass: freqs.half_mass_large - 0.6,
            margin_far: freqs.far_from_adversaries - 0.6,
        }
    });
    let summary = Summary {
        rows: results.clone(),
    };

    let header = "n,trials,seed,freq_coordinate,freq_half_mass,freq_far";
    let csv_rows: Vec<String> = results
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.n, r.trials, r.seed, r.freq_coordinate, r.freq_half_mass, r.freq_far
            )
        })
        .collect();
    let mut plot = gnuplot_preamble("sphere concentration frequencies", "E6_results.csv");
    plot.push_str("set xlabel 'n'\nset ylabel 'frequency'\nset logscale x\n");
    plot.push_str("plot 'E6_results.csv' using 1:4 with linespoints title 'coordinate', \\\n");
    plot.push_str("     '' using 1:5 with linespoints title 'half mass', \\\n");
    plot.push_str("     '' using 1:6 with linespoints title 'far', \\\n");
    plot.push_str("     0.8 with lines dashtype 2 title '4/5', \\\n");
    plot.push_str("     0.6 with lines dashtype 3 title '3/5'\n");
    let output = ExperimentOutput::assemble(ExperimentId::E6, header, &csv_rows, &summary, plot);
    Ok((output, summary))
}
