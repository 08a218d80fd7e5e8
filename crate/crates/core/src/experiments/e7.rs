//! E7: hidden-Haar coupling. The same deterministic adaptive query policy
//! is driven against the lazy oracle and against freshly sampled explicit
//! Haar matrices; the two response pipelines share no randomness, and
//! equality in law is tested by two-sample Kolmogorov-Smirnov on three
//! scalar functionals. Separately, random transcripts are checked for the
//! isometry and completion-replay invariants.
//!
//! Config keys: `n` (default `16`), `queries` (`8`), `samples` (`20000`),
//! `alpha` (`0.001`), `invariant_transcripts` (`1000`).

use serde::Serialize;

use super::{gnuplot_preamble, ExperimentConfig, ExperimentError, ExperimentId, ExperimentOutput};
use crate::linalg::{dot, nrm2, scale, unit_vector};
use crate::oracle::{haar_orthogonal_with, orthonormalize, LazyHaar};
use crate::rng::{derive_seed, gaussian_vector, trial_rng};
use crate::stats::{ks_two_sample, KsTest};

/// Scalar functionals of one transcript: first coordinate of the first
/// response, the revealed-span mass of `e_1`, and a late-response
/// coordinate.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Functionals {
    pub first_response_coord: f64,
    pub revealed_mass: f64,
    pub late_response_coord: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub n: usize,
    pub queries: usize,
    pub samples: usize,
    pub ks_first_response: KsTest,
    pub ks_revealed_mass: KsTest,
    pub ks_late_response: KsTest,
    pub all_ks_pass: bool,
    pub invariant_transcripts: usize,
    pub worst_gram_deviation: f64,
    pub worst_replay_deviation: f64,
    pub worst_orthogonality_defect: f64,
    pub invariants_ok: bool,
}

/// Deterministic adaptive policy: `z_1 = e_1`, then `z_{k+1}` mixes the
/// previous response with the next coordinate axis. Depends only on the
/// responses, as in the one-sided query model.
fn drive(n: usize, queries: usize, mut query: impl FnMut(&[f64]) -> Vec<f64>) -> Functionals {
    let mut z = unit_vector(n, 0);
    let mut responses: Vec<Vec<f64>> = Vec::with_capacity(queries);
    for k in 0..queries {
        let r = query(&z);
        responses.push(r.clone());
        if k + 1 < queries {
            let mut next = r;
            next[(k + 1) % n] += 1.0;
            let norm = nrm2(&next);
            scale(1.0 / norm, &mut next);
            z = next;
        }
    }
    let (v_basis, _) = orthonormalize(&responses, 1e-10);
    let e1 = unit_vector(n, 0);
    let revealed_mass = v_basis
        .iter()
        .map(|v| dot(v, &e1).powi(2))
        .sum::<f64>()
        .sqrt();
    Functionals {
        first_response_coord: responses[0][0],
        revealed_mass,
        late_response_coord: responses[queries - 1][1],
    }
}

pub fn run(config: &ExperimentConfig) -> Result<(ExperimentOutput, Summary), ExperimentError> {
    let n = config.get_usize("n", 16)?;
    let queries = config.get_usize("queries", 8)?;
    let samples = config.get_usize("samples", 20_000)?;
    let alpha = config.get_f64("alpha", 0.001)?;
    let invariant_transcripts = config.get_usize("invariant_transcripts", 1000)?;
    let master = config.master_seed;

    // Lazy side.
    let mut lazy_samples = Vec::with_capacity(samples);
    for i in 0..samples {
        let seed = derive_seed(master, i as u64);
        let mut lazy = LazyHaar::new(n, seed)?;
        lazy_samples.push(drive(n, queries, |z| lazy.query(z).expect("valid query")));
    }
    // Explicit side: fresh Haar matrix per sample, same policy.
    let mut explicit_samples = Vec::with_capacity(samples);
    for i in 0..samples {
        let seed = derive_seed(master, (samples + i) as u64);
        let mut rng = trial_rng(seed, 7);
        let q = haar_orthogonal_with(n, &mut rng)?;
        explicit_samples.push(drive(n, queries, |z| q.matvec(z)));
    }

    let collect = |f: fn(&Functionals) -> f64, side: &[Functionals]| -> Vec<f64> {
        side.iter().map(f).collect()
    };
    let ks_first = ks_two_sample(
        &collect(|s| s.first_response_coord, &lazy_samples),
        &collect(|s| s.first_response_coord, &explicit_samples),
        alpha,
    );
    let ks_mass = ks_two_sample(
        &collect(|s| s.revealed_mass, &lazy_samples),
        &collect(|s| s.revealed_mass, &explicit_samples),
        alpha,
    );
    let ks_late = ks_two_sample(
        &collect(|s| s.late_response_coord, &lazy_samples),
        &collect(|s| s.late_response_coord, &explicit_samples),
        alpha,
    );

    // Isometry and completion-replay invariants on random transcripts.
    let mut worst_gram = 0.0f64;
    let mut worst_replay = 0.0f64;
    let mut worst_defect = 0.0f64;
    for i in 0..invariant_transcripts {
        let seed = derive_seed(master, (2 * samples + i) as u64);
        let mut rng = trial_rng(seed, 3);
        let mut lazy = LazyHaar::new(n, seed)?;
        let count = 1 + (i % (n - 2));
        let queries: Vec<Vec<f64>> = (0..count).map(|_| gaussian_vector(n, &mut rng)).collect();
        let responses: Vec<Vec<f64>> = queries
            .iter()
            .map(|z| lazy.query(z).expect("valid query"))
            .collect();
        for a in 0..count {
            for b in 0..count {
                let gz = dot(&queries[a], &queries[b]);
                let gr = dot(&responses[a], &responses[b]);
                worst_gram = worst_gram.max((gz - gr).abs() / gz.abs().max(1.0));
            }
        }
        let q = lazy.complete();
        worst_defect = worst_defect.max(q.orthogonality_defect());
        for (z, r) in queries.iter().zip(&responses) {
            let qz = q.matvec(z);
            for (a, b) in qz.iter().zip(r) {
                worst_replay = worst_replay.max((a - b).abs());
            }
        }
    }

    let all_ks_pass = ks_first.pass && ks_mass.pass && ks_late.pass;
    let invariants_ok = worst_gram <= 1e-10 && worst_replay <= 1e-10 && worst_defect <= 1e-10;
    let summary = Summary {
        n,
        queries,
        samples,
        ks_first_response: ks_first,
        ks_revealed_mass: ks_mass,
        ks_late_response: ks_late,
        all_ks_pass,
        invariant_transcripts,
        worst_gram_deviation: worst_gram,
        worst_replay_deviation: worst_replay,
        worst_orthogonality_defect: worst_defect,
        invariants_ok,
    };

    let header = "side,sample,first_response_coord,revealed_mass,late_response_coord";
    let mut csv_rows = Vec::with_capacity(2 * samples);
    for (i, s) in lazy_samples.iter().enumerate() {
        csv_rows.push(format!(
            "lazy,{},{},{},{}",
            i, s.first_response_coord, s.revealed_mass, s.late_response_coord
        ));
    }
    for (i, s) in explicit_samples.iter().enumerate() {
        csv_rows.push(format!(
            "explicit,{},{},{},{}",
            i, s.first_response_coord, s.revealed_mass, s.late_response_coord
        ));
    }
    let mut plot = gnuplot_preamble("hidden-Haar functional distributions", "E7_results.csv");
    plot.push_str("set xlabel 'first response coordinate'\nset ylabel 'count'\n");
    plot.push_str("binwidth=0.05\nbin(x,w)=w*floor(x/w)+w/2.0\n");
    plot.push_str(
        "plot '< grep \"^lazy\" E7_results.csv' using (bin($3,binwidth)):(1.0) smooth freq with boxes title 'lazy', \\\n",
    );
    plot.push_str(
        "     '< grep \"^explicit\" E7_results.csv' using (bin($3,binwidth)):(1.0) smooth freq with boxes title 'explicit'\n",
    );
    let output = ExperimentOutput::assemble(ExperimentId::E7, header, &csv_rows, &summary, plot);
    Ok((output, summary))
}
