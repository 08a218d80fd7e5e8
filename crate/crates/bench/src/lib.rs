//! Shared setup helpers for the kernel benchmarks.

use mvlab_core::instances::{split_spectrum_matrix, SpectrumLayout, SplitSystem};
use mvlab_core::rng::{gaussian_vector, seeded_rng};

pub fn benchmark_system(n: usize, kappa: f64) -> (SplitSystem, Vec<f64>) {
    let system = split_spectrum_matrix(n, kappa, SpectrumLayout::LogLinear, 7)
        .expect("benchmark system builds");
    let mut rng = seeded_rng(8);
    let b = gaussian_vector(n, &mut rng);
    (system, b)
}
