//! Numerical laboratory for matrix-vector query complexity experiments:
//! counted matvec oracles (including a lazy hidden-Haar orthogonal oracle),
//! Krylov solvers with exact query accounting, best uniform polynomial
//! approximation on split intervals, moment-matched indistinguishable
//! instance pairs, stochastic trace estimation, and a reproducible seeded
//! experiment harness.

pub mod experiments;
pub mod instances;
pub mod linalg;
pub mod oracle;
pub mod polyapprox;
pub mod probes;
pub mod rng;
pub mod simplex;
pub mod solvers;
pub mod stats;

pub use instances::{HardPair, SpectrumSpec, WeightPair};
pub use oracle::{MatVecOracle, Mode, OracleError, Transcript};
pub use polyapprox::{ApproxResult, DiscreteDomain};
pub use probes::{GameResult, TraceEstimate, WishartSample};
pub use solvers::SolveReport;
