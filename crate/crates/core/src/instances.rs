//! Hard-instance constructions: equioscillation node extraction, the
//! moment-matched weight pipeline (duality, mixing, rounding), rotated
//! indistinguishable matrix pairs sharing one Haar rotation, orthogonal
//! systems backed by the lazy Haar oracle, and split-spectrum benchmark
//! matrices.
//!
//! The weight pipeline runs in three stages. The dual stage maximizes the
//! `f`-gap over weight pairs with equal mass and matching power moments up
//! to degree `t`; by linear programming duality its optimum is `2 alpha n
//! max|f|` where `alpha` is the inapproximability constant of `f` on the
//! nodes. The mixing stage blends each side with the uniform weight and
//! cross-mixes by `eta`, buying a mass floor and relative closeness at the
//! cost of shrinking the gap to `eta alpha n max|f|`. The rounding stage
//! produces integer multiplicities by largest remainder, moving each weight
//! by less than one.

use std::sync::Arc;

use serde::Serialize;

use crate::linalg::neumaier_sum;
use crate::oracle::{HouseholderProduct, MatVecOracle, OracleError};
use crate::polyapprox::{self, best_uniform_approx, ApproxError, DiscreteDomain};
use crate::rng::trial_rng;
use crate::simplex::{self, LpError, StandardLp};

/// Largest dimension at which explicit dense matrices may be materialized.
pub const EXPLICIT_DENSE_CAP: usize = 4000;

#[derive(Debug, thiserror::Error)]
pub enum InstanceError {
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("grid too coarse: {found} usable alternating extrema, need {needed}")]
    GridTooCoarse { found: usize, needed: usize },
    #[error("construction invariant '{property}' violated (residual {residual:.3e})")]
    ConstructionInvariant {
        property: &'static str,
        residual: f64,
    },
    #[error("invalid layout: {0}")]
    InvalidLayout(&'static str),
    #[error("dimension {n} exceeds the explicit-matrix cap {cap}")]
    DimensionCap { n: usize, cap: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Eigenvalues with integer multiplicities; the spectrum of one diagonal
/// factor of a hard pair.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumSpec {
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
}

impl SpectrumSpec {
    pub fn new(eigenvalues: Vec<f64>, multiplicities: Vec<usize>) -> Result<Self, InstanceError> {
        if eigenvalues.len() != multiplicities.len() {
            return Err(InstanceError::InvalidParameter(
                "eigenvalues and multiplicities must have equal length",
            ));
        }
        for (i, a) in eigenvalues.iter().enumerate() {
            for b in eigenvalues.iter().skip(i + 1) {
                if a == b {
                    return Err(InstanceError::InvalidParameter(
                        "eigenvalues must be distinct",
                    ));
                }
            }
        }
        Ok(SpectrumSpec {
            eigenvalues,
            multiplicities,
        })
    }

    pub fn dimension(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    /// `tr f(D) = sum_i N_i f(lambda_i)`, the trace route that never touches
    /// a dense matrix.
    pub fn trace_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        neumaier_sum(
            self.eigenvalues
                .iter()
                .zip(&self.multiplicities)
                .map(|(&l, &m)| m as f64 * f(l)),
        )
    }

    /// `||f(D)||_F`.
    pub fn frobenius_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        neumaier_sum(
            self.eigenvalues
                .iter()
                .zip(&self.multiplicities)
                .map(|(&l, &m)| m as f64 * f(l) * f(l)),
        )
        .sqrt()
    }

    /// Diagonal entries in block order.
    pub fn expand(&self) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.dimension());
        for (&l, &m) in self.eigenvalues.iter().zip(&self.multiplicities) {
            d.extend(std::iter::repeat_n(l, m));
        }
        d
    }
}

/// Fractional weight pair: the dual stage `(x, x~)` and, once mixed, the
/// `(y, y~)` stage with its parameter `eta`.
#[derive(Clone, Debug, Serialize)]
pub struct WeightPair {
    pub nodes: Vec<f64>,
    pub f_values: Vec<f64>,
    /// Total mass per side (the eventual matrix dimension; kept fractional).
    pub mass: f64,
    /// Inapproximability constant of `f` on the nodes at the pipeline degree.
    pub alpha: f64,
    pub degree: usize,
    pub x: Vec<f64>,
    pub x_tilde: Vec<f64>,
    /// `sum (x - x~) f`.
    pub dual_gap: f64,
    pub eta: Option<f64>,
    pub y: Vec<f64>,
    pub y_tilde: Vec<f64>,
    /// `sum (y - y~) f`; zero until mixed.
    pub gap: f64,
}

/// Residuals of the five mixed-stage properties, all scaled so that passing
/// values are at most the stated tolerances.
#[derive(Clone, Debug, Serialize)]
pub struct WeightInvariantReport {
    /// `max(|sum y - n|, |sum y~ - n|) / n`; tolerance `1e-8`.
    pub mass_residual: f64,
    /// `max_{1<=j<=t} |sum (y - y~) T_j| / n` in the Chebyshev basis of the
    /// node hull; tolerance `1e-6`.
    pub moment_residual: f64,
    /// `max_i (n/(2(t+2)) - y_i) / n` over both sides; tolerance `1e-8`.
    pub floor_violation: f64,
    /// `max_i (|y_i - y~_i| - 4 eta y_i) / n`; tolerance `1e-8`.
    pub closeness_violation: f64,
    /// `(eta alpha n max|f| - gap) / (n max|f|)`; tolerance `1e-8`.
    pub gap_deficit: f64,
    pub satisfied: bool,
}

impl WeightPair {
    /// Chebyshev moments of `y - y~` over the node hull, orders `1..=t`,
    /// scaled by the mass.
    fn moment_residual(&self) -> f64 {
        if self.nodes.len() < 2 || self.degree == 0 {
            return 0.0;
        }
        let lo = self.nodes.first().copied().unwrap();
        let hi = self.nodes.last().copied().unwrap();
        let diffs: Vec<f64> = self
            .y
            .iter()
            .zip(&self.y_tilde)
            .map(|(a, b)| a - b)
            .collect();
        let s: Vec<f64> = self
            .nodes
            .iter()
            .map(|&x| (2.0 * x - lo - hi) / (hi - lo))
            .collect();
        let mut worst = 0.0f64;
        let mut t_prev = vec![1.0; s.len()];
        let mut t_cur = s.clone();
        for _j in 1..=self.degree {
            let m = neumaier_sum(diffs.iter().zip(&t_cur).map(|(d, t)| d * t)).abs();
            worst = worst.max(m / self.mass);
            let next: Vec<f64> = s
                .iter()
                .zip(t_cur.iter().zip(&t_prev))
                .map(|(&si, (&tc, &tp))| 2.0 * si * tc - tp)
                .collect();
            t_prev = std::mem::replace(&mut t_cur, next);
        }
        worst
    }

    /// Evaluate the five mixed-stage properties.
    pub fn invariant_report(&self) -> WeightInvariantReport {
        let n = self.mass;
        let eta = self.eta.unwrap_or(0.0);
        let max_f = self.f_values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let count = self.nodes.len() as f64;
        let mass_residual = ((neumaier_sum(self.y.iter().copied()) - n).abs())
            .max((neumaier_sum(self.y_tilde.iter().copied()) - n).abs())
            / n;
        let moment_residual = self.moment_residual();
        let floor = n / (2.0 * count);
        let floor_violation = self
            .y
            .iter()
            .chain(&self.y_tilde)
            .map(|&v| (floor - v) / n)
            .fold(f64::NEG_INFINITY, f64::max);
        let closeness_violation = self
            .y
            .iter()
            .zip(&self.y_tilde)
            .map(|(&a, &b)| ((a - b).abs() - 4.0 * eta * a) / n)
            .fold(f64::NEG_INFINITY, f64::max);
        let gap_floor = eta * self.alpha * n * max_f;
        let gap_deficit = if max_f > 0.0 {
            (gap_floor - self.gap) / (n * max_f)
        } else {
            0.0
        };
        let satisfied = mass_residual <= 1e-8
            && moment_residual <= 1e-6
            && floor_violation <= 1e-8
            && closeness_violation <= 1e-8
            && gap_deficit <= 1e-8;
        WeightInvariantReport {
            mass_residual,
            moment_residual,
            floor_violation,
            closeness_violation,
            gap_deficit,
            satisfied,
        }
    }
}

/// Extract `t+2` grid points where the best-approximation error alternates
/// in sign at near-maximal amplitude. The best approximation restricted to
/// these nodes keeps (up to grid slack) the full-grid inapproximability.
pub fn equioscillation_nodes(
    domain: &DiscreteDomain,
    f_values: &[f64],
    t: usize,
) -> Result<Vec<f64>, InstanceError> {
    let needed = t + 2;
    if domain.len() < 10 * needed {
        return Err(InstanceError::InvalidParameter(
            "grid must have at least 10(t+2) points",
        ));
    }
    let result = best_uniform_approx(domain, f_values, t)?;
    let errors: Vec<f64> = domain
        .points()
        .iter()
        .zip(f_values)
        .map(|(&x, &f)| result.polynomial.evaluate(x) - f)
        .collect();
    let champions = polyapprox::sign_run_champions(&errors, 1e-12 * result.error);
    if champions.len() < needed {
        return Err(InstanceError::GridTooCoarse {
            found: champions.len(),
            needed,
        });
    }
    // Window of t+2 consecutive alternating champions with the largest
    // minimum amplitude.
    let mut best_window = 0;
    let mut best_min = f64::NEG_INFINITY;
    for start in 0..=champions.len() - needed {
        let min_amp = champions[start..start + needed]
            .iter()
            .map(|&i| errors[i].abs())
            .fold(f64::INFINITY, f64::min);
        if min_amp > best_min {
            best_min = min_amp;
            best_window = start;
        }
    }
    if best_min < (1.0 - 1e-6) * result.error {
        return Err(InstanceError::GridTooCoarse {
            found: champions
                .iter()
                .filter(|&&i| errors[i].abs() >= (1.0 - 1e-6) * result.error)
                .count(),
            needed,
        });
    }
    Ok(champions[best_window..best_window + needed]
        .iter()
        .map(|&i| domain.points()[i])
        .collect())
}

/// Dual stage: weights `(x, x~)` of equal mass `n` whose power moments
/// match through degree `t` while the `f`-sums differ by at least
/// `2 alpha n max|f|`. Moment constraints are expressed in a Chebyshev
/// basis of the node hull; monomial moments overflow at large `t`.
pub fn dual_weights(
    nodes: &[f64],
    f_values: &[f64],
    t: usize,
    n: f64,
) -> Result<WeightPair, InstanceError> {
    if nodes.len() != t + 2 {
        return Err(InstanceError::InvalidParameter("need exactly t+2 nodes"));
    }
    if n < 1.0 {
        return Err(InstanceError::InvalidParameter("mass must be at least 1"));
    }
    // order f by the sorted nodes
    let mut paired: Vec<(f64, f64)> = nodes
        .iter()
        .copied()
        .zip(f_values.iter().copied())
        .collect();
    paired.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let nodes: Vec<f64> = paired.iter().map(|p| p.0).collect();
    let f_values: Vec<f64> = paired.iter().map(|p| p.1).collect();
    let domain = DiscreteDomain::from_points(nodes.clone())?;
    let node_approx = best_uniform_approx(&domain, &f_values, t)?;
    let alpha = node_approx.alpha;

    let k = nodes.len();
    let lo = nodes[0];
    let hi = nodes[k - 1];
    // variables [x (k), x~ (k)] with unit mass per side; scaled by n after
    let mut constraints: Vec<Vec<f64>> = Vec::with_capacity(t + 2);
    let mut mass_x = vec![0.0; 2 * k];
    let mut mass_xt = vec![0.0; 2 * k];
    for i in 0..k {
        mass_x[i] = 1.0;
        mass_xt[k + i] = 1.0;
    }
    constraints.push(mass_x);
    constraints.push(mass_xt);
    let mut rhs = vec![1.0, 1.0];
    for j in 1..=t {
        let mut row = vec![0.0; 2 * k];
        for (i, &x) in nodes.iter().enumerate() {
            let s = (2.0 * x - lo - hi) / (hi - lo);
            let tj = chebyshev_value(s, j);
            row[i] = tj;
            row[k + i] = -tj;
        }
        constraints.push(row);
        rhs.push(0.0);
    }
    let mut objective = vec![0.0; 2 * k];
    for i in 0..k {
        objective[i] = f_values[i];
        objective[k + i] = -f_values[i];
    }
    let sol = simplex::solve(&StandardLp {
        objective,
        constraints,
        rhs,
    })?;
    let x: Vec<f64> = sol.x[..k].iter().map(|v| v * n).collect();
    let x_tilde: Vec<f64> = sol.x[k..].iter().map(|v| v * n).collect();
    let dual_gap = sol.objective_value * n;
    Ok(WeightPair {
        nodes,
        f_values,
        mass: n,
        alpha,
        degree: t,
        x,
        x_tilde,
        dual_gap,
        eta: None,
        y: Vec::new(),
        y_tilde: Vec::new(),
        gap: 0.0,
    })
}

fn chebyshev_value(s: f64, j: usize) -> f64 {
    if j == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = s;
    for _ in 1..j {
        let next = 2.0 * s * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Mixing stage: blend each dual side with the uniform weight, then
/// cross-mix by `eta`. All five mixed-stage properties are verified before
/// returning; a violation names the failing property.
pub fn mix_weights(pair: &WeightPair, eta: f64) -> Result<WeightPair, InstanceError> {
    if !(eta > 0.0 && eta < 0.5) {
        return Err(InstanceError::InvalidParameter("eta must lie in (0, 1/2)"));
    }
    let k = pair.nodes.len();
    let n = pair.mass;
    let uniform = n / k as f64;
    let w: Vec<f64> = pair.x.iter().map(|&xi| 0.5 * (xi + uniform)).collect();
    let w_tilde: Vec<f64> = pair
        .x_tilde
        .iter()
        .map(|&xi| 0.5 * (xi + uniform))
        .collect();
    let y: Vec<f64> = w
        .iter()
        .zip(&w_tilde)
        .map(|(&a, &b)| 0.5 * (1.0 + eta) * a + 0.5 * (1.0 - eta) * b)
        .collect();
    let y_tilde: Vec<f64> = w
        .iter()
        .zip(&w_tilde)
        .map(|(&a, &b)| 0.5 * (1.0 - eta) * a + 0.5 * (1.0 + eta) * b)
        .collect();
    let gap = neumaier_sum(
        y.iter()
            .zip(&y_tilde)
            .zip(&pair.f_values)
            .map(|((a, b), f)| (a - b) * f),
    );
    let mixed = WeightPair {
        eta: Some(eta),
        y,
        y_tilde,
        gap,
        ..pair.clone()
    };
    let report = mixed.invariant_report();
    let violations: [(&'static str, f64, f64); 5] = [
        ("mass", report.mass_residual, 1e-8),
        ("moment-match", report.moment_residual, 1e-6),
        ("floor", report.floor_violation, 1e-8),
        ("relative-closeness", report.closeness_violation, 1e-8),
        ("gap", report.gap_deficit, 1e-8),
    ];
    for (property, residual, tol) in violations {
        if residual > tol {
            return Err(InstanceError::ConstructionInvariant { property, residual });
        }
    }
    Ok(mixed)
}

/// Largest-remainder rounding to integers preserving the exact total `n`.
/// Each entry moves by less than one; ties break by index order.
pub fn round_multiplicities(y: &[f64], y_tilde: &[f64], n: usize) -> (Vec<usize>, Vec<usize>) {
    (round_side(y, n), round_side(y_tilde, n))
}

fn round_side(weights: &[f64], n: usize) -> Vec<usize> {
    let mut base: Vec<usize> = weights
        .iter()
        .map(|&w| w.max(0.0).floor() as usize)
        .collect();
    let assigned: usize = base.iter().sum();
    assert!(
        assigned <= n,
        "weights must sum to the target total (got {assigned} > {n})"
    );
    let mut remainder = n - assigned;
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = weights[a] - weights[a].floor();
        let fb = weights[b] - weights[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if remainder == 0 {
            break;
        }
        base[i] += 1;
        remainder -= 1;
    }
    assert_eq!(base.iter().sum::<usize>(), n, "rounding lost mass");
    base
}

/// How a hard pair's matrices are realized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PairBacking {
    /// Rotation applied through stored Householder reflectors.
    Rotated,
    /// Materialized dense matrices (capped at [`EXPLICIT_DENSE_CAP`]).
    ExplicitDense,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FunctionTag {
    Inverse,
    UserSupplied,
}

/// A pair `A = U D U^T`, `A~ = U D~ U^T` sharing one Haar rotation, plus
/// the trace gap that distinguishes them.
#[derive(Clone, Debug, Serialize)]
pub struct HardPair {
    pub rotation_seed: u64,
    pub spectrum: SpectrumSpec,
    pub spectrum_tilde: SpectrumSpec,
    pub function: FunctionTag,
    /// `|tr f(D) - tr f(D~)|` from the multiplicities.
    pub trace_gap: f64,
    /// Inapproximability constant used by the pipeline; NaN when the pair
    /// was built directly from multiplicities.
    pub alpha: f64,
    pub backing: PairBacking,
}

/// Describe the indistinguishable pair without materializing any oracle.
pub fn hard_pair_description(
    multiplicities: &[usize],
    multiplicities_tilde: &[usize],
    lambdas: &[f64],
    seed: u64,
    backing: PairBacking,
    f: impl Fn(f64) -> f64,
    function: FunctionTag,
) -> Result<HardPair, InstanceError> {
    let spectrum = SpectrumSpec::new(lambdas.to_vec(), multiplicities.to_vec())?;
    let spectrum_tilde = SpectrumSpec::new(lambdas.to_vec(), multiplicities_tilde.to_vec())?;
    let n = spectrum.dimension();
    if spectrum_tilde.dimension() != n {
        return Err(InstanceError::InvalidParameter(
            "both spectra must have the same total dimension",
        ));
    }
    if backing == PairBacking::ExplicitDense && n > EXPLICIT_DENSE_CAP {
        return Err(InstanceError::DimensionCap {
            n,
            cap: EXPLICIT_DENSE_CAP,
        });
    }
    let trace_gap = (spectrum.trace_of(&f) - spectrum_tilde.trace_of(&f)).abs();
    Ok(HardPair {
        rotation_seed: seed,
        spectrum,
        spectrum_tilde,
        function,
        trace_gap,
        alpha: f64::NAN,
        backing,
    })
}

/// Materialize the two oracles of a described pair. Both share the rotation
/// drawn from the pair's seed.
pub fn materialize_pair(pair: &HardPair) -> Result<(MatVecOracle, MatVecOracle), InstanceError> {
    let n = pair.spectrum.dimension();
    let mut rng = trial_rng(pair.rotation_seed, 0);
    Ok(match pair.backing {
        PairBacking::Rotated => {
            let rotation = Arc::new(HouseholderProduct::sample(n, &mut rng));
            (
                MatVecOracle::rotated_diagonal(rotation.clone(), pair.spectrum.expand()),
                MatVecOracle::rotated_diagonal(rotation, pair.spectrum_tilde.expand()),
            )
        }
        PairBacking::ExplicitDense => {
            if n > EXPLICIT_DENSE_CAP {
                return Err(InstanceError::DimensionCap {
                    n,
                    cap: EXPLICIT_DENSE_CAP,
                });
            }
            let rotation = HouseholderProduct::sample(n, &mut rng);
            let u = rotation.to_dense();
            let build = |diag: Vec<f64>| {
                crate::linalg::Mat::from_fn(n, n, |i, j| {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += u[(i, k)] * diag[k] * u[(j, k)];
                    }
                    s
                })
            };
            (
                MatVecOracle::dense(build(pair.spectrum.expand()), crate::oracle::Mode::TwoSided),
                MatVecOracle::dense(
                    build(pair.spectrum_tilde.expand()),
                    crate::oracle::Mode::TwoSided,
                ),
            )
        }
    })
}

/// Build the indistinguishable pair: the description plus two-sided oracles
/// for `A` and `A~` sharing one Haar rotation.
pub fn build_pair(
    multiplicities: &[usize],
    multiplicities_tilde: &[usize],
    lambdas: &[f64],
    seed: u64,
    backing: PairBacking,
    f: impl Fn(f64) -> f64,
    function: FunctionTag,
) -> Result<(HardPair, MatVecOracle, MatVecOracle), InstanceError> {
    let pair = hard_pair_description(
        multiplicities,
        multiplicities_tilde,
        lambdas,
        seed,
        backing,
        f,
        function,
    )?;
    let (oracle_a, oracle_b) = materialize_pair(&pair)?;
    Ok((pair, oracle_a, oracle_b))
}

/// `Q x = e_1` with a hidden Haar-random orthogonal `Q`: condition number
/// exactly one, one-sided access only.
pub fn orthogonal_system(n: usize, seed: u64) -> Result<(MatVecOracle, Vec<f64>), InstanceError> {
    if n < 2 {
        return Err(InstanceError::InvalidParameter("need n >= 2"));
    }
    let oracle = MatVecOracle::lazy_haar(n, seed)?;
    Ok((oracle, crate::linalg::unit_vector(n, 0)))
}

/// Eigenvalue layouts for split-spectrum benchmark systems.
#[derive(Clone, Copy, Debug, Serialize)]
pub enum SpectrumLayout {
    /// Magnitudes log-spaced on `[1, kappa]`, alternating signs.
    LogLinear,
    /// Magnitudes at Chebyshev extrema of `[1, kappa]`, alternating signs.
    Equioscillation,
    /// `count` eigenvalues at `+-kappa`; the rest log-spaced in
    /// `[1, inner_kappa]`, alternating signs.
    Outliers { count: usize, inner_kappa: f64 },
}

/// A symmetric benchmark system with spectrum in `+-[1, kappa]`.
pub struct SplitSystem {
    pub oracle: MatVecOracle,
    pub eigenvalues: Vec<f64>,
    pub kappa: f64,
}

pub fn split_spectrum_eigenvalues(
    n: usize,
    kappa: f64,
    layout: SpectrumLayout,
) -> Result<Vec<f64>, InstanceError> {
    if n < 2 {
        return Err(InstanceError::InvalidParameter("need n >= 2"));
    }
    if !(kappa >= 1.0) {
        return Err(InstanceError::InvalidLayout("kappa must be at least 1"));
    }
    let signed = |i: usize, m: f64| if i.is_multiple_of(2) { m } else { -m };
    match layout {
        SpectrumLayout::LogLinear => Ok((0..n)
            .map(|i| signed(i, kappa.powf(i as f64 / (n - 1) as f64)))
            .collect()),
        SpectrumLayout::Equioscillation => Ok((0..n)
            .map(|i| {
                let theta = std::f64::consts::PI * i as f64 / (n - 1) as f64;
                let m = 0.5 * (1.0 + kappa) + 0.5 * (kappa - 1.0) * theta.cos();
                signed(i, m)
            })
            .collect()),
        SpectrumLayout::Outliers { count, inner_kappa } => {
            if count >= n {
                return Err(InstanceError::InvalidLayout(
                    "outlier count must be less than n",
                ));
            }
            if !(inner_kappa >= 1.0 && inner_kappa <= kappa) {
                return Err(InstanceError::InvalidLayout(
                    "inner kappa must lie in [1, kappa]",
                ));
            }
            let mut eigs: Vec<f64> = (0..count).map(|i| signed(i, kappa)).collect();
            let rest = n - count;
            eigs.extend((0..rest).map(|i| {
                let m = if rest == 1 {
                    1.0
                } else {
                    inner_kappa.powf(i as f64 / (rest - 1) as f64)
                };
                signed(i, m)
            }));
            Ok(eigs)
        }
    }
}

/// Rotated-diagonal benchmark oracle with the requested layout. The
/// rotation is applied through stored Householder reflectors, so no dense
/// matrix is ever materialized.
pub fn split_spectrum_matrix(
    n: usize,
    kappa: f64,
    layout: SpectrumLayout,
    seed: u64,
) -> Result<SplitSystem, InstanceError> {
    let eigenvalues = split_spectrum_eigenvalues(n, kappa, layout)?;
    let mut rng = trial_rng(seed, 1);
    let rotation = Arc::new(HouseholderProduct::sample(n, &mut rng));
    let oracle = MatVecOracle::rotated_diagonal(rotation, eigenvalues.clone());
    Ok(SplitSystem {
        oracle,
        eigenvalues,
        kappa,
    })
}

/// All stages of the `1/x` pipeline for one `(kappa, t, eta, n)` cell.
pub struct InversePipeline {
    pub nodes: Vec<f64>,
    pub weights: WeightPair,
    pub multiplicities: Vec<usize>,
    pub multiplicities_tilde: Vec<usize>,
    pub pair: HardPair,
}

/// Nodes, dual weights, mixing, rounding, and pair description for
/// `f(x) = 1/x` on the split interval. Oracles are not materialized; call
/// [`materialize_pair`] on the description when black-box access is needed.
pub fn inverse_pipeline(
    kappa: f64,
    t: usize,
    eta: f64,
    n: usize,
    grid_per_side: usize,
    seed: u64,
    backing: PairBacking,
) -> Result<InversePipeline, InstanceError> {
    let domain = DiscreteDomain::split_interval(kappa, grid_per_side)?;
    let f_values = domain.evaluate(|x| 1.0 / x);
    let nodes = equioscillation_nodes(&domain, &f_values, t)?;
    let node_f: Vec<f64> = nodes.iter().map(|&x| 1.0 / x).collect();
    let dual = dual_weights(&nodes, &node_f, t, n as f64)?;
    let mixed = mix_weights(&dual, eta)?;
    let (mult, mult_tilde) = round_multiplicities(&mixed.y, &mixed.y_tilde, n);
    let mut pair = hard_pair_description(
        &mult,
        &mult_tilde,
        &mixed.nodes,
        seed,
        backing,
        |x| 1.0 / x,
        FunctionTag::Inverse,
    )?;
    pair.alpha = mixed.alpha;
    Ok(InversePipeline {
        nodes: mixed.nodes.clone(),
        weights: mixed,
        multiplicities: mult,
        multiplicities_tilde: mult_tilde,
        pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Lu, Mat};

    #[test]
    fn equioscillation_nodes_of_chebyshev_oscillation() {
        // f = T_{t+1} on [-1, 1]: the best degree-t approximation is zero
        // and the error equioscillates exactly at the t+2 extrema.
        let t = 4usize;
        let domain = DiscreteDomain::interval(-1.0, 1.0, 4001).unwrap();
        let f: Vec<f64> = domain
            .points()
            .iter()
            .map(|&x| ((t as f64 + 1.0) * x.acos()).cos())
            .collect();
        let nodes = equioscillation_nodes(&domain, &f, t).unwrap();
        assert_eq!(nodes.len(), t + 2);
        let expected: Vec<f64> = (0..=t + 1)
            .map(|k| (std::f64::consts::PI * k as f64 / (t as f64 + 1.0)).cos())
            .rev()
            .collect();
        for (got, want) in nodes.iter().zip(&expected) {
            assert!((got - want).abs() <= 2.0 / 4000.0, "{got} vs {want}");
        }
    }

    #[test]
    fn equioscillation_nodes_preserve_inapproximability() {
        let domain = DiscreteDomain::interval(1.0, 4.0, 2000).unwrap();
        let f = domain.evaluate(|x| 1.0 / x);
        let full = best_uniform_approx(&domain, &f, 2).unwrap();
        let nodes = equioscillation_nodes(&domain, &f, 2).unwrap();
        assert_eq!(nodes.len(), 4);
        let node_domain = DiscreteDomain::from_points(nodes.clone()).unwrap();
        let node_f: Vec<f64> = nodes.iter().map(|&x| 1.0 / x).collect();
        let restricted = best_uniform_approx(&node_domain, &node_f, 2).unwrap();
        assert!(
            (restricted.error - full.error).abs() <= 1e-5 * full.error,
            "node error {} vs full error {}",
            restricted.error,
            full.error
        );
    }

    #[test]
    fn equioscillation_nodes_alternate_on_split_interval() {
        let domain = DiscreteDomain::split_interval(3.0, 1000).unwrap();
        let f = domain.evaluate(|x| 1.0 / x);
        let nodes = equioscillation_nodes(&domain, &f, 5).unwrap();
        assert_eq!(nodes.len(), 7);
        let approx = best_uniform_approx(&domain, &f, 5).unwrap();
        let signs: Vec<f64> = nodes
            .iter()
            .map(|&x| (approx.polynomial.evaluate(x) - 1.0 / x).signum())
            .collect();
        for w in signs.windows(2) {
            assert!(w[0] * w[1] < 0.0, "signs do not alternate: {signs:?}");
        }
    }

    #[test]
    fn dual_weights_two_node_hand_solvable_case() {
        // t=0, nodes {-1, 1}, f = identity, n = 2: all mass at lambda = 1
        // for x and at lambda = -1 for x~; gap 4 = 2 alpha n max|f|.
        let pair = dual_weights(&[1.0, -1.0], &[1.0, -1.0], 0, 2.0).unwrap();
        assert!((pair.alpha - 1.0).abs() <= 1e-9);
        assert!((pair.dual_gap - 4.0).abs() <= 1e-8);
        // sorted nodes are [-1, 1]; mass 2 sits on the +1 node for x
        assert!((pair.x[1] - 2.0).abs() <= 1e-9);
        assert!((pair.x_tilde[0] - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn dual_weights_vanish_for_polynomial_targets() {
        // f itself a degree-<=t polynomial: moment constraints pin the f-sum
        let nodes = [0.5, 1.0, 2.0, 3.0];
        let f: Vec<f64> = nodes.iter().map(|&x| 2.0 - x + x * x).collect();
        let pair = dual_weights(&nodes, &f, 2, 10.0).unwrap();
        assert!(pair.alpha <= 1e-9);
        assert!(pair.dual_gap.abs() <= 1e-6);
    }

    #[test]
    fn dual_weights_achieve_twice_alpha_n() {
        let domain = DiscreteDomain::split_interval(4.0, 800).unwrap();
        let f = domain.evaluate(|x| 1.0 / x);
        let nodes = equioscillation_nodes(&domain, &f, 5).unwrap();
        let node_f: Vec<f64> = nodes.iter().map(|&x| 1.0 / x).collect();
        let n = 1e6;
        let pair = dual_weights(&nodes, &node_f, 5, n).unwrap();
        let max_f = node_f.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(
            pair.dual_gap >= 2.0 * pair.alpha * n * max_f * (1.0 - 1e-6),
            "gap {} vs 2 alpha n {}",
            pair.dual_gap,
            2.0 * pair.alpha * n * max_f
        );
    }

    #[test]
    fn mix_weights_small_eta_limit() {
        let pair = dual_weights(&[1.0, -1.0], &[1.0, -1.0], 0, 100.0).unwrap();
        let mixed = mix_weights(&pair, 1e-6).unwrap();
        assert!(mixed.gap.abs() <= 1e-3);
        for (a, b) in mixed.y.iter().zip(&mixed.y_tilde) {
            assert!((a - b).abs() <= 1e-3);
        }
    }

    #[test]
    fn mix_weights_two_node_case_hits_floor_and_gap() {
        let pair = dual_weights(&[1.0, -1.0], &[1.0, -1.0], 0, 100.0).unwrap();
        let mixed = mix_weights(&pair, 0.1).unwrap();
        let report = mixed.invariant_report();
        assert!(report.satisfied, "{report:?}");
        for &v in mixed.y.iter().chain(&mixed.y_tilde) {
            assert!(v >= 25.0 - 1e-8);
        }
        // gap floor: eta alpha n max|f| = 0.1 * 1 * 100 * 1
        assert!(mixed.gap >= 10.0 - 1e-8, "gap {}", mixed.gap);
    }

    #[test]
    fn mix_weights_degenerate_equal_sides() {
        // x = x~ for a polynomial target: y = y~ and gap 0
        let nodes = [1.0, 2.0, 3.0];
        let f: Vec<f64> = nodes.to_vec();
        let pair = dual_weights(&nodes, &f, 1, 9.0).unwrap();
        let mixed = mix_weights(&pair, 0.2).unwrap();
        assert!(mixed.gap.abs() <= 1e-6);
        assert!(mixed.invariant_report().satisfied);
    }

    #[test]
    fn rounding_preserves_totals_and_moves_less_than_one() {
        let (n1, _) = round_multiplicities(&[3.0, 4.0, 5.0], &[5.0, 4.0, 3.0], 12);
        assert_eq!(n1, vec![3, 4, 5]);

        let (n, _) = round_multiplicities(&[1.5, 1.5, 1.0], &[1.0, 1.5, 1.5], 4);
        assert_eq!(n, vec![2, 1, 1]); // tie broken by index
        assert_eq!(n.iter().sum::<usize>(), 4);

        let y = [10.3, 20.9, 30.4, 38.4];
        let (n, _) = round_multiplicities(&y, &y, 100);
        assert_eq!(n.iter().sum::<usize>(), 100);
        for (ni, yi) in n.iter().zip(&y) {
            assert!((*ni as f64 - yi).abs() < 1.0);
        }
    }

    #[test]
    fn rounded_moment_mismatch_is_bounded() {
        let domain = DiscreteDomain::split_interval(4.0, 800).unwrap();
        let f = domain.evaluate(|x| 1.0 / x);
        let nodes = equioscillation_nodes(&domain, &f, 5).unwrap();
        let node_f: Vec<f64> = nodes.iter().map(|&x| 1.0 / x).collect();
        let n = 100_000usize;
        let pair = dual_weights(&nodes, &node_f, 5, n as f64).unwrap();
        let mixed = mix_weights(&pair, 0.1).unwrap();
        let (big_n, big_nt) = round_multiplicities(&mixed.y, &mixed.y_tilde, n);
        let t = 5;
        let max_lambda = nodes.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        for j in 1..=t {
            let mismatch: f64 = nodes
                .iter()
                .enumerate()
                .map(|(i, &l)| (big_n[i] as f64 - big_nt[i] as f64) * l.powi(j))
                .sum();
            let bound = 2.0 * (t as f64 + 2.0) * max_lambda.powi(j);
            assert!(
                mismatch.abs() <= bound,
                "moment {j}: {mismatch} vs bound {bound}"
            );
        }
    }

    #[test]
    fn build_pair_equal_multiplicities_gives_zero_gap() {
        let (pair, _a, _b) = build_pair(
            &[3, 2],
            &[3, 2],
            &[1.0, 2.0],
            7,
            PairBacking::Rotated,
            |x| 1.0 / x,
            FunctionTag::Inverse,
        )
        .unwrap();
        assert_eq!(pair.trace_gap, 0.0);
    }

    #[test]
    fn build_pair_trace_and_frobenius_match_dense_routes() {
        let lambdas = [1.0, -1.5, 3.0];
        let mult = [70usize, 70, 60];
        let mult_t = [80usize, 65, 55];
        let (pair, mut oa, _ob) = build_pair(
            &mult,
            &mult_t,
            &lambdas,
            11,
            PairBacking::ExplicitDense,
            |x| 1.0 / x,
            FunctionTag::Inverse,
        )
        .unwrap();
        // dense route: materialize A through the oracle, invert, trace
        let n = 200;
        let mut a = Mat::zeros(n, n);
        for j in 0..n {
            let col = oa.forward(&crate::linalg::unit_vector(n, j)).unwrap();
            for i in 0..n {
                a[(i, j)] = col[i];
            }
        }
        let inv = Lu::factor(&a).unwrap().inverse();
        let dense_trace: f64 = (0..n).map(|i| inv[(i, i)]).sum();
        let spec_trace = pair.spectrum.trace_of(|x| 1.0 / x);
        assert!(
            (dense_trace - spec_trace).abs() <= 1e-9 * spec_trace.abs().max(1.0),
            "{dense_trace} vs {spec_trace}"
        );
        let dense_frob: f64 = (0..n)
            .map(|i| (0..n).map(|j| inv[(i, j)] * inv[(i, j)]).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        let spec_frob = pair.spectrum.frobenius_of(|x| 1.0 / x);
        assert!((dense_frob - spec_frob).abs() <= 1e-9 * spec_frob);
        // spectra are the declared multisets
        let eigs = crate::linalg::jacobi_eigenvalues(&a, 1e-13);
        let mut want = pair.spectrum.expand();
        want.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (e, w) in eigs.iter().zip(&want) {
            assert!((e - w).abs() <= 1e-8, "{e} vs {w}");
        }
    }

    #[test]
    fn build_pair_dense_cap_enforced() {
        let mult = vec![3000usize, 2000];
        let err = build_pair(
            &mult,
            &mult,
            &[1.0, 2.0],
            1,
            PairBacking::ExplicitDense,
            |x| x,
            FunctionTag::UserSupplied,
        );
        assert!(matches!(err, Err(InstanceError::DimensionCap { .. })));
    }

    #[test]
    fn orthogonal_system_solution_has_unit_norm() {
        let (mut oracle, b) = orthogonal_system(16, 3).unwrap();
        for i in 0..16 {
            oracle.forward(&crate::linalg::unit_vector(16, i)).unwrap();
        }
        let q = oracle.lazy_haar_state().unwrap().complete();
        let x_true = q.matvec_transpose(&b);
        assert!((crate::linalg::nrm2(&x_true) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn split_spectrum_layouts() {
        let eigs = split_spectrum_eigenvalues(1000, 32.0, SpectrumLayout::LogLinear).unwrap();
        let max = eigs.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        let min = eigs.iter().fold(f64::INFINITY, |a, &x| a.min(x.abs()));
        assert!((max / min - 32.0).abs() <= 1e-9);
        assert!(eigs.iter().any(|&x| x < 0.0) && eigs.iter().any(|&x| x > 0.0));

        let eigs = split_spectrum_eigenvalues(100, 8.0, SpectrumLayout::Equioscillation).unwrap();
        for &e in &eigs {
            assert!(e.abs() >= 1.0 - 1e-12 && e.abs() <= 8.0 + 1e-12);
        }

        let eigs = split_spectrum_eigenvalues(
            100,
            1000.0,
            SpectrumLayout::Outliers {
                count: 5,
                inner_kappa: 4.0,
            },
        )
        .unwrap();
        assert_eq!(eigs.iter().filter(|x| x.abs() > 999.0).count(), 5);
        assert!(matches!(
            split_spectrum_eigenvalues(
                10,
                2.0,
                SpectrumLayout::Outliers {
                    count: 20,
                    inner_kappa: 1.0
                }
            ),
            Err(InstanceError::InvalidLayout(_))
        ));
    }

    #[test]
    fn kappa_one_split_system_is_orthogonal_involution() {
        // all eigenvalues +-1: A^T A = I, so CGNE converges immediately
        let system = split_spectrum_matrix(20, 1.0, SpectrumLayout::LogLinear, 5).unwrap();
        let mut oracle = system.oracle;
        let mut rng = crate::rng::seeded_rng(2);
        let b = crate::rng::gaussian_vector(20, &mut rng);
        let report = crate::solvers::cgne(&mut oracle, &b, 1e-10, 5).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 2, "iterations {}", report.iterations);
    }

    #[test]
    fn full_inverse_pipeline_small_cell() {
        let pipe = inverse_pipeline(4.0, 3, 0.1, 2000, 600, 42, PairBacking::Rotated).unwrap();
        assert!(pipe.weights.invariant_report().satisfied);
        let t = 3.0;
        let max_f = 1.0;
        let fractional_gap = pipe.weights.gap;
        let rounding_slack = 2.0 * (t + 2.0) * max_f;
        assert!(
            pipe.pair.trace_gap >= fractional_gap - rounding_slack,
            "trace gap {} below fractional {} - slack {}",
            pipe.pair.trace_gap,
            fractional_gap,
            rounding_slack
        );
    }
}
