//! Best uniform polynomial approximation on finite grids, and the
//! closed-form inapproximability bounds for `1/x` on intervals and split
//! intervals.
//!
//! The workhorse is a linear program in the equioscillation dual: maximize
//! the `f`-moment of a signed measure that annihilates the polynomial space
//! and has unit total variation. Its optimum is the minimax error, and its
//! basic points form the active reference from which the coefficients are
//! recovered by a square interpolation solve. A discrete Remez exchange
//! provides an independent route used both as a fallback and as a
//! cross-check. Polynomials live in a Chebyshev basis scaled to the domain's
//! bounding interval; monomial representations at degree 20+ would destroy
//! the conditioning.

use serde::Serialize;

use crate::linalg::{Lu, Mat};
use crate::simplex::{self, LpError, StandardLp};

#[derive(Debug, thiserror::Error)]
pub enum ApproxError {
    #[error("domain has {got} points but degree {degree} needs at least {needed}")]
    DimensionError {
        degree: usize,
        needed: usize,
        got: usize,
    },
    #[error("invalid domain: {0}")]
    DomainError(&'static str),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("grid too coarse: found {found} alternating near-extremal points, need {needed}")]
    GridTooCoarse { found: usize, needed: usize },
    #[error("LP optimum {lp:.6e} and recovered polynomial error {recovered:.6e} disagree")]
    Inconsistent { lp: f64, recovered: f64 },
}

/// Sorted grid of real points standing in for a compact set.
#[derive(Clone, Debug, Serialize)]
pub struct DiscreteDomain {
    points: Vec<f64>,
}

impl DiscreteDomain {
    pub fn from_points(mut points: Vec<f64>) -> Result<Self, ApproxError> {
        if points.is_empty() {
            return Err(ApproxError::DomainError("empty domain"));
        }
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ApproxError::DomainError(
                "points must be strictly increasing",
            ));
        }
        Ok(DiscreteDomain { points })
    }

    /// Uniform grid on `[lo, hi]`, endpoints included.
    pub fn interval(lo: f64, hi: f64, count: usize) -> Result<Self, ApproxError> {
        if !(hi > lo) || count < 2 {
            return Err(ApproxError::DomainError(
                "need hi > lo and at least 2 points",
            ));
        }
        let h = (hi - lo) / (count - 1) as f64;
        DiscreteDomain::from_points((0..count).map(|i| lo + h * i as f64).collect())
    }

    /// Symmetric grid on `[-kappa, -1] U [1, kappa]` with `per_side` points
    /// per component.
    pub fn split_interval(kappa: f64, per_side: usize) -> Result<Self, ApproxError> {
        if !(kappa >= 1.0) {
            return Err(ApproxError::DomainError("kappa must be at least 1"));
        }
        if per_side < 2 {
            return Err(ApproxError::DomainError("need at least 2 points per side"));
        }
        let h = (kappa - 1.0) / (per_side - 1) as f64;
        let positive: Vec<f64> = (0..per_side).map(|i| 1.0 + h * i as f64).collect();
        let mut points: Vec<f64> = positive.iter().rev().map(|x| -x).collect();
        points.extend(&positive);
        DiscreteDomain::from_points(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest interval containing the domain.
    pub fn bounding_interval(&self) -> (f64, f64) {
        (self.points[0], *self.points.last().unwrap())
    }

    pub fn is_symmetric_about_zero(&self) -> bool {
        let n = self.points.len();
        (0..n).all(|i| (self.points[i] + self.points[n - 1 - i]).abs() <= 1e-12)
    }

    pub fn evaluate(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.points.iter().map(|&x| f(x)).collect()
    }
}

/// Values of `T_0..T_k` at the affine image of `x` in `[-1, 1]`.
fn chebyshev_row(lo: f64, hi: f64, x: f64, k: usize) -> Vec<f64> {
    let s = (2.0 * x - lo - hi) / (hi - lo);
    let mut row = Vec::with_capacity(k + 1);
    row.push(1.0);
    if k >= 1 {
        row.push(s);
    }
    for j in 2..=k {
        let next = 2.0 * s * row[j - 1] - row[j - 2];
        row.push(next);
    }
    row
}

/// Polynomial in a Chebyshev basis scaled to `[lo, hi]`.
#[derive(Clone, Debug, Serialize)]
pub struct ChebyshevPolynomial {
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

impl ChebyshevPolynomial {
    pub fn zero(lo: f64, hi: f64) -> Self {
        ChebyshevPolynomial {
            lo,
            hi,
            coeffs: vec![0.0],
        }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Clenshaw evaluation.
    pub fn evaluate(&self, x: f64) -> f64 {
        let s = (2.0 * x - self.lo - self.hi) / (self.hi - self.lo);
        let mut y1 = 0.0;
        let mut y2 = 0.0;
        for &c in self.coeffs.iter().skip(1).rev() {
            let y = 2.0 * s * y1 - y2 + c;
            y2 = y1;
            y1 = y;
        }
        s * y1 - y2 + self.coeffs[0]
    }

    /// Keep only odd-order terms. Valid as the odd part of the polynomial
    /// only when the basis interval is symmetric about zero.
    pub fn odd_part(&self) -> ChebyshevPolynomial {
        assert!(
            (self.lo + self.hi).abs() <= 1e-9 * self.hi.abs().max(1.0),
            "odd part requires a symmetric basis interval"
        );
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(j, &c)| if j % 2 == 1 { c } else { 0.0 })
            .collect();
        ChebyshevPolynomial {
            lo: self.lo,
            hi: self.hi,
            coeffs,
        }
    }

    /// Coefficients in the monomial basis (ascending powers of `x`). Only
    /// sensible at modest degree; used to drive `polynomial_apply`.
    pub fn to_monomial(&self) -> Vec<f64> {
        // T_j in the scaled variable s, then substitute s = a x + b.
        let a = 2.0 / (self.hi - self.lo);
        let b = -(self.lo + self.hi) / (self.hi - self.lo);
        let deg = self.degree();
        let mut t_prev = vec![1.0]; // T_0(s)
        let mut t_cur = vec![b, a]; // T_1(s) = s = a x + b
        let mut acc = vec![0.0; deg + 1];
        acc[0] += self.coeffs[0];
        if deg >= 1 {
            add_scaled(&mut acc, self.coeffs[1], &t_cur);
        }
        for j in 2..=deg {
            // T_j = 2 s T_{j-1} - T_{j-2}
            let mut next = vec![0.0; j + 1];
            // 2(a x + b) * t_cur
            for (p, &cp) in t_cur.iter().enumerate() {
                next[p] += 2.0 * b * cp;
                next[p + 1] += 2.0 * a * cp;
            }
            for (p, &cp) in t_prev.iter().enumerate() {
                next[p] -= cp;
            }
            add_scaled(&mut acc, self.coeffs[j], &next);
            t_prev = t_cur;
            t_cur = next;
        }
        acc
    }
}

fn add_scaled(acc: &mut [f64], scale: f64, poly: &[f64]) {
    for (a, p) in acc.iter_mut().zip(poly) {
        *a += scale * p;
    }
}

/// Best uniform approximant of given degree on a grid, with its error and
/// equioscillation evidence.
#[derive(Clone, Debug, Serialize)]
pub struct ApproxResult {
    pub degree: usize,
    pub polynomial: ChebyshevPolynomial,
    /// `max |p - f|` over the grid.
    pub error: f64,
    /// Grid points attaining at least `(1 - 1e-8) * error`.
    pub witnesses: Vec<f64>,
    /// `error / max |f|`.
    pub alpha: f64,
}

struct MinimaxSolution {
    coeffs: Vec<f64>,
    error: f64,
}

/// How the LP's near-optimal solution is refined into coefficients.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Polish {
    /// Discrete exchange seeded from the active set (Haar bases only).
    Exchange,
    /// Square solve on the LP reference; accurate to the LP tolerance.
    None,
}

/// Minimax fit over an arbitrary basis: minimize `max_i |B_i . c - f_i|`.
/// `basis_rows[i]` holds the basis values at grid point `i`.
fn solve_minimax(
    basis_rows: &[Vec<f64>],
    values: &[f64],
    polish: Polish,
) -> Result<MinimaxSolution, ApproxError> {
    let m = basis_rows.len();
    let k = basis_rows[0].len();
    assert_eq!(values.len(), m);

    // Equioscillation dual: maximize sum f_i (mu+_i - mu-_i) subject to
    // B^T (mu+ - mu-) = 0 and total mass 1.
    let ncols = 2 * m;
    let mut objective = Vec::with_capacity(ncols);
    objective.extend_from_slice(values);
    objective.extend(values.iter().map(|v| -v));
    let mut constraints = Vec::with_capacity(k + 1);
    for j in 0..k {
        let mut row = Vec::with_capacity(ncols);
        row.extend(basis_rows.iter().map(|r| r[j]));
        row.extend(basis_rows.iter().map(|r| -r[j]));
        constraints.push(row);
    }
    constraints.push(vec![1.0; ncols]);
    let mut rhs = vec![0.0; k];
    rhs.push(1.0);
    let lp = StandardLp {
        objective,
        constraints,
        rhs,
    };
    // Warm start from an alternating spread reference: for a Haar basis the
    // annihilating measure on k+1 spread points has strictly one-signed
    // weights in one of the two alternation parities, so one candidate basis
    // is feasible and phase 1 (a badly degenerate vertex here) is skipped.
    let reference = spread_indices(m, k + 1);
    let parity_a: Vec<usize> = reference
        .iter()
        .enumerate()
        .map(|(j, &i)| if j % 2 == 0 { i } else { m + i })
        .collect();
    let parity_b: Vec<usize> = reference
        .iter()
        .enumerate()
        .map(|(j, &i)| if j % 2 == 0 { m + i } else { i })
        .collect();
    let dual = simplex::solve_with_warm_bases(&lp, &[parity_a, parity_b])?;
    let lp_error = dual.objective_value.max(0.0);

    // Active reference: the optimal basis columns. A mu+ column at point i
    // means the error there is +E (f above p), a mu- column means -E.
    let mut active: Vec<(usize, f64)> = Vec::new();
    for &j in &dual.basis {
        if j >= 2 * m {
            continue; // artificial leftover on a redundant row
        }
        let (i, sign) = if j < m { (j, 1.0) } else { (j - m, -1.0) };
        if !active.iter().any(|&(ai, _)| ai == i) {
            active.push((i, sign));
        }
    }
    active.sort_by_key(|&(i, _)| i);

    let sol = match polish {
        // Polish to the exact discrete vertex: the LP terminates within its
        // reduced-cost tolerance (~1e-9 absolute), while the equioscillation
        // witnesses need the reference errors equal to machine precision.
        // The exchange seeded with the LP's active reference reaches that
        // vertex in a round or two. Valid for Haar bases (alternating
        // optimal references), which all polished callers use.
        Polish::Exchange => {
            let seed: Vec<usize> = if active.len() == k + 1 {
                active.iter().map(|&(i, _)| i).collect()
            } else {
                spread_indices(m, k + 1)
            };
            exchange_on_rows(basis_rows, values, &seed)?
        }
        // Recover the coefficients from the LP's own active reference and
        // signs (complementary slackness); no alternation structure assumed.
        Polish::None => {
            recover_from_reference(basis_rows, values, &active).unwrap_or(MinimaxSolution {
                coeffs: vec![0.0; k],
                error: f64::INFINITY,
            })
        }
    };
    let tol = (1e-7 * lp_error).max(1e-9);
    if (sol.error - lp_error).abs() > tol {
        return Err(ApproxError::Inconsistent {
            lp: lp_error,
            recovered: sol.error,
        });
    }
    Ok(sol)
}

/// Solve the square system `B_i . c + sigma_i E = f_i` over the LP's active
/// reference with its complementary-slackness signs.
fn recover_from_reference(
    basis_rows: &[Vec<f64>],
    values: &[f64],
    reference: &[(usize, f64)],
) -> Option<MinimaxSolution> {
    let k = basis_rows[0].len();
    if reference.len() != k + 1 {
        return None;
    }
    let dim = k + 1;
    let mut a = Mat::zeros(dim, dim);
    let mut b = vec![0.0; dim];
    for (row, &(i, sign)) in reference.iter().enumerate() {
        for j in 0..k {
            a[(row, j)] = basis_rows[i][j];
        }
        a[(row, k)] = sign;
        b[row] = values[i];
    }
    let lu = Lu::factor(&a).ok()?;
    let sol = lu.solve(&b);
    let coeffs = sol[..k].to_vec();
    let error = max_abs_error(basis_rows, values, &coeffs);
    Some(MinimaxSolution { coeffs, error })
}

fn max_abs_error(basis_rows: &[Vec<f64>], values: &[f64], coeffs: &[f64]) -> f64 {
    basis_rows
        .iter()
        .zip(values)
        .map(|(row, &f)| (crate::linalg::dot(row, coeffs) - f).abs())
        .fold(0.0, f64::max)
}

fn spread_indices(m: usize, count: usize) -> Vec<usize> {
    (0..count)
        .map(|i| ((i as f64) * ((m - 1) as f64) / ((count - 1).max(1) as f64)).round() as usize)
        .collect()
}

/// Discrete Remez exchange over arbitrary basis rows, seeded with a
/// reference index set. Terminates exactly on a finite grid.
fn exchange_on_rows(
    basis_rows: &[Vec<f64>],
    values: &[f64],
    seed: &[usize],
) -> Result<MinimaxSolution, ApproxError> {
    let k = basis_rows[0].len();
    let dim = k + 1;
    let mut reference: Vec<usize> = seed.to_vec();
    reference.sort_unstable();
    reference.dedup();
    if reference.len() != dim {
        return Err(ApproxError::GridTooCoarse {
            found: reference.len(),
            needed: dim,
        });
    }
    for _round in 0..400 {
        // Solve with alternating signs on the current reference.
        let mut a = Mat::zeros(dim, dim);
        let mut b = vec![0.0; dim];
        for (row, &i) in reference.iter().enumerate() {
            for j in 0..k {
                a[(row, j)] = basis_rows[i][j];
            }
            a[(row, k)] = if row % 2 == 0 { 1.0 } else { -1.0 };
            b[row] = values[i];
        }
        let lu = Lu::factor(&a).map_err(|_| ApproxError::GridTooCoarse {
            found: dim,
            needed: dim,
        })?;
        let sol = lu.solve(&b);
        let coeffs = sol[..k].to_vec();

        let errors: Vec<f64> = basis_rows
            .iter()
            .zip(values)
            .map(|(row, &f)| crate::linalg::dot(row, &coeffs) - f)
            .collect();
        let emax = errors.iter().fold(0.0f64, |acc, e| acc.max(e.abs()));

        // New reference: champions of maximal sign runs, trimmed to dim
        // while keeping the global maximum. On a finite grid the reference
        // set stabilizes exactly, which is the termination condition.
        let champions = sign_run_champions(&errors, 1e-13 * emax);
        if champions.len() < dim {
            return Ok(MinimaxSolution {
                coeffs,
                error: emax,
            });
        }
        let next = trim_champions(&champions, &errors, dim);
        if next == reference {
            return Ok(MinimaxSolution {
                coeffs,
                error: emax,
            });
        }
        reference = next;
    }
    // Exchange on a finite grid converges; reaching here means numerical
    // noise kept toggling the reference. Report the last iterate.
    let mut a = Mat::zeros(dim, dim);
    let mut b = vec![0.0; dim];
    for (row, &i) in reference.iter().enumerate() {
        for j in 0..k {
            a[(row, j)] = basis_rows[i][j];
        }
        a[(row, k)] = if row % 2 == 0 { 1.0 } else { -1.0 };
        b[row] = values[i];
    }
    let lu = Lu::factor(&a).map_err(|_| ApproxError::GridTooCoarse {
        found: dim,
        needed: dim,
    })?;
    let sol = lu.solve(&b);
    let coeffs = sol[..k].to_vec();
    let error = max_abs_error(basis_rows, values, &coeffs);
    Ok(MinimaxSolution { coeffs, error })
}

/// Index of the largest-|e| point in each maximal run of constant error
/// sign, skipping runs whose amplitude is below `floor`.
pub(crate) fn sign_run_champions(errors: &[f64], floor: f64) -> Vec<usize> {
    let mut champions: Vec<usize> = Vec::new();
    let mut run_sign = 0i8;
    let mut run_best: Option<usize> = None;
    for (i, &e) in errors.iter().enumerate() {
        let s = if e > floor {
            1i8
        } else if e < -floor {
            -1i8
        } else {
            0i8
        };
        if s == 0 {
            continue;
        }
        if s != run_sign {
            if let Some(bi) = run_best {
                champions.push(bi);
            }
            run_sign = s;
            run_best = Some(i);
        } else if errors[i].abs() > errors[run_best.unwrap()].abs() {
            run_best = Some(i);
        }
    }
    if let Some(bi) = run_best {
        champions.push(bi);
    }
    champions
}

/// Keep `dim` consecutive champions, always containing the global max.
fn trim_champions(champions: &[usize], errors: &[f64], dim: usize) -> Vec<usize> {
    let best_pos = champions
        .iter()
        .enumerate()
        .max_by(|a, b| errors[*a.1].abs().partial_cmp(&errors[*b.1].abs()).unwrap())
        .map(|(pos, _)| pos)
        .unwrap();
    let mut start = best_pos.saturating_sub(dim / 2);
    if start + dim > champions.len() {
        start = champions.len() - dim;
    }
    // ensure best is inside [start, start+dim)
    if best_pos < start {
        start = best_pos;
    } else if best_pos >= start + dim {
        start = best_pos + 1 - dim;
    }
    champions[start..start + dim].to_vec()
}

/// Best uniform degree-`t` approximation of the values `f` on the domain.
pub fn best_uniform_approx(
    domain: &DiscreteDomain,
    f_values: &[f64],
    t: usize,
) -> Result<ApproxResult, ApproxError> {
    let m = domain.len();
    if f_values.len() != m {
        return Err(ApproxError::DomainError(
            "value count must match domain size",
        ));
    }
    if m < t + 2 {
        return Err(ApproxError::DimensionError {
            degree: t,
            needed: t + 2,
            got: m,
        });
    }
    let (lo, hi) = domain.bounding_interval();
    let rows: Vec<Vec<f64>> = domain
        .points()
        .iter()
        .map(|&x| chebyshev_row(lo, hi, x, t))
        .collect();
    let sol = solve_minimax(&rows, f_values, Polish::Exchange)?;
    let polynomial = ChebyshevPolynomial {
        lo,
        hi,
        coeffs: sol.coeffs,
    };
    let max_f = f_values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let threshold = (1.0 - 1e-8) * sol.error;
    let witnesses: Vec<f64> = domain
        .points()
        .iter()
        .zip(f_values)
        .filter(|(&x, &fv)| (polynomial.evaluate(x) - fv).abs() >= threshold)
        .map(|(&x, _)| x)
        .collect();
    Ok(ApproxResult {
        degree: t,
        polynomial,
        error: sol.error,
        witnesses,
        alpha: if max_f > 0.0 { sol.error / max_f } else { 0.0 },
    })
}

/// Best uniform approximation of `1/x` on the discretized split interval
/// `[-kappa, -1] U [1, kappa]`.
pub fn min_error_inverse_split(
    kappa: f64,
    t: usize,
    per_side: usize,
) -> Result<ApproxResult, ApproxError> {
    if !(kappa >= 2.0) {
        return Err(ApproxError::DomainError("kappa must be at least 2"));
    }
    if per_side < 10 * (t + 2) {
        return Err(ApproxError::DomainError(
            "need at least 10(t+2) grid points per side",
        ));
    }
    let domain = DiscreteDomain::split_interval(kappa, per_side)?;
    let values = domain.evaluate(|x| 1.0 / x);
    best_uniform_approx(&domain, &values, t)
}

/// Certificate produced by [`split_reduce`]: the sup-errors of the reduced
/// polynomial against `1/y` and of the original against `1/x` on matched
/// grids, with the inequality `reduced <= original` checked pointwise.
#[derive(Clone, Debug, Serialize)]
pub struct SplitReduction {
    pub q: ChebyshevPolynomial,
    /// `max_y |q(y) - 1/y|` over the squared grid.
    pub reduced_error: f64,
    /// `max_x |p(x) - 1/x|` over the symmetric split grid.
    pub original_error: f64,
    pub certified: bool,
}

/// Extract the odd part of `p`, write it as `x q(x^2)`, and certify that `q`
/// approximates `1/y` on `[1, kappa^2]` no worse than `p` approximates `1/x`
/// on the split interval.
pub fn split_reduce(
    p: &ChebyshevPolynomial,
    kappa: f64,
    per_side: usize,
) -> Result<SplitReduction, ApproxError> {
    if !(kappa >= 1.0) {
        return Err(ApproxError::DomainError("kappa must be at least 1"));
    }
    let odd = p.odd_part();
    let q_degree = if p.degree() >= 1 {
        (p.degree() - 1) / 2
    } else {
        0
    };
    let y_lo = 1.0;
    let y_hi = kappa * kappa;

    // Interpolate q at Chebyshev points of [1, kappa^2]: q(x^2) = odd(x)/x.
    let nodes = q_degree + 1;
    let q = if odd.coeffs.iter().all(|&c| c == 0.0) {
        ChebyshevPolynomial::zero(y_lo, y_hi)
    } else {
        let ys: Vec<f64> = (0..nodes)
            .map(|i| {
                let theta = std::f64::consts::PI * (i as f64 + 0.5) / nodes as f64;
                0.5 * (y_lo + y_hi) + 0.5 * (y_hi - y_lo) * theta.cos()
            })
            .collect();
        let mut a = Mat::zeros(nodes, nodes);
        let mut b = vec![0.0; nodes];
        for (row, &y) in ys.iter().enumerate() {
            let vals = chebyshev_row(y_lo, y_hi, y, q_degree);
            for (col, v) in vals.iter().enumerate() {
                a[(row, col)] = *v;
            }
            let x = y.sqrt();
            b[row] = odd.evaluate(x) / x;
        }
        let lu =
            Lu::factor(&a).map_err(|_| ApproxError::DomainError("degenerate interpolation"))?;
        let coeffs = lu.solve(&b);
        ChebyshevPolynomial {
            lo: y_lo,
            hi: y_hi,
            coeffs,
        }
    };

    // Matched grids: positive side x-grid and its squares.
    let split = DiscreteDomain::split_interval(kappa, per_side.max(2))?;
    let mut reduced_error = 0.0f64;
    let mut original_error = 0.0f64;
    let mut certified = true;
    for &x in split.points().iter().filter(|&&x| x > 0.0) {
        let y = x * x;
        let eq = (q.evaluate(y) - 1.0 / y).abs();
        let ep_plus = (p.evaluate(x) - 1.0 / x).abs();
        let ep_minus = (p.evaluate(-x) + 1.0 / x).abs();
        let ep = ep_plus.max(ep_minus);
        reduced_error = reduced_error.max(eq);
        original_error = original_error.max(ep);
        if eq > ep * (1.0 + 1e-9) + 1e-12 {
            certified = false;
        }
    }
    Ok(SplitReduction {
        q,
        reduced_error,
        original_error,
        certified,
    })
}

/// Closed-form inapproximability bound for `1/x` on `[1, b]`, both the exact
/// product form and its exponential relaxation. The exact form is the
/// stronger statement; both are reported.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct KrausBound {
    pub exact: f64,
    pub relaxed: f64,
}

pub fn kraus_lower_bound(b: f64, t: usize) -> KrausBound {
    assert!(b > 1.0, "interval endpoint must exceed 1");
    let sb = b.sqrt();
    let exact = 0.5 * (1.0 - 2.0 / (sb + 1.0)).powi(t as i32 + 1) * (1.0 - 1.0 / sb).powi(2);
    let relaxed = 0.5 * (-4.0 * (t as f64 + 1.0) / sb).exp();
    KrausBound { exact, relaxed }
}

/// `1/2 e^{-2(t+1)/kappa}`: the inapproximability floor for `1/x` on the
/// split interval. Requires `kappa >= 2`.
pub fn split_lower_bound(kappa: f64, t: usize) -> Result<f64, ApproxError> {
    if !(kappa >= 2.0) {
        return Err(ApproxError::DomainError("kappa must be at least 2"));
    }
    Ok(0.5 * (-2.0 * (t as f64 + 1.0) / kappa).exp())
}

/// Best uniform approximation by an independent discrete Remez exchange, for
/// cross-checking the LP route on plain intervals.
pub fn remez_best_approx(
    domain: &DiscreteDomain,
    f_values: &[f64],
    t: usize,
) -> Result<(ChebyshevPolynomial, f64), ApproxError> {
    let m = domain.len();
    if m < t + 2 {
        return Err(ApproxError::DimensionError {
            degree: t,
            needed: t + 2,
            got: m,
        });
    }
    let (lo, hi) = domain.bounding_interval();
    let rows: Vec<Vec<f64>> = domain
        .points()
        .iter()
        .map(|&x| chebyshev_row(lo, hi, x, t))
        .collect();
    let sol = exchange_on_rows(&rows, f_values, &spread_indices(m, t + 2))?;
    Ok((
        ChebyshevPolynomial {
            lo,
            hi,
            coeffs: sol.coeffs,
        },
        sol.error,
    ))
}

/// Minimize `max_{x in domain} |1 - x h(x)|` over polynomials `h` of degree
/// `< k`, i.e. the degree-`k` residual polynomial `p(x) = 1 - x h(x)` with
/// `p(0) = 1` of minimal sup norm. This is the quantity Krylov residuals are
/// measured against.
pub struct ResidualPolynomial {
    /// `h` in the Chebyshev basis of the bounding interval.
    pub h: ChebyshevPolynomial,
    /// minimax value of `|1 - x h(x)|`.
    pub value: f64,
}

impl ResidualPolynomial {
    /// Evaluate `p(x) = 1 - x h(x)`.
    pub fn evaluate(&self, x: f64) -> f64 {
        1.0 - x * self.h.evaluate(x)
    }

    /// Monomial coefficients of `p`, for driving `polynomial_apply`.
    pub fn to_monomial(&self) -> Vec<f64> {
        let hm = self.h.to_monomial();
        let mut p = vec![0.0; hm.len() + 1];
        p[0] = 1.0;
        for (j, c) in hm.iter().enumerate() {
            p[j + 1] -= c;
        }
        p
    }
}

pub fn residual_minimax(
    domain: &DiscreteDomain,
    k: usize,
) -> Result<ResidualPolynomial, ApproxError> {
    if k == 0 {
        return Err(ApproxError::DomainError("degree must be at least 1"));
    }
    let m = domain.len();
    if m < k + 1 {
        return Err(ApproxError::DimensionError {
            degree: k,
            needed: k + 1,
            got: m,
        });
    }
    let (lo, hi) = domain.bounding_interval();
    // basis functions x T_j(x), approximating the constant 1
    let rows: Vec<Vec<f64>> = domain
        .points()
        .iter()
        .map(|&x| {
            chebyshev_row(lo, hi, x, k - 1)
                .into_iter()
                .map(|tj| x * tj)
                .collect()
        })
        .collect();
    let ones = vec![1.0; m];
    let sol = solve_minimax(&rows, &ones, Polish::None)?;
    Ok(ResidualPolynomial {
        h: ChebyshevPolynomial {
            lo,
            hi,
            coeffs: sol.coeffs,
        },
        value: sol.error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn representable_function_has_zero_error() {
        let domain = DiscreteDomain::interval(-2.0, 3.0, 400).unwrap();
        let values = domain.evaluate(|x| 1.0 - 2.0 * x + 0.5 * x * x * x);
        let result = best_uniform_approx(&domain, &values, 3).unwrap();
        assert!(result.error <= 1e-9, "error {}", result.error);
    }

    #[test]
    fn two_point_antisymmetric_best_constant_is_zero() {
        let domain = DiscreteDomain::from_points(vec![-1.0, 1.0]).unwrap();
        let result = best_uniform_approx(&domain, &[-1.0, 1.0], 0).unwrap();
        assert!((result.error - 1.0).abs() <= 1e-10);
        assert!(result.polynomial.coeffs[0].abs() <= 1e-10);
    }

    #[test]
    fn degenerate_domain_is_rejected() {
        let domain = DiscreteDomain::from_points(vec![0.0, 1.0, 2.0]).unwrap();
        let values = vec![1.0, 2.0, 3.0];
        assert!(matches!(
            best_uniform_approx(&domain, &values, 2),
            Err(ApproxError::DimensionError { .. })
        ));
    }

    /// Nested coefficient-box search: an implementation-independent oracle
    /// for the minimax error at low degree. The objective is convex in the
    /// coefficients, so shrinking a box around the incumbent converges.
    fn brute_force_minimax(domain: &DiscreteDomain, values: &[f64], t: usize) -> f64 {
        let (lo, hi) = domain.bounding_interval();
        let rows: Vec<Vec<f64>> = domain
            .points()
            .iter()
            .map(|&x| chebyshev_row(lo, hi, x, t))
            .collect();
        let k = t + 1;
        let mut center = vec![0.0; k];
        let mut half_width = 4.0f64;
        let per_dim = 7usize;
        let mut best = f64::INFINITY;
        for _round in 0..30 {
            let mut best_candidate = center.clone();
            let mut round_best = f64::INFINITY;
            let mut idx = vec![0usize; k];
            loop {
                let cand: Vec<f64> = (0..k)
                    .map(|j| {
                        center[j] + half_width * (2.0 * idx[j] as f64 / (per_dim - 1) as f64 - 1.0)
                    })
                    .collect();
                let e = max_abs_error(&rows, values, &cand);
                if e < round_best {
                    round_best = e;
                    best_candidate = cand;
                }
                // odometer
                let mut d = 0;
                loop {
                    idx[d] += 1;
                    if idx[d] < per_dim {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                    if d == k {
                        break;
                    }
                }
                if d == k {
                    break;
                }
            }
            center = best_candidate;
            best = best.min(round_best);
            half_width *= 0.45;
        }
        best
    }

    #[test]
    fn lp_matches_brute_force_coefficient_search() {
        let domain = DiscreteDomain::interval(1.0, 4.0, 2000).unwrap();
        let values = domain.evaluate(|x| 1.0 / x);
        let lp = best_uniform_approx(&domain, &values, 3).unwrap();
        let bf = brute_force_minimax(&domain, &values, 3);
        assert!(
            (lp.error - bf).abs() <= 1e-4 * bf,
            "lp {} vs brute force {}",
            lp.error,
            bf
        );
    }

    #[test]
    fn split_interval_errors_and_bounds() {
        // kappa=4, t=0: the best constant is 0 by antisymmetry and the error
        // is max |1/x| = 1.
        let r0 = min_error_inverse_split(4.0, 0, 200).unwrap();
        assert!((r0.error - 1.0).abs() <= 1e-9);
        assert!(r0.polynomial.coeffs[0].abs() <= 1e-9);

        // kappa=4, t=9 floor
        let r9 = min_error_inverse_split(4.0, 9, 400).unwrap();
        let floor = split_lower_bound(4.0, 9).unwrap();
        assert!((floor - 0.5 * (-5.0f64).exp()).abs() < 1e-15);
        assert!(r9.error >= floor, "E9 {} < floor {}", r9.error, floor);

        // lifted upper envelope: build q on [1, kappa^2] at degree 4 by LP,
        // lift to x q(x^2), and measure: the optimum is no worse.
        let ydom = DiscreteDomain::interval(1.0, 16.0, 800).unwrap();
        let yvals = ydom.evaluate(|y| 1.0 / y);
        let q = best_uniform_approx(&ydom, &yvals, 4).unwrap();
        let split = DiscreteDomain::split_interval(4.0, 400).unwrap();
        let lift_err = split
            .points()
            .iter()
            .map(|&x| (x * q.polynomial.evaluate(x * x) - 1.0 / x).abs())
            .fold(0.0f64, f64::max);
        assert!(
            r9.error <= lift_err * (1.0 + 1e-9),
            "optimum {} above lift {}",
            r9.error,
            lift_err
        );
    }

    #[test]
    fn split_optimum_is_odd() {
        let r = min_error_inverse_split(3.0, 7, 300).unwrap();
        let odd_norm: f64 = r
            .polynomial
            .coeffs
            .iter()
            .skip(1)
            .step_by(2)
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt();
        let even_max = r
            .polynomial
            .coeffs
            .iter()
            .step_by(2)
            .fold(0.0f64, |a, c| a.max(c.abs()));
        assert!(
            even_max <= 1e-7 * odd_norm,
            "even {} vs odd norm {}",
            even_max,
            odd_norm
        );
    }

    #[test]
    fn split_reduce_linear_is_exact() {
        // p(x) = x on [-3, 3] is T_1 scaled: q must be the constant 1.
        let p = ChebyshevPolynomial {
            lo: -3.0,
            hi: 3.0,
            coeffs: vec![0.0, 3.0],
        };
        let red = split_reduce(&p, 3.0, 200).unwrap();
        assert_eq!(red.q.degree(), 0);
        assert!((red.q.coeffs[0] - 1.0).abs() <= 1e-12);
        assert!(red.certified);
    }

    #[test]
    fn split_reduce_even_polynomial_gives_zero() {
        // p(x) = x^2 = (T_0 + T_2)/2 scaled to [-2, 2]: odd part vanishes.
        let p = ChebyshevPolynomial {
            lo: -2.0,
            hi: 2.0,
            coeffs: vec![2.0, 0.0, 2.0],
        };
        let red = split_reduce(&p, 2.0, 200).unwrap();
        assert!(red.q.coeffs.iter().all(|&c| c == 0.0));
        // sup |0 - 1/y| on [1, 4] is 1
        assert!((red.reduced_error - 1.0).abs() <= 1e-12);
        assert!(red.certified);
    }

    #[test]
    fn split_reduce_certifies_best_approximant() {
        let r = min_error_inverse_split(3.0, 7, 300).unwrap();
        let red = split_reduce(&r.polynomial, 3.0, 300).unwrap();
        assert!(red.certified);
        assert!(red.reduced_error <= red.original_error * (1.0 + 1e-8));
        // the original error on the matched grid is the reported optimum
        assert!((red.original_error - r.error).abs() <= 1e-9 * r.error.max(1e-9));
    }

    #[test]
    fn kraus_bound_values() {
        let k = kraus_lower_bound(4.0, 0);
        assert!((k.exact - 1.0 / 24.0).abs() <= 1e-15);
        // b -> 1+ vanishes
        let tiny = kraus_lower_bound(1.0 + 1e-9, 0);
        assert!(tiny.exact <= 1e-9);
        // LP value dominates the formula on [1, 100] at t = 10
        let domain = DiscreteDomain::interval(1.0, 100.0, 3000).unwrap();
        let values = domain.evaluate(|x| 1.0 / x);
        let lp = best_uniform_approx(&domain, &values, 10).unwrap();
        let k = kraus_lower_bound(100.0, 10);
        assert!(lp.error >= k.exact, "lp {} < kraus {}", lp.error, k.exact);
        assert!(k.exact >= k.relaxed);
    }

    #[test]
    fn split_lower_bound_domain_and_decay() {
        assert!((split_lower_bound(2.0, 0).unwrap() - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        assert!(matches!(
            split_lower_bound(1.5, 0),
            Err(ApproxError::DomainError(_))
        ));
        let mut prev = f64::INFINITY;
        for t in 0..30 {
            let v = split_lower_bound(8.0, t).unwrap();
            assert!(v < prev);
            prev = v;
        }
        // kappa=8, t=15 against the LP
        let bound = split_lower_bound(8.0, 15).unwrap();
        assert!((bound - 0.5 * (-4.0f64).exp()).abs() < 1e-15);
        let r = min_error_inverse_split(8.0, 15, 400).unwrap();
        assert!(r.error >= bound);
    }

    #[test]
    fn sandwich_holds_on_the_fine_default_grid() {
        // 5000 points per side: closed-form floor below the LP error, lifted
        // odd-part envelope above, both within 1e-3 relative grid slack.
        let kappa = 4.0;
        for t in [5usize, 12] {
            let r = min_error_inverse_split(kappa, t, 5000).unwrap();
            let lower = split_lower_bound(kappa, t).unwrap();
            assert!(
                lower <= r.error * (1.0 + 1e-3),
                "t={t}: floor {lower} above error {}",
                r.error
            );
            let q_degree = (t - 1) / 2;
            let ydom = DiscreteDomain::interval(1.0, kappa * kappa, 5000).unwrap();
            let yvals = ydom.evaluate(|y| 1.0 / y);
            let q = best_uniform_approx(&ydom, &yvals, q_degree).unwrap();
            let split = DiscreteDomain::split_interval(kappa, 5000).unwrap();
            let lifted = split
                .points()
                .iter()
                .map(|&x| (x * q.polynomial.evaluate(x * x) - 1.0 / x).abs())
                .fold(0.0f64, f64::max);
            assert!(
                r.error <= lifted * (1.0 + 1e-3),
                "t={t}: error {} above lifted envelope {lifted}",
                r.error
            );
        }
    }

    #[test]
    fn error_is_monotone_in_degree_and_kappa() {
        let mut prev = f64::INFINITY;
        for t in [0usize, 2, 5, 9] {
            let r = min_error_inverse_split(4.0, t, 300).unwrap();
            assert!(r.error <= prev * (1.0 + 1e-12));
            prev = r.error;
        }
        let mut prev = 0.0f64;
        for kappa in [2.0, 4.0, 8.0] {
            let r = min_error_inverse_split(kappa, 6, 300).unwrap();
            assert!(r.error >= prev * (1.0 - 1e-12));
            prev = r.error;
        }
    }

    #[test]
    fn lp_agrees_with_remez_exchange_on_intervals() {
        for (t, count) in [(3usize, 1500usize), (8, 2000)] {
            let domain = DiscreteDomain::interval(1.0, 4.0, count).unwrap();
            let values = domain.evaluate(|x| 1.0 / x);
            let lp = best_uniform_approx(&domain, &values, t).unwrap();
            let (_, remez_err) = remez_best_approx(&domain, &values, t).unwrap();
            assert!(
                (lp.error - remez_err).abs() <= 1e-8 * remez_err,
                "t={t}: lp {} vs remez {}",
                lp.error,
                remez_err
            );
        }
    }

    #[test]
    fn equioscillation_witness_count_on_interval_grid() {
        let domain = DiscreteDomain::interval(1.0, 4.0, 3000).unwrap();
        let values = domain.evaluate(|x| 1.0 / x);
        let r = best_uniform_approx(&domain, &values, 5).unwrap();
        assert!(
            r.witnesses.len() >= 7,
            "only {} witnesses",
            r.witnesses.len()
        );
    }

    #[test]
    fn residual_minimax_value_and_normalization() {
        let domain = DiscreteDomain::split_interval(4.0, 300).unwrap();
        let rp = residual_minimax(&domain, 4).unwrap();
        // p(0) = 1 by construction
        assert!((rp.evaluate(0.0) - 1.0).abs() < 1e-14);
        // monomial form agrees with the Chebyshev evaluation
        let mono = rp.to_monomial();
        for &x in &[-1.0f64, 1.5, 3.9] {
            let direct = rp.evaluate(x);
            let horner = mono.iter().rev().fold(0.0, |acc, &c| acc * x + c);
            assert!((direct - horner).abs() <= 1e-10);
        }
        assert!(rp.value > 0.0 && rp.value < 1.0);
    }

    #[test]
    fn monomial_conversion_matches_clenshaw() {
        let p = ChebyshevPolynomial {
            lo: 1.0,
            hi: 4.0,
            coeffs: vec![0.3, -1.2, 0.7, 0.05, -0.4],
        };
        let mono = p.to_monomial();
        for i in 0..40 {
            let x = 1.0 + 3.0 * i as f64 / 39.0;
            let direct = p.evaluate(x);
            let horner = mono.iter().rev().fold(0.0, |acc, &c| acc * x + c);
            assert!((direct - horner).abs() <= 1e-9 * direct.abs().max(1.0));
        }
    }
}
