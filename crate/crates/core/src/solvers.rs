//! Krylov solvers with exact matvec accounting.
//!
//! Every solver reports the residual trajectory and its oracle usage; the
//! reported counts always equal the oracle counter deltas, including the
//! periodic true-residual checkpoints and the final verification product.
//! Stopping is on the relative residual of the original system throughout.

use serde::Serialize;

use crate::linalg::{axpy, dot, nrm2, scale, sub};
use crate::oracle::{MatVecOracle, OracleError};

/// Iterations between true-residual checkpoints. Each checkpoint recomputes
/// `b - A x` through the counted oracle and stores it in place of the
/// recurrence value.
const CHECKPOINT_INTERVAL: usize = 10;

/// Relative drift between recurrence and recomputed residuals that raises
/// the mismatch warning.
const MISMATCH_WARN: f64 = 1e-6;

/// How many iterations without residual improvement count as stagnation.
const STAGNATION_WINDOW: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("matrix is not positive definite (p'Ap = {curvature:.3e} at iteration {iteration})")]
    IndefiniteMatrix { iteration: usize, curvature: f64 },
    #[error("iterative refinement stalled at round {round}: residual {achieved:.3e} > half of {previous:.3e}")]
    RefinementStall {
        round: usize,
        achieved: f64,
        previous: f64,
    },
    #[error("invalid solver parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Outcome of a solver run.
#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    /// Relative residuals; entry `k` is the residual after `k` iterations
    /// (entry 0 is the initial residual). The final entry is always a true
    /// recomputed residual.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub forward_matvecs: u64,
    pub adjoint_matvecs: u64,
    pub converged: bool,
    /// Final true relative residual.
    pub relative_residual: f64,
    /// Relative l2 forward error, when the caller knows the true solution.
    pub forward_error: Option<f64>,
    /// No residual decrease over the stagnation window.
    pub stagnation: bool,
    /// Recurrence residual drifted more than `1e-6` relative from a
    /// recomputed one at some checkpoint.
    pub recurrence_mismatch: bool,
    /// Krylov space closed early with an exact solve.
    pub happy_breakdown: bool,
}

impl SolveReport {
    fn trivial(n: usize) -> Self {
        SolveReport {
            solution: vec![0.0; n],
            residual_history: vec![0.0],
            iterations: 0,
            forward_matvecs: 0,
            adjoint_matvecs: 0,
            converged: true,
            relative_residual: 0.0,
            forward_error: None,
            stagnation: false,
            recurrence_mismatch: false,
            happy_breakdown: false,
        }
    }

    /// Relative l2 distance of the computed solution from `x_true`; also
    /// stores it in the report.
    pub fn record_forward_error(&mut self, x_true: &[f64]) -> f64 {
        let err = nrm2(&sub(&self.solution, x_true)) / nrm2(x_true).max(f64::MIN_POSITIVE);
        self.forward_error = Some(err);
        err
    }

    /// Flat CSV row: instance-id, solver, n, kappa, eps, fwd_matvecs,
    /// adj_matvecs, final_residual, converged.
    pub fn csv_row(
        &self,
        instance_id: &str,
        solver: &str,
        n: usize,
        kappa: f64,
        eps: f64,
    ) -> String {
        format!(
            "{instance_id},{solver},{n},{kappa},{eps},{},{},{:.16e},{}",
            self.forward_matvecs, self.adjoint_matvecs, self.relative_residual, self.converged
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization cannot fail")
    }
}

/// Shared bookkeeping for building a report while a solver runs.
struct RunTracker {
    b_norm: f64,
    history: Vec<f64>,
    start_counts: (u64, u64),
    best_true: f64,
    checkpoints_since_best: usize,
    stagnation: bool,
    mismatch: bool,
}

impl RunTracker {
    fn new(b_norm: f64, oracle: &MatVecOracle) -> Self {
        RunTracker {
            b_norm,
            history: vec![1.0],
            start_counts: oracle.counts(),
            best_true: f64::INFINITY,
            checkpoints_since_best: 0,
            stagnation: false,
            mismatch: false,
        }
    }

    /// Record one iteration's relative residual, replacing it with a true
    /// recomputed value every `CHECKPOINT_INTERVAL` iterations. Stagnation
    /// is judged on the recomputed residuals only: the recurrence value
    /// keeps shrinking numerically even after the genuine residual has hit
    /// its floor.
    fn push(
        &mut self,
        iteration: usize,
        recurrence_rel: f64,
        oracle: &mut MatVecOracle,
        x: &[f64],
        b: &[f64],
    ) -> Result<f64, OracleError> {
        let rel = if iteration.is_multiple_of(CHECKPOINT_INTERVAL) {
            let true_rel = true_relative_residual(oracle, x, b, self.b_norm)?;
            let denom = true_rel.abs().max(1e-300);
            if (true_rel - recurrence_rel).abs() / denom > MISMATCH_WARN && true_rel > 1e-14 {
                self.mismatch = true;
            }
            if true_rel < self.best_true * (1.0 - 1e-6) {
                self.best_true = true_rel;
                self.checkpoints_since_best = 0;
            } else {
                self.checkpoints_since_best += 1;
                if self.checkpoints_since_best * CHECKPOINT_INTERVAL >= STAGNATION_WINDOW {
                    self.stagnation = true;
                }
            }
            true_rel
        } else {
            recurrence_rel
        };
        self.history.push(rel);
        Ok(rel)
    }

    /// Final verification: recompute the true residual, overwrite the last
    /// history entry, and assemble the report.
    fn finish(
        mut self,
        oracle: &mut MatVecOracle,
        x: Vec<f64>,
        b: &[f64],
        tol: f64,
        happy_breakdown: bool,
    ) -> Result<SolveReport, OracleError> {
        let true_rel = true_relative_residual(oracle, &x, b, self.b_norm)?;
        if let Some(last) = self.history.last_mut() {
            let denom = true_rel.abs().max(1e-300);
            if (true_rel - *last).abs() / denom > MISMATCH_WARN && true_rel > 1e-14 {
                self.mismatch = true;
            }
            *last = true_rel;
        }
        let (f1, a1) = oracle.counts();
        let iterations = self.history.len() - 1;
        Ok(SolveReport {
            solution: x,
            residual_history: self.history,
            iterations,
            forward_matvecs: f1 - self.start_counts.0,
            adjoint_matvecs: a1 - self.start_counts.1,
            converged: true_rel <= tol * (1.0 + 1e-9),
            relative_residual: true_rel,
            forward_error: None,
            stagnation: self.stagnation,
            recurrence_mismatch: self.mismatch,
            happy_breakdown,
        })
    }
}

fn true_relative_residual(
    oracle: &mut MatVecOracle,
    x: &[f64],
    b: &[f64],
    b_norm: f64,
) -> Result<f64, OracleError> {
    let ax = oracle.forward(x)?;
    Ok(nrm2(&sub(b, &ax)) / b_norm)
}

/// Conjugate gradient for symmetric positive definite systems. One forward
/// matvec per iteration, plus checkpoint and verification products.
pub fn cg(
    oracle: &mut MatVecOracle,
    b: &[f64],
    tol: f64,
    maxit: usize,
) -> Result<SolveReport, SolverError> {
    if tol <= 0.0 {
        return Err(SolverError::InvalidParameter("tol must be positive"));
    }
    let n = oracle.dimension();
    let b_norm = nrm2(b);
    if b_norm == 0.0 {
        return Ok(SolveReport::trivial(n));
    }
    let mut tracker = RunTracker::new(b_norm, oracle);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for k in 1..=maxit {
        let ap = oracle.forward(&p)?;
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(SolverError::IndefiniteMatrix {
                iteration: k,
                curvature: pap,
            });
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rel = tracker.push(k, nrm2(&r) / b_norm, oracle, &x, b)?;
        if rel <= tol {
            break;
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    Ok(tracker.finish(oracle, x, b, tol, false)?)
}

/// Conjugate gradient on the normal equations in CGLS form: the recurrence
/// works with `A^T A` implicitly, one forward and one adjoint product per
/// iteration, stopping on the residual of the original system.
pub fn cgne(
    oracle: &mut MatVecOracle,
    b: &[f64],
    tol: f64,
    maxit: usize,
) -> Result<SolveReport, SolverError> {
    if tol <= 0.0 {
        return Err(SolverError::InvalidParameter("tol must be positive"));
    }
    let n = oracle.dimension();
    let b_norm = nrm2(b);
    if b_norm == 0.0 {
        return Ok(SolveReport::trivial(n));
    }
    let mut tracker = RunTracker::new(b_norm, oracle);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut s = oracle.adjoint(&r)?;
    let mut p = s.clone();
    let mut ss = dot(&s, &s);
    for k in 1..=maxit {
        if ss == 0.0 {
            break;
        }
        let q = oracle.forward(&p)?;
        let qq = dot(&q, &q);
        if qq == 0.0 {
            break;
        }
        let alpha = ss / qq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        let rel = tracker.push(k, nrm2(&r) / b_norm, oracle, &x, b)?;
        if rel <= tol || tracker.stagnation {
            break;
        }
        s = oracle.adjoint(&r)?;
        let ss_new = dot(&s, &s);
        let beta = ss_new / ss;
        ss = ss_new;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
    }
    Ok(tracker.finish(oracle, x, b, tol, false)?)
}

/// MINRES for symmetric, possibly indefinite systems. Lanczos-based; the
/// residual estimate is monotone nonincreasing. Lanczos breakdown terminates
/// cleanly with the convergence flag decided by the final residual.
pub fn minres(
    oracle: &mut MatVecOracle,
    b: &[f64],
    tol: f64,
    maxit: usize,
) -> Result<SolveReport, SolverError> {
    if tol <= 0.0 {
        return Err(SolverError::InvalidParameter("tol must be positive"));
    }
    let n = oracle.dimension();
    let b_norm = nrm2(b);
    if b_norm == 0.0 {
        return Ok(SolveReport::trivial(n));
    }
    let mut tracker = RunTracker::new(b_norm, oracle);
    let mut x = vec![0.0; n];

    // Two-term Lanczos with unnormalized carriers r1, r2.
    let beta1 = b_norm;
    let mut r1 = b.to_vec();
    let mut r2 = b.to_vec();
    let mut oldb = 0.0f64;
    let mut beta = beta1;
    let mut dbar = 0.0f64;
    let mut epsln = 0.0f64;
    let mut phibar = beta1;
    let mut cs = -1.0f64;
    let mut sn = 0.0f64;
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut happy = false;

    for k in 1..=maxit {
        let v: Vec<f64> = r2.iter().map(|t| t / beta).collect();
        let mut y = oracle.forward(&v)?;
        if k >= 2 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        r1 = std::mem::replace(&mut r2, y);
        oldb = beta;
        beta = nrm2(&r2);

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let w1 = std::mem::replace(&mut w2, std::mem::take(&mut w));
        w = v;
        axpy(-oldeps, &w1, &mut w);
        axpy(-delta, &w2, &mut w);
        scale(1.0 / gamma, &mut w);
        axpy(phi, &w, &mut x);

        let rel = tracker.push(k, phibar / b_norm, oracle, &x, b)?;
        if beta <= 1e-14 * beta1 {
            happy = true;
            break;
        }
        if rel <= tol {
            break;
        }
    }
    Ok(tracker.finish(oracle, x, b, tol, happy)?)
}

/// Unrestarted GMRES with modified Gram-Schmidt Arnoldi and Givens-rotation
/// least squares. One-sided access suffices.
pub fn gmres(
    oracle: &mut MatVecOracle,
    b: &[f64],
    tol: f64,
    maxit: usize,
) -> Result<SolveReport, SolverError> {
    if tol <= 0.0 {
        return Err(SolverError::InvalidParameter("tol must be positive"));
    }
    let n = oracle.dimension();
    if maxit > n {
        return Err(SolverError::InvalidParameter("maxit must not exceed n"));
    }
    let b_norm = nrm2(b);
    if b_norm == 0.0 {
        return Ok(SolveReport::trivial(n));
    }
    let start_counts = oracle.counts();
    let mut basis: Vec<Vec<f64>> = vec![{
        let mut v = b.to_vec();
        scale(1.0 / b_norm, &mut v);
        v
    }];
    // Column-major Hessenberg after Givens rotations (upper triangular part).
    let mut h_cols: Vec<Vec<f64>> = Vec::new();
    let mut g = vec![b_norm];
    let mut rotations: Vec<(f64, f64)> = Vec::new();
    let mut history = vec![1.0];
    let mut happy = false;
    let mut steps = 0usize;

    for k in 0..maxit {
        let mut wv = oracle.forward(&basis[k])?;
        let mut col = vec![0.0; k + 2];
        for (i, vi) in basis.iter().enumerate() {
            let hik = dot(vi, &wv);
            axpy(-hik, vi, &mut wv);
            col[i] = hik;
        }
        let h_next = nrm2(&wv);
        col[k + 1] = h_next;
        // previous rotations
        for (i, &(c, s)) in rotations.iter().enumerate() {
            let t = c * col[i] + s * col[i + 1];
            col[i + 1] = -s * col[i] + c * col[i + 1];
            col[i] = t;
        }
        // new rotation zeroing the subdiagonal
        let r = (col[k] * col[k] + col[k + 1] * col[k + 1]).sqrt();
        let (c, s) = if r == 0.0 {
            (1.0, 0.0)
        } else {
            (col[k] / r, col[k + 1] / r)
        };
        col[k] = r;
        col[k + 1] = 0.0;
        rotations.push((c, s));
        g.push(-s * g[k]);
        g[k] *= c;
        h_cols.push(col);
        steps = k + 1;

        let rel = g[k + 1].abs() / b_norm;
        history.push(rel);

        let happy_now = h_next <= 1e-14 * b_norm;
        if happy_now {
            happy = true;
        }
        if rel <= tol || happy_now {
            break;
        }
        let mut v_next = wv;
        scale(1.0 / h_next, &mut v_next);
        basis.push(v_next);
    }

    // Solve the triangular system R y = g and form x = V y.
    let m = steps;
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = g[i];
        for j in i + 1..m {
            s -= h_cols[j][i] * y[j];
        }
        y[i] = s / h_cols[i][i];
    }
    let mut x = vec![0.0; n];
    for (yi, vi) in y.iter().zip(&basis) {
        axpy(*yi, vi, &mut x);
    }

    let true_rel = true_relative_residual(oracle, &x, b, b_norm)?;
    let mismatch = {
        let last = *history.last().unwrap();
        (true_rel - last).abs() / true_rel.abs().max(1e-300) > MISMATCH_WARN && true_rel > 1e-14
    };
    if let Some(last) = history.last_mut() {
        *last = true_rel;
    }
    let (f1, a1) = oracle.counts();
    Ok(SolveReport {
        solution: x,
        residual_history: history,
        iterations: m,
        forward_matvecs: f1 - start_counts.0,
        adjoint_matvecs: a1 - start_counts.1,
        converged: true_rel <= tol * (1.0 + 1e-9) || happy,
        relative_residual: true_rel,
        forward_error: None,
        stagnation: false,
        recurrence_mismatch: mismatch,
        happy_breakdown: happy,
    })
}

/// Residual-correction loop turning a half-residual solver into a
/// `2^-rounds`-residual solver. Performs exactly `rounds` inner calls plus
/// `rounds` forward products for residual updates; fails fast if an inner
/// call does not halve the residual.
pub fn iterative_refinement<F>(
    mut inner: F,
    oracle: &mut MatVecOracle,
    b: &[f64],
    rounds: usize,
) -> Result<SolveReport, SolverError>
where
    F: FnMut(&mut MatVecOracle, &[f64]) -> Result<Vec<f64>, SolverError>,
{
    if rounds == 0 {
        return Err(SolverError::InvalidParameter("rounds must be at least 1"));
    }
    let n = oracle.dimension();
    let b_norm = nrm2(b);
    if b_norm == 0.0 {
        return Ok(SolveReport::trivial(n));
    }
    let start_counts = oracle.counts();
    let mut x = vec![0.0; n];
    let mut residual = b.to_vec();
    let mut history = vec![1.0];
    for round in 1..=rounds {
        let previous = nrm2(&residual);
        let correction = inner(oracle, &residual)?;
        let a_corr = oracle.forward(&correction)?;
        axpy(1.0, &correction, &mut x);
        axpy(-1.0, &a_corr, &mut residual);
        let achieved = nrm2(&residual);
        history.push(achieved / b_norm);
        if achieved > 0.5 * previous * (1.0 + 1e-9) {
            return Err(SolverError::RefinementStall {
                round,
                achieved,
                previous,
            });
        }
    }
    let rel = nrm2(&residual) / b_norm;
    let (f1, a1) = oracle.counts();
    Ok(SolveReport {
        solution: x,
        residual_history: history,
        iterations: rounds,
        forward_matvecs: f1 - start_counts.0,
        adjoint_matvecs: a1 - start_counts.1,
        converged: rel <= 2.0f64.powi(-(rounds as i32)) * (1.0 + 1e-9),
        relative_residual: rel,
        forward_error: None,
        stagnation: false,
        recurrence_mismatch: false,
        happy_breakdown: false,
    })
}

/// Evaluate `c_0 b + c_1 A b + ... + c_t A^t b` by iterated power
/// accumulation, using exactly `t` forward products.
pub fn polynomial_apply(
    oracle: &mut MatVecOracle,
    coeffs: &[f64],
    b: &[f64],
) -> Result<Vec<f64>, SolverError> {
    if coeffs.is_empty() {
        return Err(SolverError::InvalidParameter(
            "at least one coefficient required",
        ));
    }
    let mut acc: Vec<f64> = b.iter().map(|x| coeffs[0] * x).collect();
    let mut power = b.to_vec();
    for &c in &coeffs[1..] {
        power = oracle.forward(&power)?;
        axpy(c, &power, &mut acc);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::oracle::Mode;
    use crate::rng::{gaussian_vector, seeded_rng};

    fn diag_oracle(eigs: Vec<f64>) -> MatVecOracle {
        MatVecOracle::diagonal(eigs)
    }

    #[test]
    fn cg_identity_converges_in_one_iteration() {
        let mut oracle = diag_oracle(vec![1.0; 8]);
        let b: Vec<f64> = (0..8).map(|i| i as f64 - 3.0).collect();
        let report = cg(&mut oracle, &b, 1e-12, 10).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        for (xi, bi) in report.solution.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-12);
        }
        // 1 iteration product + final verification
        assert_eq!(report.forward_matvecs, 2);
        assert_eq!(oracle.counts(), (2, 0));
    }

    #[test]
    fn cg_terminates_on_few_distinct_eigenvalues() {
        // d distinct eigenvalues: relative residual below 1e-8 within d
        // iterations regardless of n.
        for (d, n) in [(3usize, 50usize), (7, 200)] {
            let eigs: Vec<f64> = (0..n).map(|i| 1.0 + 2.0 * (i % d) as f64).collect();
            let mut oracle = diag_oracle(eigs);
            let mut rng = seeded_rng(4 + d as u64);
            let b = gaussian_vector(n, &mut rng);
            let report = cg(&mut oracle, &b, 1e-14, 3 * d).unwrap();
            let at_d = report.residual_history[d.min(report.residual_history.len() - 1)];
            assert!(at_d <= 1e-8, "d={d}: residual {at_d} after {d} iterations");
        }
    }

    #[test]
    fn cg_respects_classical_iteration_bound_at_kappa_100() {
        // log-spaced spectrum on [1, 100]
        let n = 300;
        let kappa: f64 = 100.0;
        let eigs: Vec<f64> = (0..n)
            .map(|i| kappa.powf(i as f64 / (n - 1) as f64))
            .collect();
        let mut oracle = diag_oracle(eigs);
        let mut rng = seeded_rng(9);
        let b = gaussian_vector(n, &mut rng);
        let tol = 1e-6;
        let report = cg(&mut oracle, &b, tol, n).unwrap();
        assert!(report.converged);
        let bound = (0.5 * kappa.sqrt() * (2.0 / tol).ln()).ceil() as usize + 2;
        assert!(
            report.iterations <= bound,
            "iterations {} > bound {}",
            report.iterations,
            bound
        );
    }

    #[test]
    fn cg_reports_indefinite_matrix() {
        let mut oracle = diag_oracle(vec![1.0, -1.0, 2.0, -2.0]);
        let b = vec![0.0, 1.0, 0.0, 1.0];
        match cg(&mut oracle, &b, 1e-8, 10) {
            Err(SolverError::IndefiniteMatrix { iteration, .. }) => assert!(iteration >= 1),
            other => panic!("expected indefinite error, got {other:?}"),
        }
    }

    #[test]
    fn cgne_orthogonal_system_in_one_iteration() {
        let q = crate::oracle::haar_orthogonal(12, 5).unwrap();
        let mut oracle = MatVecOracle::dense(q.clone(), Mode::TwoSided);
        let b = crate::linalg::unit_vector(12, 0);
        let report = cgne(&mut oracle, &b, 1e-10, 20).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        let x_true = q.matvec_transpose(&b);
        for (xi, ti) in report.solution.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-10);
        }
    }

    #[test]
    fn cgne_flags_stagnation_at_the_numerical_floor() {
        // Unreachable tolerance: once the residual plateaus at machine
        // level, the no-improvement window trips the stagnation warning
        // instead of spinning until maxit.
        let n = 20;
        let eigs: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 / 5.0).collect();
        let mut oracle = diag_oracle(eigs);
        let mut rng = seeded_rng(44);
        let b = gaussian_vector(n, &mut rng);
        let report = cgne(&mut oracle, &b, 1e-300, 5000).unwrap();
        assert!(report.stagnation);
        assert!(report.iterations < 5000);
        assert!(report.relative_residual <= 1e-12);
    }

    #[test]
    fn cgne_identity_one_iteration() {
        let mut oracle = diag_oracle(vec![1.0; 6]);
        let b = vec![2.0, -1.0, 0.5, 3.0, 0.0, 1.0];
        let report = cgne(&mut oracle, &b, 1e-12, 10).unwrap();
        assert_eq!(report.iterations, 1);
        for (xi, bi) in report.solution.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn minres_negated_identity_one_iteration() {
        let mut oracle = diag_oracle(vec![-1.0; 7]);
        let b: Vec<f64> = (0..7).map(|i| (i as f64).sin() + 2.0).collect();
        let report = minres(&mut oracle, &b, 1e-12, 10).unwrap();
        assert!(report.converged);
        assert!(report.happy_breakdown, "Krylov space closes after one step");
        assert_eq!(report.iterations, 1);
        for (xi, bi) in report.solution.iter().zip(&b) {
            assert!((xi + bi).abs() < 1e-12);
        }
    }

    #[test]
    fn minres_identity_one_iteration() {
        let mut oracle = diag_oracle(vec![1.0; 5]);
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let report = minres(&mut oracle, &b, 1e-12, 10).unwrap();
        assert_eq!(report.iterations, 1);
        assert!(report.converged);
    }

    #[test]
    fn minres_history_is_monotone_on_indefinite_system() {
        // +-[1, 4] spectrum: convergence is by rate, not finite termination
        // (floating-point Lanczos does not terminate at n).
        let n = 40;
        let eigs: Vec<f64> = (0..n)
            .map(|i| {
                let m = 1.0 + 3.0 * (i / 2) as f64 / ((n / 2 - 1) as f64);
                if i % 2 == 0 {
                    m
                } else {
                    -m
                }
            })
            .collect();
        let mut oracle = diag_oracle(eigs);
        let mut rng = seeded_rng(17);
        let b = gaussian_vector(n, &mut rng);
        let report = minres(&mut oracle, &b, 1e-10, 250).unwrap();
        assert!(report.converged, "residual {}", report.relative_residual);
        for w in report.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10) + 1e-10, "history not monotone");
        }
    }

    #[test]
    fn gmres_identity_immediately() {
        let mut oracle = MatVecOracle::dense(Mat::identity(6), Mode::OneSided);
        let b = vec![1.0, -2.0, 0.0, 4.0, 5.0, -1.0];
        let report = gmres(&mut oracle, &b, 1e-12, 6).unwrap();
        assert!(report.converged);
        assert!(report.happy_breakdown);
        assert_eq!(report.iterations, 1);
        assert!(report.relative_residual <= 1e-12);
    }

    #[test]
    fn gmres_solves_a_nonsymmetric_system() {
        let n = 25;
        let mut rng = seeded_rng(3);
        let a = Mat::from_fn(n, n, |i, j| {
            let base: f64 = if i == j { 4.0 } else { 0.0 };
            base + 0.5 * gaussian_like(&mut rng)
        });
        let b = gaussian_vector(n, &mut rng);
        let mut oracle = MatVecOracle::dense(a.clone(), Mode::OneSided);
        let report = gmres(&mut oracle, &b, 1e-10, n).unwrap();
        assert!(report.converged, "residual {}", report.relative_residual);
        let r = sub(&b, &a.matvec(&report.solution));
        assert!(nrm2(&r) / nrm2(&b) <= 1e-9);
        for w in report.residual_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10) + 1e-12);
        }
    }

    fn gaussian_like(rng: &mut impl rand::Rng) -> f64 {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    }

    /// With `A = I`, returning `rhs - (||rhs||/2) e_0` leaves a residual of
    /// exactly half the previous norm: an exact-half contract inner solver.
    fn exact_half_inner(_o: &mut MatVecOracle, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
        let mut v = rhs.to_vec();
        v[0] -= 0.5 * nrm2(rhs);
        Ok(v)
    }

    #[test]
    fn refinement_round_one_halves_the_residual() {
        let n = 8;
        let mut oracle = diag_oracle(vec![1.0; n]);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let report = iterative_refinement(exact_half_inner, &mut oracle, &b, 1).unwrap();
        assert!(report.relative_residual <= 0.5 * (1.0 + 1e-12));
        assert_eq!(report.forward_matvecs, 1);
    }

    #[test]
    fn refinement_halves_for_twenty_rounds() {
        let n = 8;
        let mut oracle = diag_oracle(vec![1.0; n]);
        let b: Vec<f64> = (0..n).map(|i| (i as f64) - 3.5).collect();
        let report = iterative_refinement(exact_half_inner, &mut oracle, &b, 20).unwrap();
        assert!(report.converged);
        assert!(report.relative_residual <= 2.0f64.powi(-20) * (1.0 + 1e-9));
        // exactly r forward products, inner used none
        assert_eq!(report.forward_matvecs, 20);
        assert_eq!(report.adjoint_matvecs, 0);
    }

    #[test]
    fn refinement_detects_contract_violation() {
        let n = 4;
        let mut oracle = diag_oracle(vec![1.0; n]);
        let b = vec![1.0, 1.0, 1.0, 1.0];
        // inner that does nothing: residual never halves
        let inner = |_o: &mut MatVecOracle, _rhs: &[f64]| -> Result<Vec<f64>, SolverError> {
            Ok(vec![0.0; 4])
        };
        match iterative_refinement(inner, &mut oracle, &b, 3) {
            Err(SolverError::RefinementStall { round, .. }) => assert_eq!(round, 1),
            other => panic!("expected stall, got {other:?}"),
        }
    }

    #[test]
    fn polynomial_apply_counts_and_values() {
        let mut oracle = diag_oracle(vec![2.0, 3.0, 5.0]);
        let b = vec![1.0, 1.0, 1.0];
        // degree 0: identity, zero matvecs
        let out = polynomial_apply(&mut oracle, &[1.0], &b).unwrap();
        assert_eq!(out, b);
        assert_eq!(oracle.counts(), (0, 0));
        // coeffs (0,1): A b, one matvec
        let out = polynomial_apply(&mut oracle, &[0.0, 1.0], &b).unwrap();
        assert_eq!(out, vec![2.0, 3.0, 5.0]);
        assert_eq!(oracle.counts(), (1, 0));
        // general polynomial against direct evaluation
        let coeffs = [0.5, -1.0, 2.0, 0.25];
        let out = polynomial_apply(&mut oracle, &coeffs, &b).unwrap();
        for (o, lam) in out.iter().zip([2.0f64, 3.0, 5.0]) {
            let want = 0.5 - lam + 2.0 * lam * lam + 0.25 * lam * lam * lam;
            assert!((o - want).abs() < 1e-12);
        }
        assert_eq!(oracle.counts(), (4, 0));
    }

    #[test]
    fn solver_counts_match_oracle_deltas() {
        let n = 30;
        let eigs: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 / 5.0).collect();
        let mut oracle = diag_oracle(eigs);
        let mut rng = seeded_rng(8);
        let b = gaussian_vector(n, &mut rng);
        let before = oracle.counts();
        let report = cg(&mut oracle, &b, 1e-10, 100).unwrap();
        let after = oracle.counts();
        assert_eq!(report.forward_matvecs, after.0 - before.0);
        assert_eq!(report.adjoint_matvecs, after.1 - before.1);

        let before = oracle.counts();
        let report = cgne(&mut oracle, &b, 1e-10, 100).unwrap();
        let after = oracle.counts();
        assert_eq!(report.forward_matvecs, after.0 - before.0);
        assert_eq!(report.adjoint_matvecs, after.1 - before.1);
        assert!(report.adjoint_matvecs > 0);
    }

    #[test]
    fn report_csv_row_shape() {
        let mut oracle = diag_oracle(vec![1.0; 3]);
        let b = vec![1.0, 0.0, 0.0];
        let report = cg(&mut oracle, &b, 1e-10, 5).unwrap();
        let row = report.csv_row("inst-1", "cg", 3, 1.0, 1e-10);
        assert_eq!(row.split(',').count(), 9);
        assert!(row.starts_with("inst-1,cg,3,1,"));
    }
}
