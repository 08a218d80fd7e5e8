//! Dense primal simplex for small standard-form programs.
//!
//! Solves `maximize c'x subject to A x = b, x >= 0` with a full tableau.
//! Pivoting uses Dantzig's rule and switches permanently to Bland's rule
//! after a streak of degenerate pivots, so the method cannot cycle. The
//! tableau is periodically rebuilt from the current basis by a fresh LU
//! factorization, and optimality is never declared on a drifted objective
//! row: the certificate is re-verified on a rebuilt tableau.
//!
//! Callers with structural knowledge can supply a feasible starting basis
//! (`solve_with_warm_basis`), skipping phase 1 entirely. The equioscillation
//! duals in this crate start from an alternating spread reference, which
//! avoids the degenerate all-zero-rhs phase-1 vertex those programs
//! otherwise stall on.

use crate::linalg::{Lu, Mat};

/// Reduced-cost optimality tolerance.
const RCOST_TOL: f64 = 1e-9;
/// Smallest acceptable pivot element.
const PIVOT_TOL: f64 = 1e-11;
/// Degenerate-pivot streak after which Bland's rule takes over.
const BLAND_TRIGGER: usize = 64;
/// Pivots between tableau refactorizations.
const REFACTOR_EVERY: usize = 150;

#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error("linear program is infeasible (phase-1 residual {residual:.3e})")]
    Infeasible { residual: f64 },
    #[error("linear program is unbounded (entering column {column})")]
    Unbounded { column: usize },
    #[error("cycling guard exceeded after {iterations} iterations")]
    CyclingGuard { iterations: usize },
    #[error("malformed program: {0}")]
    BadShape(&'static str),
    #[error("warm-start basis is not feasible")]
    BadWarmStart,
}

/// `maximize objective . x` subject to `constraints x = rhs`, `x >= 0`.
#[derive(Clone, Debug)]
pub struct StandardLp {
    pub objective: Vec<f64>,
    pub constraints: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

impl StandardLp {
    fn check(&self) -> Result<(), LpError> {
        if self.rhs.len() != self.constraints.len() {
            return Err(LpError::BadShape("rhs length must match constraint count"));
        }
        for row in &self.constraints {
            if row.len() != self.objective.len() {
                return Err(LpError::BadShape(
                    "constraint row length must match objective",
                ));
            }
        }
        Ok(())
    }

    fn column(&self, j: usize) -> Vec<f64> {
        self.constraints.iter().map(|row| row[j]).collect()
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
    /// Optimal basis (structural column indices; may include artificial
    /// indices `>= n` on redundant rows of two-phase solves).
    pub basis: Vec<usize>,
}

struct Tableau {
    /// rows[i]: the basis-inverse image of every column, then the rhs.
    rows: Vec<Vec<f64>>,
    /// obj[j] = z_j - c_j; optimal when all entries >= -tol. Last entry is
    /// the negated current objective value offset.
    obj: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
    iterations: usize,
    degenerate_streak: usize,
    bland: bool,
}

impl Tableau {
    /// Build rows = B^{-1} A and the reduced-cost row from an explicit
    /// basis. Fails if the basis is singular or infeasible.
    fn from_basis(
        columns: &dyn Fn(usize) -> Vec<f64>,
        ncols: usize,
        m: usize,
        rhs: &[f64],
        costs: &dyn Fn(usize) -> f64,
        basis: &[usize],
        require_feasible: bool,
    ) -> Result<Tableau, LpError> {
        assert_eq!(basis.len(), m);
        let bmat = Mat::from_fn(m, m, |i, j| columns(basis[j])[i]);
        let lu = Lu::factor(&bmat).map_err(|_| LpError::BadWarmStart)?;
        let xb = lu.solve(rhs);
        let scale = rhs.iter().fold(1.0f64, |a, b| a.max(b.abs()));
        if require_feasible && xb.iter().any(|&v| v < -1e-9 * scale) {
            return Err(LpError::BadWarmStart);
        }
        let mut rows = vec![vec![0.0; ncols + 1]; m];
        for j in 0..ncols {
            let col = lu.solve(&columns(j));
            for i in 0..m {
                rows[i][j] = col[i];
            }
        }
        for i in 0..m {
            rows[i][ncols] = xb[i].max(0.0);
        }
        let mut obj = vec![0.0; ncols + 1];
        for j in 0..=ncols {
            let mut z = 0.0;
            for i in 0..m {
                z += costs(basis[i]) * rows[i][j];
            }
            obj[j] = z;
        }
        for j in 0..ncols {
            obj[j] -= costs(j);
        }
        Ok(Tableau {
            rows,
            obj,
            basis: basis.to_vec(),
            ncols,
            iterations: 0,
            degenerate_streak: 0,
            bland: false,
        })
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.rows[row][col];
        let inv = 1.0 / piv;
        for v in self.rows[row].iter_mut() {
            *v *= inv;
        }
        self.rows[row][col] = 1.0;
        let pivot_row = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let factor = r[col];
            if factor != 0.0 {
                for (rv, pv) in r.iter_mut().zip(&pivot_row) {
                    *rv -= factor * pv;
                }
                r[col] = 0.0;
            }
        }
        let factor = self.obj[col];
        if factor != 0.0 {
            for (ov, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *ov -= factor * pv;
            }
            self.obj[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// One simplex step over the allowed columns. Returns false at a
    /// (possibly drifted) optimum.
    fn step(&mut self, allowed: &dyn Fn(usize) -> bool) -> Result<bool, LpError> {
        let entering = if self.bland {
            (0..self.ncols).find(|&j| allowed(j) && self.obj[j] < -RCOST_TOL)
        } else {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.ncols {
                if allowed(j)
                    && self.obj[j] < -RCOST_TOL
                    && best.is_none_or(|(_, v)| self.obj[j] < v)
                {
                    best = Some((j, self.obj[j]));
                }
            }
            best.map(|(j, _)| j)
        };
        let Some(col) = entering else {
            return Ok(false);
        };

        let mut leave: Option<(usize, f64)> = None;
        for i in 0..self.rows.len() {
            let a = self.rows[i][col];
            if a > PIVOT_TOL {
                let ratio = self.rows[i][self.ncols] / a;
                let better = match leave {
                    None => true,
                    Some((li, lr)) => {
                        ratio < lr - 1e-12 || (ratio < lr + 1e-12 && self.basis[i] < self.basis[li])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((row, ratio)) = leave else {
            return Err(LpError::Unbounded { column: col });
        };
        if ratio.abs() <= 1e-12 {
            self.degenerate_streak += 1;
            if self.degenerate_streak >= BLAND_TRIGGER {
                self.bland = true;
            }
        } else {
            self.degenerate_streak = 0;
        }
        self.pivot(row, col);
        self.iterations += 1;
        Ok(true)
    }
}

/// Simplex driver with refactorization: run to (claimed) optimality, rebuild
/// the tableau from the current basis, and only accept an optimum that
/// survives the rebuilt reduced costs.
fn drive(
    mut t: Tableau,
    columns: &dyn Fn(usize) -> Vec<f64>,
    rhs: &[f64],
    costs: &dyn Fn(usize) -> f64,
    allowed: &dyn Fn(usize) -> bool,
    max_iterations: usize,
) -> Result<Tableau, LpError> {
    let m = t.rows.len();
    let ncols = t.ncols;
    let mut since_refactor = 0usize;
    let mut rebuilds_after_claim = 0usize;
    loop {
        let progressed = t.step(allowed)?;
        if progressed {
            since_refactor += 1;
            if t.iterations > max_iterations {
                return Err(LpError::CyclingGuard {
                    iterations: t.iterations,
                });
            }
            if since_refactor >= REFACTOR_EVERY {
                let iterations = t.iterations;
                let was_bland = t.bland;
                t = Tableau::from_basis(columns, ncols, m, rhs, costs, &t.basis, false)?;
                t.iterations = iterations;
                t.bland = was_bland;
                since_refactor = 0;
            }
            continue;
        }
        // Claimed optimum: verify on a freshly built tableau.
        let iterations = t.iterations;
        let was_bland = t.bland;
        let rebuilt = Tableau::from_basis(columns, ncols, m, rhs, costs, &t.basis, false)?;
        let still_improvable = (0..ncols).any(|j| allowed(j) && rebuilt.obj[j] < -RCOST_TOL);
        t = rebuilt;
        t.iterations = iterations;
        t.bland = was_bland;
        if !still_improvable {
            return Ok(t);
        }
        rebuilds_after_claim += 1;
        if rebuilds_after_claim > 50 {
            return Err(LpError::CyclingGuard {
                iterations: t.iterations,
            });
        }
        since_refactor = 0;
    }
}

fn extract_solution(t: &Tableau, lp: &StandardLp) -> LpSolution {
    let n = lp.objective.len();
    let mut x = vec![0.0; n];
    for (i, &bj) in t.basis.iter().enumerate() {
        if bj < n {
            x[bj] = t.rows[i][t.ncols].max(0.0);
        }
    }
    let objective_value = lp.objective.iter().zip(&x).map(|(c, xi)| c * xi).sum();
    LpSolution {
        x,
        objective_value,
        iterations: t.iterations,
        basis: t.basis.clone(),
    }
}

/// Solve from the first feasible basis among the supplied candidates
/// (column indices into the structural variables). Falls back on the
/// two-phase method when none is usable.
pub fn solve_with_warm_bases(
    lp: &StandardLp,
    candidates: &[Vec<usize>],
) -> Result<LpSolution, LpError> {
    lp.check()?;
    let m = lp.constraints.len();
    let n = lp.objective.len();
    let columns = |j: usize| lp.column(j);
    let costs = |j: usize| lp.objective[j];
    for basis in candidates {
        if basis.len() != m {
            continue;
        }
        match Tableau::from_basis(&columns, n, m, &lp.rhs, &costs, basis, true) {
            Ok(t) => {
                let cap = 400 * (m + n + 10);
                let t = drive(t, &columns, &lp.rhs, &costs, &|_| true, cap)?;
                return Ok(extract_solution(&t, lp));
            }
            Err(LpError::BadWarmStart) => continue,
            Err(e) => return Err(e),
        }
    }
    solve(lp)
}

/// Solve a standard-form program by the two-phase method.
pub fn solve(lp: &StandardLp) -> Result<LpSolution, LpError> {
    lp.check()?;
    let m = lp.constraints.len();
    let n = lp.objective.len();
    let ncols = n + m; // structural + artificial

    // Orient rows so rhs >= 0, then phase 1 minimizes the artificial mass.
    let flips: Vec<f64> = lp
        .rhs
        .iter()
        .map(|&b| if b < 0.0 { -1.0 } else { 1.0 })
        .collect();
    let rhs1: Vec<f64> = lp.rhs.iter().zip(&flips).map(|(b, f)| b * f).collect();
    let columns1 = |j: usize| -> Vec<f64> {
        if j < n {
            lp.constraints
                .iter()
                .zip(&flips)
                .map(|(row, f)| row[j] * f)
                .collect()
        } else {
            let mut col = vec![0.0; m];
            col[j - n] = 1.0;
            col
        }
    };
    let costs1 = |j: usize| if j < n { 0.0 } else { -1.0 };
    let basis1: Vec<usize> = (n..ncols).collect();
    let t = Tableau::from_basis(&columns1, ncols, m, &rhs1, &costs1, &basis1, true)
        .expect("artificial basis is always feasible");
    let cap = 400 * (m + n + 10);
    let mut t = drive(t, &columns1, &rhs1, &costs1, &|_| true, cap)?;
    let infeasibility: f64 = t
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &bj)| bj >= n)
        .map(|(i, _)| t.rows[i][t.ncols])
        .sum();
    let scale = rhs1.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    if infeasibility > 1e-7 * scale {
        return Err(LpError::Infeasible {
            residual: infeasibility,
        });
    }

    // Drive leftover artificials out of the basis; rows with no structural
    // pivot are redundant and get pinned to an artificial at level zero.
    for i in 0..m {
        if t.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t.rows[i][j].abs() > 1e-9) {
                t.pivot(i, j);
            }
        }
    }

    // Phase 2 on the structural columns from the phase-1 basis; artificial
    // columns (if any survived on redundant rows) are priced out of bounds.
    let columns2 = columns1;
    let costs2 = |j: usize| if j < n { lp.objective[j] } else { 0.0 };
    let basis2 = t.basis.clone();
    let t2 = Tableau::from_basis(&columns2, ncols, m, &rhs1, &costs2, &basis2, false)
        .map_err(|_| LpError::BadShape("degenerate basis after phase 1"))?;
    let allowed = |j: usize| j < n;
    let t2 = drive(t2, &columns2, &rhs1, &costs2, &allowed, cap)?;
    Ok(extract_solution(&t2, lp))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_small_equality_program() {
        // max x + y s.t. x + 2y = 4, 3x + y = 6 -> x = 8/5, y = 6/5
        let lp = StandardLp {
            objective: vec![1.0, 1.0],
            constraints: vec![vec![1.0, 2.0], vec![3.0, 1.0]],
            rhs: vec![4.0, 6.0],
        };
        let sol = solve(&lp).unwrap();
        assert!((sol.x[0] - 1.6).abs() < 1e-10);
        assert!((sol.x[1] - 1.2).abs() < 1e-10);
        assert!((sol.objective_value - 2.8).abs() < 1e-10);
    }

    #[test]
    fn detects_infeasibility() {
        // x + y = -1 with x, y >= 0
        let lp = StandardLp {
            objective: vec![1.0, 0.0],
            constraints: vec![vec![1.0, 1.0]],
            rhs: vec![-1.0],
        };
        assert!(matches!(solve(&lp), Err(LpError::Infeasible { .. })));
    }

    #[test]
    fn detects_unboundedness() {
        // max x s.t. x - y = 1: x = 1 + y grows without bound
        let lp = StandardLp {
            objective: vec![1.0, 0.0],
            constraints: vec![vec![1.0, -1.0]],
            rhs: vec![1.0],
        };
        assert!(matches!(solve(&lp), Err(LpError::Unbounded { .. })));
    }

    #[test]
    fn beale_degenerate_program_terminates() {
        // Beale's cycling example (in maximization form, slacks appended):
        // max 3/4 x1 - 150 x2 + 1/50 x3 - 6 x4, optimum 1/20.
        let lp = StandardLp {
            objective: vec![0.75, -150.0, 0.02, -6.0, 0.0, 0.0, 0.0],
            constraints: vec![
                vec![0.25, -60.0, -1.0 / 25.0, 9.0, 1.0, 0.0, 0.0],
                vec![0.5, -90.0, -1.0 / 50.0, 3.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            ],
            rhs: vec![0.0, 0.0, 1.0],
        };
        let sol = solve(&lp).unwrap();
        assert!((sol.objective_value - 0.05).abs() < 1e-10);
    }

    #[test]
    fn handles_redundant_constraints() {
        // duplicated row: phase 1 must neutralize it
        let lp = StandardLp {
            objective: vec![1.0, 2.0],
            constraints: vec![vec![1.0, 1.0], vec![2.0, 2.0]],
            rhs: vec![3.0, 6.0],
        };
        let sol = solve(&lp).unwrap();
        assert!((sol.x[1] - 3.0).abs() < 1e-10);
        assert!((sol.objective_value - 6.0).abs() < 1e-10);
    }

    #[test]
    fn warm_basis_matches_cold_solve() {
        let lp = StandardLp {
            objective: vec![1.0, 1.0],
            constraints: vec![vec![1.0, 2.0], vec![3.0, 1.0]],
            rhs: vec![4.0, 6.0],
        };
        let warm = solve_with_warm_bases(&lp, &[vec![0, 1]]).unwrap();
        assert!((warm.objective_value - 2.8).abs() < 1e-10);
        // infeasible warm basis falls back to the two-phase route
        let lp2 = StandardLp {
            objective: vec![0.0, -1.0],
            constraints: vec![vec![1.0, -1.0]],
            rhs: vec![1.0],
        };
        let sol = solve_with_warm_bases(&lp2, &[vec![1]]).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-10);
    }
}
