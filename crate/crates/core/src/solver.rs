//! Least squares on the probability simplex: minimize `||A q - b||_2`
//! subject to `sum(q) = 1` and `q >= 0`.
//!
//! The sum constraint is enforced inside the solver, either through a
//! bordered KKT system (the appended sum row) or by eliminating one
//! variable (substitution). Both routes give the same minimizer; the
//! nonnegativity bounds are handled with a primal active-set loop.

use crate::error::{Error, Result};
use crate::moments::RankReport;
use nalgebra::{DMatrix, DVector};

/// How the sum-to-one constraint enters the solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstraintMode {
    /// Append the sum row as a hard equality of a bordered KKT system.
    #[default]
    AppendSumRow,
    /// Eliminate one variable through the constraint and solve the reduced
    /// normal equations.
    Substitute,
}

/// Condition numbers above this are treated as numerically singular.
pub const DEFAULT_CONDITION_THRESHOLD: f64 = 1e8;

/// Solution of the constrained least-squares problem.
#[derive(Debug, Clone)]
pub struct SimplexLsSolution {
    /// Minimizer on the simplex.
    pub solution: Vec<f64>,
    /// Zero-based indices of coordinates pinned at the lower bound.
    pub active_bounds: Vec<usize>,
    /// Condition number of the design stacked with the sum row.
    pub condition_number: f64,
    /// `||A q - b||_2` at the solution.
    pub residual_norm: f64,
    /// Singular-value diagnostics of the stacked design.
    pub rank_report: RankReport,
}

fn stacked_design(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, l) = matrix.shape();
    let mut stacked = DMatrix::zeros(r + 1, l);
    stacked.view_mut((0, 0), (r, l)).copy_from(matrix);
    for j in 0..l {
        stacked[(r, j)] = 1.0;
    }
    stacked
}

pub(crate) fn rank_report_of(matrix: &DMatrix<f64>, relative_threshold: f64) -> RankReport {
    let singular_values: Vec<f64> = matrix.clone().svd(false, false).singular_values.iter().copied().collect();
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let numerical_rank = if sigma_max == 0.0 {
        0
    } else {
        singular_values
            .iter()
            .filter(|&&s| s > relative_threshold * sigma_max)
            .count()
    };
    let ones = DVector::from_element(matrix.ncols(), 1.0);
    let witness = matrix * ones;
    let kernel_witness_residual = witness.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    RankReport {
        numerical_rank,
        singular_values,
        kernel_witness_residual,
    }
}

/// Solves `min ||A q - b||` over the probability simplex.
///
/// Errors with the rank diagnostics when the design stacked with the sum
/// row does not have full column rank at `1 / condition_threshold`.
pub fn solve_simplex_ls(
    matrix: &DMatrix<f64>,
    rhs: &DVector<f64>,
    mode: ConstraintMode,
    condition_threshold: f64,
) -> Result<SimplexLsSolution> {
    let (rows, l) = matrix.shape();
    if l < 2 {
        return Err(Error::InvalidInput("need at least two classes to solve for".into()));
    }
    if rhs.len() != rows {
        return Err(Error::InvalidInput(format!(
            "right-hand side length {} does not match {rows} equations",
            rhs.len()
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) || rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "linear system".into(),
        });
    }

    let stacked = stacked_design(matrix);
    let report = rank_report_of(&stacked, 1.0 / condition_threshold);
    if report.numerical_rank < l {
        return Err(Error::RankDeficient {
            needed: l,
            report,
        });
    }
    let condition_number = report.singular_values[0] / report.singular_values[l - 1];

    let gram = matrix.transpose() * matrix;
    let proj = matrix.transpose() * rhs;

    let mut q = DVector::from_element(l, 1.0 / l as f64);
    let mut working = vec![false; l];
    let tol_feas = 1e-12;
    let tol_mu = 1e-10 * (1.0 + proj.amax());
    let max_iterations = 50 * (l + 2);

    for _ in 0..max_iterations {
        let free: Vec<usize> = (0..l).filter(|&i| !working[i]).collect();
        let (candidate_free, lambda) =
            equality_subproblem(matrix, &gram, &proj, rhs, &free, mode)?;

        if candidate_free.iter().all(|&v| v >= -tol_feas) {
            for (k, &i) in free.iter().enumerate() {
                q[i] = candidate_free[k].max(0.0);
            }
            for i in 0..l {
                if working[i] {
                    q[i] = 0.0;
                }
            }
            // Check multipliers of the pinned coordinates.
            let gradient = &gram * &q - &proj;
            let mut release: Option<(usize, f64)> = None;
            for i in 0..l {
                if working[i] {
                    let mu = gradient[i] + lambda;
                    if mu < -tol_mu && release.map_or(true, |(_, best)| mu < best) {
                        release = Some((i, mu));
                    }
                }
            }
            match release {
                Some((i, _)) => working[i] = false,
                None => {
                    return Ok(finish(matrix, rhs, q, &working, condition_number, report));
                }
            }
        } else {
            // Step toward the candidate until the first coordinate hits zero.
            let mut alpha = 1.0;
            let mut blocker = None;
            for (k, &i) in free.iter().enumerate() {
                if candidate_free[k] < 0.0 {
                    let denom = q[i] - candidate_free[k];
                    if denom > 0.0 {
                        let a = q[i] / denom;
                        if a < alpha {
                            alpha = a;
                            blocker = Some(i);
                        }
                    }
                }
            }
            let blocker = blocker.ok_or_else(|| {
                Error::InvalidInput("active-set line search failed to find a blocking bound".into())
            })?;
            for (k, &i) in free.iter().enumerate() {
                q[i] += alpha * (candidate_free[k] - q[i]);
                if q[i] < 0.0 {
                    q[i] = 0.0;
                }
            }
            q[blocker] = 0.0;
            working[blocker] = true;
        }
    }
    Err(Error::InvalidInput(
        "active-set solver did not terminate; the system is numerically degenerate".into(),
    ))
}

/// Equality-constrained subproblem on the free coordinates: minimize
/// `||A_F q_F - b||` subject to `sum(q_F) = 1`. Returns the free solution
/// and the equality multiplier.
fn equality_subproblem(
    matrix: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    proj: &DVector<f64>,
    rhs: &DVector<f64>,
    free: &[usize],
    mode: ConstraintMode,
) -> Result<(Vec<f64>, f64)> {
    let nf = free.len();
    debug_assert!(nf >= 1);
    match mode {
        ConstraintMode::AppendSumRow => {
            let mut kkt = DMatrix::zeros(nf + 1, nf + 1);
            let mut rhs_kkt = DVector::zeros(nf + 1);
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    kkt[(a, b)] = gram[(i, j)];
                }
                kkt[(a, nf)] = 1.0;
                kkt[(nf, a)] = 1.0;
                rhs_kkt[a] = proj[i];
            }
            rhs_kkt[nf] = 1.0;
            let solved = kkt.lu().solve(&rhs_kkt).ok_or_else(|| {
                Error::InvalidInput("singular KKT system in the constrained solver".into())
            })?;
            let q_free: Vec<f64> = (0..nf).map(|a| solved[a]).collect();
            Ok((q_free, solved[nf]))
        }
        ConstraintMode::Substitute => {
            let pivot = *free.last().expect("free set is non-empty");
            let mut q_free = vec![0.0; nf];
            if nf == 1 {
                q_free[0] = 1.0;
            } else {
                let rows = matrix.nrows();
                let mut design = DMatrix::zeros(rows, nf - 1);
                let mut target = DVector::zeros(rows);
                for r in 0..rows {
                    target[r] = rhs[r] - matrix[(r, pivot)];
                    for (a, &j) in free[..nf - 1].iter().enumerate() {
                        design[(r, a)] = matrix[(r, j)] - matrix[(r, pivot)];
                    }
                }
                let normal = design.transpose() * &design;
                let reduced_rhs = design.transpose() * target;
                let solved = normal
                    .clone()
                    .cholesky()
                    .map(|c| c.solve(&reduced_rhs))
                    .or_else(|| normal.lu().solve(&reduced_rhs))
                    .ok_or_else(|| {
                        Error::InvalidInput(
                            "singular reduced normal equations in the constrained solver".into(),
                        )
                    })?;
                let mut sum = 0.0;
                for a in 0..nf - 1 {
                    q_free[a] = solved[a];
                    sum += solved[a];
                }
                q_free[nf - 1] = 1.0 - sum;
            }
            // Full-dimension gradient at the candidate gives the multiplier.
            let mut full = DVector::zeros(matrix.ncols());
            for (a, &i) in free.iter().enumerate() {
                full[i] = q_free[a];
            }
            let gradient = gram * full - proj;
            Ok((q_free, -gradient[pivot]))
        }
    }
}

fn finish(
    matrix: &DMatrix<f64>,
    rhs: &DVector<f64>,
    mut q: DVector<f64>,
    working: &[bool],
    condition_number: f64,
    rank_report: RankReport,
) -> SimplexLsSolution {
    // Close the sum exactly by assigning the remainder to the largest
    // coordinate.
    let largest = q.imax();
    let mut rest = 0.0;
    for i in 0..q.len() {
        if i != largest {
            rest += q[i];
        }
    }
    q[largest] = (1.0 - rest).max(0.0);

    let residual = matrix * &q - rhs;
    let active_bounds: Vec<usize> = (0..q.len()).filter(|&i| working[i]).collect();
    SimplexLsSolution {
        solution: q.iter().copied().collect(),
        active_bounds,
        condition_number,
        residual_norm: residual.norm(),
        rank_report,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn solve(a: &[f64], rows: usize, cols: usize, b: &[f64], mode: ConstraintMode) -> SimplexLsSolution {
        let matrix = DMatrix::from_row_slice(rows, cols, a);
        let rhs = DVector::from_row_slice(b);
        solve_simplex_ls(&matrix, &rhs, mode, DEFAULT_CONDITION_THRESHOLD).unwrap()
    }

    #[test]
    fn identity_system_returns_rhs() {
        let sol = solve(&[1.0, 0.0, 0.0, 1.0], 2, 2, &[0.3, 0.7], ConstraintMode::AppendSumRow);
        assert_abs_diff_eq!(sol.solution[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.solution[1], 0.7, epsilon = 1e-12);
        assert!(sol.active_bounds.is_empty());
    }

    #[test]
    fn single_row_with_sum_constraint() {
        // 0.9 q1 + 0.2 q2 = 0.55 together with q1 + q2 = 1 gives q1 = 0.5.
        let sol = solve(&[0.9, 0.2], 1, 2, &[0.55], ConstraintMode::AppendSumRow);
        assert_abs_diff_eq!(sol.solution[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.solution[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_rhs_activates_bound() {
        // Unconstrained solution would be q1 ~ 1.07; the box pins q2 at zero.
        let sol = solve(&[0.9, 0.2], 1, 2, &[0.95], ConstraintMode::AppendSumRow);
        assert_eq!(sol.solution, vec![1.0, 0.0]);
        assert_eq!(sol.active_bounds, vec![1]);
    }

    #[test]
    fn sum_is_exactly_one() {
        let sol = solve(
            &[0.8, 0.3, 0.1, 0.1, 0.5, 0.2, 0.1, 0.2, 0.7],
            3,
            3,
            &[0.4, 0.3, 0.3],
            ConstraintMode::AppendSumRow,
        );
        let total: f64 = sol.solution.iter().sum();
        assert_eq!(total, 1.0);
        assert!(sol.solution.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rank_deficient_design_errors_with_report() {
        let matrix = DMatrix::from_row_slice(2, 2, &[0.7, 0.7, 0.3, 0.3]);
        let rhs = DVector::from_row_slice(&[0.6, 0.4]);
        let err = solve_simplex_ls(
            &matrix,
            &rhs,
            ConstraintMode::AppendSumRow,
            DEFAULT_CONDITION_THRESHOLD,
        )
        .unwrap_err();
        match err {
            Error::RankDeficient { needed, report } => {
                assert_eq!(needed, 2);
                assert!(report.numerical_rank < 2);
            }
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn modes_agree() {
        let a = [0.9, 0.2, 0.05, 0.1, 0.6, 0.15, 0.0, 0.2, 0.8];
        let b = [0.5, 0.3, 0.25];
        let append = solve(&a, 3, 3, &b, ConstraintMode::AppendSumRow);
        let subst = solve(&a, 3, 3, &b, ConstraintMode::Substitute);
        for (x, y) in append.solution.iter().zip(&subst.solution) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        assert_eq!(append.active_bounds, subst.active_bounds);
    }

    #[test]
    fn infeasible_rhs_modes_agree_on_boundary() {
        let append = solve(&[0.9, 0.2], 1, 2, &[0.05], ConstraintMode::AppendSumRow);
        let subst = solve(&[0.9, 0.2], 1, 2, &[0.05], ConstraintMode::Substitute);
        // Unconstrained q1 is negative; both must pin q1 at zero.
        assert_eq!(append.solution, vec![0.0, 1.0]);
        assert_eq!(subst.solution, vec![0.0, 1.0]);
        assert_eq!(append.active_bounds, vec![0]);
    }
}
