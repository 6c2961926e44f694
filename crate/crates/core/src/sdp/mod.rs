//! Small dense semidefinite programming toolkit.
//!
//! Problems are stated in LMI form, `minimize c^T y` subject to
//! `F_0 + sum_j y_j F_j ⪰ 0`, and solved with a primal-dual interior-point
//! method. All linear algebra is dense and single threaded, so results are
//! bit-for-bit reproducible for a given input.

mod linalg;
mod problem;
mod solver;

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub(crate) use linalg::min_eigenvalue_unchecked;
pub use linalg::{eigenvalues, is_psd, min_eigenvalue, SYMMETRY_TOL};
pub use problem::{BlockKind, Entry, LinearEquality, SdpProblem};

/// Termination status of the interior-point method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    /// A Farkas-type certificate shows the LMI has no feasible point.
    Infeasible,
    /// A feasible improving ray was found.
    Unbounded,
    /// The iteration limit was reached, or progress stalled, before convergence.
    MaxIterations,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIterations => "max-iterations",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpConfig {
    /// Target for the relative primal, dual and gap residuals.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Emit one `log::debug!` line per iteration.
    pub verbose: bool,
}

impl Default for SdpConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 200,
            verbose: false,
        }
    }
}

/// Final residuals, all relative to the data scale.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    /// Absolute duality gap `|c^T y + F_0 • Z|`.
    pub gap: f64,
    pub relative_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Relative duality gap.
    pub gap: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub mu: f64,
    pub step_primal: f64,
    pub step_dual: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// Values of the user's variables (length `num_vars`).
    pub vars: Vec<f64>,
    pub objective_value: f64,
    pub dual_objective: f64,
    pub status: SolveStatus,
    pub residuals: Residuals,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    /// Dual matrices for the PSD blocks, in block order (diagonal blocks omitted).
    pub dual_blocks: Vec<DMatrix<f64>>,
    /// Normalized residual of the infeasibility or unboundedness certificate, if one was found.
    pub certificate_residual: Option<f64>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Solves `problem`. Only malformed input is an error; every numerical
/// outcome is reported through [`SdpSolution::status`].
pub fn solve(problem: &SdpProblem, config: &SdpConfig) -> Result<SdpSolution> {
    solver::solve(problem, config)
}

/// Writes the iteration history as CSV with header `iteration,gap,primal_res,dual_res`.
pub fn write_iteration_log<W: Write>(history: &[IterationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "gap", "primal_res", "dual_res"])?;
    for r in history {
        w.write_record([
            r.iteration.to_string(),
            format!("{:e}", r.gap),
            format!("{:e}", r.primal_res),
            format!("{:e}", r.dual_res),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve_default(p: &SdpProblem) -> SdpSolution {
        solve(p, &SdpConfig::default()).unwrap()
    }

    #[test]
    fn scalar_lower_bound() {
        // min t s.t. t - 3 >= 0
        let mut p = SdpProblem::new(1);
        p.set_objective(0, 1.0);
        let b = p.add_block(BlockKind::Psd, 1);
        p.add_constant(b, 0, 0, -3.0);
        p.add_coefficient(0, b, 0, 0, 1.0);
        let s = solve_default(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.vars[0] - 3.0).abs() < 1e-7);
    }

    #[test]
    fn schur_complement_two_by_two() {
        // [[1, 1], [1, t]] ⪰ 0  <=>  t >= 1
        let mut p = SdpProblem::new(1);
        p.set_objective(0, 0.5);
        let b = p.add_block(BlockKind::Psd, 2);
        p.add_constant(b, 0, 0, 1.0);
        p.add_constant(b, 0, 1, 1.0);
        p.add_coefficient(0, b, 1, 1, 1.0);
        let s = solve_default(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.vars[0] - 1.0).abs() < 1e-7);
        assert!((s.objective_value - 0.5).abs() < 1e-7);
        assert!((s.dual_objective - 0.5).abs() < 1e-7);
        assert_eq!(s.dual_blocks.len(), 1);
    }

    #[test]
    fn max_eigenvalue_of_fixed_matrix() {
        // min t s.t. t I - A ⪰ 0 gives the largest eigenvalue of A.
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let mut p = SdpProblem::new(1);
        p.set_objective(0, 1.0);
        let b = p.add_block(BlockKind::Psd, 3);
        p.add_constant_matrix(b, &(-&a));
        p.add_coefficient_matrix(0, b, &DMatrix::identity(3, 3));
        let s = solve_default(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.vars[0] - (2.0 + 2f64.sqrt())).abs() < 1e-7);
    }

    #[test]
    fn sign_constraints_and_diagonal_blocks() {
        // min x + 2y s.t. x + y >= 1, x, y >= 0
        let mut p = SdpProblem::new(2);
        p.set_objective(0, 1.0);
        p.set_objective(1, 2.0);
        let b = p.add_block(BlockKind::Diagonal, 1);
        p.add_constant(b, 0, 0, -1.0);
        p.add_coefficient(0, b, 0, 0, 1.0);
        p.add_coefficient(1, b, 0, 0, 1.0);
        p.require_nonnegative(0);
        p.require_nonnegative(1);
        let s = solve_default(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.vars[0] - 1.0).abs() < 1e-6);
        assert!(s.vars[1].abs() < 1e-6);
    }

    #[test]
    fn equality_constraints_are_eliminated() {
        // min x - y s.t. x + y = 3, [[x, 1], [1, y]] ⪰ 0
        let mut p = SdpProblem::new(2);
        p.set_objective(0, 1.0);
        p.set_objective(1, -1.0);
        let b = p.add_block(BlockKind::Psd, 2);
        p.add_constant(b, 0, 1, 1.0);
        p.add_coefficient(0, b, 0, 0, 1.0);
        p.add_coefficient(1, b, 1, 1, 1.0);
        p.add_equality(vec![(0, 1.0), (1, 1.0)], 3.0);
        let s = solve_default(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        let x = (3.0 - 5f64.sqrt()) / 2.0;
        assert!((s.vars[0] - x).abs() < 1e-6, "{:?}", s.vars);
        assert!((s.vars[1] - (3.0 - x)).abs() < 1e-6);
        assert!(p.equality_residual(&s.vars) < 1e-9);
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let mut p = SdpProblem::new(1);
        let b = p.add_block(BlockKind::Psd, 1);
        p.add_coefficient(0, b, 0, 0, 1.0);
        p.add_equality(vec![(0, 1.0)], 1.0);
        p.add_equality(vec![(0, 1.0)], 2.0);
        assert_eq!(solve_default(&p).status, SolveStatus::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let mut p = SdpProblem::new(1);
        p.set_objective(0, -1.0);
        let b = p.add_block(BlockKind::Psd, 1);
        p.add_coefficient(0, b, 0, 0, 1.0);
        assert_eq!(solve_default(&p).status, SolveStatus::Unbounded);
    }

    #[test]
    fn detects_infeasible() {
        // diag(-1, 0) + t diag(0, 1) can never be PSD.
        let mut p = SdpProblem::new(1);
        p.set_objective(0, 1.0);
        let b = p.add_block(BlockKind::Psd, 2);
        p.add_constant(b, 0, 0, -1.0);
        p.add_coefficient(0, b, 1, 1, 1.0);
        let s = solve_default(&p);
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(s.certificate_residual.is_some());
    }

    #[test]
    fn free_variable_with_cost_is_unbounded() {
        let mut p = SdpProblem::new(2);
        p.set_objective(1, 1.0);
        let b = p.add_block(BlockKind::Psd, 1);
        p.add_constant(b, 0, 0, 1.0);
        p.add_coefficient(0, b, 0, 0, 1.0);
        assert_eq!(solve_default(&p).status, SolveStatus::Unbounded);
    }

    #[test]
    fn deterministic_and_logged() {
        let mut p = SdpProblem::new(1);
        p.set_objective(0, 0.5);
        let b = p.add_block(BlockKind::Psd, 2);
        p.add_constant(b, 0, 0, 1.0);
        p.add_constant(b, 0, 1, 1.0);
        p.add_coefficient(0, b, 1, 1, 1.0);
        let a = solve_default(&p);
        let c = solve_default(&p);
        assert_eq!(a.vars[0].to_bits(), c.vars[0].to_bits());
        assert_eq!(a.iterations, c.iterations);
        let mut buf = Vec::new();
        write_iteration_log(&a.history, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,gap,primal_res,dual_res\n"));
        assert_eq!(text.lines().count(), a.history.len() + 1);
    }

    #[test]
    fn iteration_limit_is_reported() {
        let mut p = SdpProblem::new(1);
        p.set_objective(0, 1.0);
        let b = p.add_block(BlockKind::Psd, 1);
        p.add_constant(b, 0, 0, -3.0);
        p.add_coefficient(0, b, 0, 0, 1.0);
        let cfg = SdpConfig {
            max_iterations: 1,
            ..SdpConfig::default()
        };
        assert_eq!(solve(&p, &cfg).unwrap().status, SolveStatus::MaxIterations);
    }

    #[test]
    fn rejects_malformed_entries() {
        let mut p = SdpProblem::new(1);
        let b = p.add_block(BlockKind::Diagonal, 2);
        p.add_coefficient(0, b, 0, 1, 1.0);
        assert!(solve(&p, &SdpConfig::default()).is_err());
    }
}
