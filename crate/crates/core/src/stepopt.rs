//! Optimal step-size synthesis through a linear SDP relaxation of the
//! bilinear design problem, and recovery of the step coefficients.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bounds::{numeric_bound, SolverDiagnostics};
use crate::error::{Error, Result};
use crate::pep::lambda_to_tau;
use crate::schedule::StepSchedule;
use crate::sdp::{self, BlockKind, SdpConfig, SdpProblem, SolveStatus};

/// Largest accepted mismatch when recovered steps are substituted back into `r`.
pub const SUBSTITUTION_TOL: f64 = 1e-6;
/// Largest accepted difference between the relaxation value and the recovered schedule's bound.
pub const CROSSCHECK_TOL: f64 = 1e-4;
/// Multipliers at or below this are treated as zero during recovery.
const ZERO_MULTIPLIER: f64 = 1e-10;

/// Index of `r_{i,k}` among the relaxation variables (`1 <= i <= n`, `k < i`).
pub fn r_index(i: usize, k: usize) -> usize {
    (i - 1) * i / 2 + k
}

/// Number of `r` variables for `n` steps.
pub fn r_count(n: usize) -> usize {
    n * (n + 1) / 2
}

/// The relaxation in variables `(r, lambda_1..lambda_N, t)`, with `tau` eliminated:
/// minimize `½ t` subject to `[[S(r, lambda, tau), ½ tau], [½ tau^T, ½ t]] ⪰ 0`,
/// `lambda >= 0`, `tau >= 0`.
pub fn build_lin(n: usize) -> Result<SdpProblem> {
    if n == 0 {
        return Err(Error::InvalidStepCount(0));
    }
    let nr = r_count(n);
    let lam = |i: usize| nr + i - 1;
    let t_var = nr + n;
    let mut p = SdpProblem::new(nr + n + 1);
    let lmi = p.add_block(BlockKind::Psd, n + 2);
    let taus = p.add_block(BlockKind::Diagonal, n + 1);
    let border = n + 1;

    // tau_N = 1 - lambda_N
    p.add_constant(lmi, n, n, 0.5);
    p.add_constant(lmi, n, border, 0.5);
    p.add_constant(taus, n, n, 1.0);
    for i in 1..=n {
        let v = lam(i);
        // ½ lambda_i (u_{i-1} - u_i)(u_{i-1} - u_i)^T
        p.add_coefficient(v, lmi, i - 1, i - 1, 0.5);
        p.add_coefficient(v, lmi, i, i, 0.5);
        p.add_coefficient(v, lmi, i - 1, i, -0.5);
        // lambda_i enters tau_{i-1} with +1 and tau_i with -1.
        p.add_coefficient(v, lmi, i - 1, i - 1, 0.5);
        p.add_coefficient(v, lmi, i, i, -0.5);
        p.add_coefficient(v, lmi, i - 1, border, 0.5);
        p.add_coefficient(v, lmi, i, border, -0.5);
        p.add_coefficient(v, taus, i - 1, i - 1, 1.0);
        p.add_coefficient(v, taus, i, i, -1.0);
        p.require_nonnegative(v);
        for k in 0..i {
            p.add_coefficient(r_index(i, k), lmi, k, i, 0.5);
        }
    }
    p.add_coefficient(t_var, lmi, border, border, 0.5);
    p.set_objective(t_var, 0.5);
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinSolution {
    pub n: usize,
    /// `r[i-1][k] = r_{i,k}`.
    pub r: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub tau: Vec<f64>,
    pub t: f64,
    pub factor: f64,
    pub diagnostics: SolverDiagnostics,
}

impl LinSolution {
    pub fn inverse_factor(&self) -> f64 {
        1.0 / self.factor
    }

    pub fn r(&self, i: usize, k: usize) -> f64 {
        self.r[i - 1][k]
    }
}

pub fn solve_lin(n: usize, cfg: &SdpConfig) -> Result<LinSolution> {
    let p = build_lin(n)?;
    let sol = sdp::solve(&p, cfg)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Solver {
            status: sol.status,
            context: format!("step-size relaxation with {n} steps"),
        });
    }
    let nr = r_count(n);
    let r = (1..=n)
        .map(|i| (0..i).map(|k| sol.vars[r_index(i, k)]).collect())
        .collect();
    let lambda = sol.vars[nr..nr + n].to_vec();
    let tau = lambda_to_tau(&lambda);
    let t = sol.vars[nr + n];
    Ok(LinSolution {
        n,
        r,
        lambda,
        tau,
        t,
        factor: sol.objective_value,
        diagnostics: SolverDiagnostics {
            status: sol.status,
            iterations: sol.iterations,
            primal_infeasibility: sol.residuals.primal_infeasibility,
            dual_infeasibility: sol.residuals.dual_infeasibility,
            relative_gap: sol.residuals.relative_gap,
            lmi_min_eigenvalue: p.lmi_min_eigenvalue(&sol.vars),
        },
    })
}

/// Which reading of the recovery rule produced the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoveryPath {
    /// `h_k^(i) = (tau_i sum_{t=k+1}^{i-1} h_k^(t) - r_{i,k}) / lambda_i`.
    Verbatim,
    /// `h_k^(i) = (r_{i,k} - tau_i sum_{t=k+1}^{i-1} h_k^(t)) / (lambda_i + tau_i)`.
    ForwardSolve,
}

impl std::fmt::Display for RecoveryPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RecoveryPath::Verbatim => "verbatim",
            RecoveryPath::ForwardSolve => "forward-solve",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub schedule: StepSchedule,
    pub path: RecoveryPath,
    /// Substitution residual of the verbatim reading.
    pub verbatim_residual: f64,
    /// Substitution residual of the forward solve (not computed when the verbatim reading passes).
    pub forward_residual: Option<f64>,
}

/// `max |lambda_i h_k^(i) + tau_i sum_{t=k+1}^{i} h_k^(t) - r_{i,k}|`.
pub fn substitution_residual(s: &StepSchedule, sol: &LinSolution) -> f64 {
    let mut worst = 0.0_f64;
    for i in 1..=sol.n {
        for k in 0..i {
            let tail: f64 = (k + 1..=i).map(|t| s.get(t, k)).sum();
            let v = sol.lambda[i - 1] * s.get(i, k) + sol.tau[i] * tail - sol.r(i, k);
            worst = worst.max(v.abs());
        }
    }
    worst
}

fn recover_with(sol: &LinSolution, path: RecoveryPath) -> Result<StepSchedule> {
    let n = sol.n;
    let mut s = StepSchedule::zeros(n)?;
    for i in 1..=n {
        let lambda = sol.lambda[i - 1];
        let tau = sol.tau[i];
        if lambda <= ZERO_MULTIPLIER {
            continue;
        }
        for k in 0..i {
            let partial: f64 = (k + 1..i).map(|t| s.get(t, k)).sum();
            let h = match path {
                RecoveryPath::Verbatim => (tau * partial - sol.r(i, k)) / lambda,
                RecoveryPath::ForwardSolve => (sol.r(i, k) - tau * partial) / (lambda + tau),
            };
            s.set(i, k, h);
        }
    }
    Ok(s)
}

/// Recovers step coefficients from a relaxation solution, trying the verbatim
/// rule first and falling back to a forward solve of the defining equations.
pub fn recover_steps(sol: &LinSolution) -> Result<Recovery> {
    let verbatim = recover_with(sol, RecoveryPath::Verbatim)?;
    let verbatim_residual = substitution_residual(&verbatim, sol);
    if verbatim_residual <= SUBSTITUTION_TOL {
        return Ok(Recovery {
            schedule: verbatim,
            path: RecoveryPath::Verbatim,
            verbatim_residual,
            forward_residual: None,
        });
    }
    let forward = recover_with(sol, RecoveryPath::ForwardSolve)?;
    let forward_residual = substitution_residual(&forward, sol);
    if forward_residual <= SUBSTITUTION_TOL {
        log::info!(
            "verbatim recovery residual {verbatim_residual:.3e}; using forward solve ({forward_residual:.3e})"
        );
        return Ok(Recovery {
            schedule: forward,
            path: RecoveryPath::ForwardSolve,
            verbatim_residual,
            forward_residual: Some(forward_residual),
        });
    }
    Err(Error::Recovery {
        verbatim: verbatim_residual,
        forward: forward_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckReport {
    pub relaxation_factor: f64,
    pub schedule_factor: f64,
    pub difference: f64,
    pub pass: bool,
}

/// Computes the numeric bound of `schedule` and compares it with the relaxation value.
pub fn crosscheck(
    schedule: &StepSchedule,
    sol: &LinSolution,
    cfg: &SdpConfig,
) -> Result<CrosscheckReport> {
    let report = numeric_bound(schedule, cfg)?;
    let difference = (report.factor - sol.factor).abs();
    Ok(CrosscheckReport {
        relaxation_factor: sol.factor,
        schedule_factor: report.factor,
        difference,
        pass: difference <= CROSSCHECK_TOL,
    })
}

/// One line per step, `x_i <- x_{i-1} - c/L f'(x_k) - ...`, with four decimals.
///
/// With `plus_sign` the coefficients are negated and joined with `+`, which
/// prints the same method in the opposite sign convention.
pub fn render_schedule(s: &StepSchedule, plus_sign: bool) -> String {
    let mut out = String::new();
    for i in 1..=s.n() {
        let _ = write!(out, "x_{i} <- x_{}", i - 1);
        for (k, &h) in s.row(i).iter().enumerate() {
            let v = if plus_sign { -h } else { h };
            let (op, mag) = match (plus_sign, v < 0.0) {
                (true, false) | (false, true) => ('+', v.abs()),
                _ => ('-', v.abs()),
            };
            let _ = write!(out, " {op} {mag:.4}/L f'(x_{k})");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variable_counts() {
        let p = build_lin(1).unwrap();
        assert_eq!(p.num_vars(), 3);
        assert_eq!(p.blocks()[0], (BlockKind::Psd, 3));
        assert_eq!(r_count(5), 15);
        assert_eq!(build_lin(5).unwrap().num_vars(), 15 + 5 + 1);
        assert!(build_lin(0).is_err());
    }

    #[test]
    fn diagonal_equals_lambda() {
        let n = 4;
        let p = build_lin(n).unwrap();
        let lambda = [0.1, 0.3, 0.35, 0.8];
        let mut y = vec![0.0; p.num_vars()];
        for (i, l) in lambda.iter().enumerate() {
            y[r_count(n) + i] = *l;
        }
        let m = &p.lmi_value(&y)[0];
        for i in 0..n {
            assert!((m[(i, i)] - lambda[i]).abs() < 1e-15);
        }
        assert!((m[(n, n)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn render_signs() {
        let s = StepSchedule::from_rows(&[vec![1.5], vec![0.25, 2.0]]).unwrap();
        let minus = render_schedule(&s, false);
        assert_eq!(
            minus.lines().next().unwrap(),
            "x_1 <- x_0 - 1.5000/L f'(x_0)"
        );
        let plus = render_schedule(&s.negated(), true);
        assert_eq!(
            plus.lines().nth(1).unwrap(),
            "x_2 <- x_1 + 0.2500/L f'(x_0) + 2.0000/L f'(x_1)"
        );
    }
}
