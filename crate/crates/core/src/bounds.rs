//! Worst-case bound factors `c` with `f(x_N) - f* <= c L R^2`.
//!
//! Every computation is done at `L = R = 1`; the factor is dimensionless.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pep::{self, DualCertificate, MembershipReport, PepMatrices};
use crate::schedule::{fgm_schedule, gm_schedule, FgmVariant, StepSchedule};
use crate::sdp::{self, SdpConfig, SolveStatus};
use crate::simulate::{self, nu, phi1_oracle, phi2_oracle, run_fo, DEFAULT_DIM};

/// Where a factor comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundSource {
    Analytic,
    DualSdp,
    Reference,
}

impl std::fmt::Display for BoundSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundSource::Analytic => "analytic",
            BoundSource::DualSdp => "dual-sdp",
            BoundSource::Reference => "reference",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
    /// Smallest eigenvalue of the dual LMI at the returned multipliers.
    pub lmi_min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub factor: f64,
    pub inverse_factor: f64,
    pub source: BoundSource,
    pub certificate: Option<DualCertificate>,
    pub diagnostics: Option<SolverDiagnostics>,
}

impl BoundReport {
    fn new(factor: f64, source: BoundSource) -> Self {
        Self {
            factor,
            inverse_factor: 1.0 / factor,
            source,
            certificate: None,
            diagnostics: None,
        }
    }
}

/// The explicit gradient-method certificate: `lambda_i = i / (2N + 1 - i)`, `t = 1 / (2Nh + 1)`.
pub fn gm_certificate(n: usize, h: f64) -> Result<DualCertificate> {
    if n == 0 {
        return Err(Error::InvalidStepCount(0));
    }
    Ok(DualCertificate::from_lambda(
        certificate_lambda(n),
        1.0 / (2.0 * n as f64 * h + 1.0),
    ))
}

/// `lambda_i = i / (2N + 1 - i)` for `i = 1..N`.
pub fn certificate_lambda(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / (2 * n + 1 - i) as f64).collect()
}

/// `1 / (4nh + 2)` for `0 < h <= 1`, with its certificate.
pub fn analytic_gm_bound(n: usize, h: f64) -> Result<BoundReport> {
    if n == 0 {
        return Err(Error::InvalidStepCount(0));
    }
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::OutOfRange(format!(
            "the analytic gradient-method bound needs 0 < h <= 1 (got h = {h}); use numeric_bound instead"
        )));
    }
    let mut report = BoundReport::new(1.0 / (4.0 * n as f64 * h + 2.0), BoundSource::Analytic);
    report.certificate = Some(gm_certificate(n, h)?);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub membership: MembershipReport,
    pub lmi_min_eigenvalue: f64,
    pub psd: bool,
    /// For constant-step schedules: `max |S u|` with `u = (1, ..., 1, -(2Nh + 1))`.
    pub kernel_residual: Option<f64>,
    /// For constant-step schedules: smallest eigenvalue of `(1-h) S_0 + h S_1`.
    pub combination_min_eigenvalue: Option<f64>,
    /// Factor proved when the certificate passes, `t / 2`.
    pub factor: f64,
    pub pass: bool,
}

/// Checks multiplier-set membership and positive semidefiniteness of the dual LMI.
///
/// A passing certificate proves `f(x_N) - f* <= (t/2) L R^2`.
pub fn verify_certificate(
    s: &StepSchedule,
    cert: &DualCertificate,
    tol: f64,
) -> Result<CertificateReport> {
    if cert.n() != s.n() {
        return Err(Error::DimensionMismatch {
            expected: s.n(),
            got: cert.n(),
        });
    }
    let membership = pep::check_multiplier_set(cert, tol)?;
    let m = PepMatrices::new(s);
    let (lmi_min_eigenvalue, psd) = if membership
        .equality_residuals
        .iter()
        .all(|&r| r <= pep::MULTIPLIER_EQUALITY_TOL)
    {
        let lmi = pep::assemble_dual_lmi(&m, cert)?;
        let ev = sdp::min_eigenvalue_unchecked(&lmi);
        (ev, ev >= -tol)
    } else {
        (f64::NAN, false)
    };
    let (kernel_residual, combination_min_eigenvalue) = match s.as_constant_gradient() {
        Some(h) => {
            let n = s.n();
            let lmi = pep::gm_dual_lmi(h, &cert.lambda, cert.t)?;
            let mut u = nalgebra::DVector::from_element(n + 2, 1.0);
            u[n + 1] = -(2.0 * n as f64 * h + 1.0);
            let kernel = (&lmi * u).amax();
            let combo = if (0.0..=1.0).contains(&h) {
                let top = lmi.view((0, 0), (n + 1, n + 1)).clone_owned();
                Some(sdp::min_eigenvalue_unchecked(&top))
            } else {
                None
            };
            (Some(kernel), combo)
        }
        None => (None, None),
    };
    Ok(CertificateReport {
        pass: membership.member && psd,
        membership,
        lmi_min_eigenvalue,
        psd,
        kernel_residual,
        combination_min_eigenvalue,
        factor: cert.factor(),
    })
}

/// Solves the dual SDP for `s` and returns its optimal value `½ t` as the factor.
pub fn numeric_bound(s: &StepSchedule, cfg: &SdpConfig) -> Result<BoundReport> {
    let m = PepMatrices::new(s);
    let problem = pep::build_dual_sdp(&m);
    let sol = sdp::solve(&problem, cfg)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Solver {
            status: sol.status,
            context: format!(
                "the dual problem of this {}-step schedule is not solvable to optimality; \
                 the schedule may admit no finite worst-case bound",
                s.n()
            ),
        });
    }
    let n = s.n();
    let cert =
        DualCertificate::from_lambda(sol.vars[..n].to_vec(), sol.vars[pep::dual_sdp_t_index(n)]);
    let lmi_min_eigenvalue = problem.lmi_min_eigenvalue(&sol.vars);
    let mut report = BoundReport::new(sol.objective_value, BoundSource::DualSdp);
    report.certificate = Some(cert);
    report.diagnostics = Some(SolverDiagnostics {
        status: sol.status,
        iterations: sol.iterations,
        primal_infeasibility: sol.residuals.primal_infeasibility,
        dual_infeasibility: sol.residuals.dual_infeasibility,
        relative_gap: sol.residuals.relative_gap,
        lmi_min_eigenvalue,
    });
    Ok(report)
}

/// The trivial bound `f(x_0) - f* <= L R^2 / 2` for a method that takes no step.
pub fn zero_step_bound() -> BoundReport {
    BoundReport::new(0.5, BoundSource::Analytic)
}

/// Bound for the accelerated method's main (`x_n`) or auxiliary (`y_n`) point.
///
/// The auxiliary point `y_1` is `x_0` itself, so that case takes the zero-step bound.
pub fn fgm_bound(n: usize, variant: FgmVariant, cfg: &SdpConfig) -> Result<BoundReport> {
    if n == 1 && variant == FgmVariant::Auxiliary {
        return Ok(zero_step_bound());
    }
    numeric_bound(&fgm_schedule(n, variant)?, cfg)
}

/// Known closed-form rates quoted for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceBound {
    /// `1 / (2n)` for the gradient method with `h = 1`.
    ClassicalGradient,
    /// `2 / (n + 1)^2` for the accelerated method.
    Nesterov,
    /// `3 / (32 (n + 1)^2)`, a lower bound for any first-order method in high dimension.
    ResistingOracle,
}

impl ReferenceBound {
    pub fn factor(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            ReferenceBound::ClassicalGradient => 1.0 / (2.0 * n),
            ReferenceBound::Nesterov => 2.0 / ((n + 1.0) * (n + 1.0)),
            ReferenceBound::ResistingOracle => 3.0 / (32.0 * (n + 1.0) * (n + 1.0)),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ReferenceBound::ClassicalGradient => "classical-gm",
            ReferenceBound::Nesterov => "nesterov",
            ReferenceBound::ResistingOracle => "resisting-oracle",
        }
    }

    pub fn report(self, n: usize) -> BoundReport {
        BoundReport::new(self.factor(n), BoundSource::Reference)
    }
}

/// Factors attained by the gradient method on the two worst-case functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttainedFactors {
    pub phi1: f64,
    pub phi2: f64,
}

impl AttainedFactors {
    pub fn max(&self) -> f64 {
        self.phi1.max(self.phi2)
    }
}

/// Runs `n` gradient steps of length `h` from `x_0 = e_1` on both worst-case functions.
pub fn gm_attained_factors(n: usize, h: f64) -> Result<AttainedFactors> {
    let s = gm_schedule(n, h)?;
    let x0 = nu(DEFAULT_DIM);
    let phi1 = run_fo(&phi1_oracle(n, h, 1.0, 1.0)?, &s, &x0)?.attained_factor()?;
    let phi2 = run_fo(&phi2_oracle(1.0, DEFAULT_DIM)?, &s, &x0)?.attained_factor()?;
    Ok(AttainedFactors { phi1, phi2 })
}

/// `½ max(1 / (2nh + 1), (1 - h)^(2n))`.
pub fn conjectured_gm_factor(n: usize, h: f64) -> f64 {
    let n = n as f64;
    0.5 * (1.0 / (2.0 * n * h + 1.0)).max((1.0 - h).powf(2.0 * n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureReport {
    pub n: usize,
    pub h: f64,
    pub conjectured: f64,
    /// Dual SDP factor, absent when the solver did not reach optimality.
    pub numeric: Option<f64>,
    pub numeric_status: SolveStatus,
    pub attained: AttainedFactors,
    /// `numeric - conjectured`.
    pub gap_to_conjecture: Option<f64>,
    /// `numeric - max(attained)`, nonnegative up to solver tolerance.
    pub gap_to_attained: Option<f64>,
}

/// Compares the conjectured gradient-method rate with the numeric bound and the attained values.
pub fn conjecture_explorer(n: usize, h: f64, cfg: &SdpConfig) -> Result<ConjectureReport> {
    if !(h > 0.0 && h < 2.0) {
        return Err(Error::OutOfRange(format!(
            "the conjecture concerns 0 < h < 2 (got h = {h})"
        )));
    }
    let conjectured = conjectured_gm_factor(n, h);
    let attained = gm_attained_factors(n, h)?;
    let (numeric, numeric_status) = match numeric_bound(&gm_schedule(n, h)?, cfg) {
        Ok(r) => (Some(r.factor), SolveStatus::Optimal),
        Err(Error::Solver { status, .. }) => (None, status),
        Err(e) => return Err(e),
    };
    Ok(ConjectureReport {
        n,
        h,
        conjectured,
        numeric,
        numeric_status,
        attained,
        gap_to_conjecture: numeric.map(|v| v - conjectured),
        gap_to_attained: numeric.map(|v| v - attained.max()),
    })
}

/// One line of a bound table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub method: String,
    pub n: usize,
    pub parameters: String,
    pub factor: Option<f64>,
    pub inverse_factor: Option<f64>,
    pub source: BoundSource,
    pub status: String,
    /// Relative duality gap reported by the solver, when one was used.
    pub gap: Option<f64>,
}

impl BoundRow {
    pub fn from_report(method: &str, n: usize, parameters: &str, report: &BoundReport) -> Self {
        Self {
            method: method.to_string(),
            n,
            parameters: parameters.to_string(),
            factor: Some(report.factor),
            inverse_factor: Some(report.inverse_factor),
            source: report.source,
            status: report
                .diagnostics
                .map(|d| d.status.to_string())
                .unwrap_or_else(|| SolveStatus::Optimal.to_string()),
            gap: report.diagnostics.map(|d| d.relative_gap),
        }
    }

    pub fn failed(
        method: &str,
        n: usize,
        parameters: &str,
        source: BoundSource,
        err: &Error,
    ) -> Self {
        let status = match err {
            Error::Solver { status, .. } => status.to_string(),
            other => format!("error: {other}"),
        };
        Self {
            method: method.to_string(),
            n,
            parameters: parameters.to_string(),
            factor: None,
            inverse_factor: None,
            source,
            status,
            gap: None,
        }
    }
}

/// Writes rows as CSV (`method,n,parameters,factor,inverse_factor,source,status,gap`)
/// with `digits` significant digits.
pub fn write_bound_table<W: Write>(rows: &[BoundRow], out: W, digits: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "n",
        "parameters",
        "factor",
        "inverse_factor",
        "source",
        "status",
        "gap",
    ])?;
    let fmt = |v: Option<f64>| v.map(|x| format_significant(x, digits)).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.n.to_string(),
            r.parameters.clone(),
            fmt(r.factor),
            fmt(r.inverse_factor),
            r.source.to_string(),
            r.status.clone(),
            r.gap.map(|g| format!("{g:.2e}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `x` rounded to `digits` significant digits, in plain notation when that is short.
pub fn format_significant(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", digits - 1, x);
    // The exponent after rounding, so 9.9999 at 3 digits becomes 10.0 and not 10.00.
    let exponent: i32 = sci[sci.find('e').expect("exponent present") + 1..]
        .parse()
        .expect("integer exponent");
    if (-4..15).contains(&exponent) {
        let decimals = (digits as i32 - 1 - exponent).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}

/// Sandwich check used by tests and the CLI: the attained factor of a simulated
/// trajectory never exceeds a proven bound.
pub fn attained_within_bound(traj: &simulate::Trajectory, bound: f64, tol: f64) -> Result<bool> {
    Ok(traj.attained_factor()? <= bound + tol)
}
