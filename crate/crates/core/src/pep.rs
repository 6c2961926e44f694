//! Matrix objects of the performance estimation problem: primal constraint
//! matrices for a schedule, the bordered dual LMI, and the multiplier set.
//!
//! Everything is normalized to `L = R = 1`. Points are indexed `0..=N`, so
//! every matrix here is `(N+1) x (N+1)` with `u_i = e_i` (0-based) and the
//! dual LMI is `(N+2) x (N+2)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::StepSchedule;
use crate::sdp::{BlockKind, SdpProblem};

/// Tolerance on the linear equalities tying `tau` to `lambda`.
pub const MULTIPLIER_EQUALITY_TOL: f64 = 1e-9;

/// Constraint matrices of the estimation problem for one schedule.
///
/// The four families are built on demand from the cumulative step vectors
/// `P_j[k] = sum_{t=k+1..j} h_k^(t)`, so memory stays `O(N^2)`.
#[derive(Debug, Clone)]
pub struct PepMatrices {
    n: usize,
    cumulative: Vec<DVector<f64>>,
}

impl PepMatrices {
    pub fn new(s: &StepSchedule) -> Self {
        let n = s.n();
        let mut cumulative = Vec::with_capacity(n + 1);
        cumulative.push(DVector::zeros(n + 1));
        for j in 1..=n {
            let mut p = cumulative[j - 1].clone();
            for k in 0..j {
                p[k] += s.get(j, k);
            }
            cumulative.push(p);
        }
        Self { n, cumulative }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Side length `N + 1` of every constraint matrix.
    pub fn dim(&self) -> usize {
        self.n + 1
    }

    /// `P_j`: total coefficient on each gradient accumulated from `x_0` to `x_j`.
    pub fn cumulative(&self, j: usize) -> &DVector<f64> {
        &self.cumulative[j]
    }

    /// `Ã_{i,j}` for `i < j`.
    pub fn a(&self, i: usize, j: usize) -> DMatrix<f64> {
        assert!(i < j && j <= self.n, "a({i}, {j}) needs i < j <= N");
        let w = &self.cumulative[j] - &self.cumulative[i];
        let mut m = self.difference_outer(i, j);
        add_sym_outer(&mut m, j, &w, 0.5);
        m
    }

    /// `B̃_{i,j}` for `j < i`.
    pub fn b(&self, i: usize, j: usize) -> DMatrix<f64> {
        assert!(j < i && i <= self.n, "b({i}, {j}) needs j < i <= N");
        let w = &self.cumulative[i] - &self.cumulative[j];
        let mut m = self.difference_outer(i, j);
        add_sym_outer(&mut m, j, &w, -0.5);
        m
    }

    /// `C̃_i = ½ u_i u_i^T`.
    pub fn c(&self, i: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        m[(i, i)] = 0.5;
        m
    }

    /// `D̃_i = ½ u_i u_i^T + ½ (u_i P_i^T + P_i u_i^T)`.
    pub fn d(&self, i: usize) -> DMatrix<f64> {
        let mut m = self.c(i);
        add_sym_outer(&mut m, i, &self.cumulative[i], 0.5);
        m
    }

    fn difference_outer(&self, i: usize, j: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        m[(i, i)] = 0.5;
        m[(j, j)] = 0.5;
        m[(i, j)] = -0.5;
        m[(j, i)] = -0.5;
        m
    }
}

/// `m += scale * (u_i w^T + w u_i^T)`.
fn add_sym_outer(m: &mut DMatrix<f64>, i: usize, w: &DVector<f64>, scale: f64) {
    for k in 0..w.len() {
        let v = scale * w[k];
        m[(i, k)] += v;
        m[(k, i)] += v;
    }
}

pub fn build_constraint_matrices(s: &StepSchedule) -> PepMatrices {
    PepMatrices::new(s)
}

/// The gradient-method dual blocks `S_0`, `S_1` and border `q` for multipliers `lambda`.
pub fn build_gm_dual_matrices(
    lambda: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    let n = lambda.len();
    if n == 0 {
        return Err(Error::InvalidStepCount(0));
    }
    let q = DVector::from_vec(lambda_to_tau(lambda));
    let mut s0 = DMatrix::zeros(n + 1, n + 1);
    let mut s1 = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        s0[(i, i)] = 2.0 * lambda[i];
        s0[(i, i + 1)] = -lambda[i];
        s0[(i + 1, i)] = -lambda[i];
        s1[(i, i)] = 2.0 * lambda[i];
    }
    s0[(n, n)] = 1.0;
    s1[(n, n)] = 1.0;
    for r in 0..=n {
        for c in 0..r {
            s1[(r, c)] = q[r];
            s1[(c, r)] = q[r];
        }
    }
    Ok((s0, s1, q))
}

/// The `(N+2) x (N+2)` matrix `[[(1-h) S_0 + h S_1, q], [q^T, t]]`.
pub fn gm_dual_lmi(h: f64, lambda: &[f64], t: f64) -> Result<DMatrix<f64>> {
    let (s0, s1, q) = build_gm_dual_matrices(lambda)?;
    let n = lambda.len();
    let mut s = DMatrix::zeros(n + 2, n + 2);
    s.view_mut((0, 0), (n + 1, n + 1))
        .copy_from(&(s0 * (1.0 - h) + s1 * h));
    for i in 0..=n {
        s[(i, n + 1)] = q[i];
        s[(n + 1, i)] = q[i];
    }
    s[(n + 1, n + 1)] = t;
    Ok(s)
}

/// `tau` implied by `lambda`: `tau_0 = lambda_1`, `tau_i = lambda_{i+1} - lambda_i`, `tau_N = 1 - lambda_N`.
pub fn lambda_to_tau(lambda: &[f64]) -> Vec<f64> {
    let n = lambda.len();
    let mut tau = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let next = if i < n { lambda[i] } else { 1.0 };
        let prev = if i > 0 { lambda[i - 1] } else { 0.0 };
        tau.push(next - prev);
    }
    tau
}

/// Dual multipliers `(lambda_1..lambda_N, tau_0..tau_N, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub lambda: Vec<f64>,
    pub tau: Vec<f64>,
    pub t: f64,
}

impl DualCertificate {
    /// Certificate with `tau` derived from `lambda`.
    pub fn from_lambda(lambda: Vec<f64>, t: f64) -> Self {
        let tau = lambda_to_tau(&lambda);
        Self { lambda, tau, t }
    }

    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    /// Bound factor proved by the certificate when it is valid.
    pub fn factor(&self) -> f64 {
        0.5 * self.t
    }
}

/// A multiplier component, 1-based for `lambda` and 0-based for `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Multiplier {
    Lambda(usize),
    Tau(usize),
}

impl std::fmt::Display for Multiplier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Multiplier::Lambda(i) => write!(f, "lambda_{i}"),
            Multiplier::Tau(i) => write!(f, "tau_{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    /// Residual of each of the `N + 1` equalities, in the order `tau_0`, `tau_1..tau_{N-1}`, `tau_N`.
    pub equality_residuals: Vec<f64>,
    /// Components below `-tol`, with their values.
    pub negative: Vec<(Multiplier, f64)>,
    pub member: bool,
}

/// Checks membership of `(lambda, tau)` in the multiplier set.
pub fn check_multiplier_set(cert: &DualCertificate, tol: f64) -> Result<MembershipReport> {
    let n = cert.n();
    if cert.tau.len() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            got: cert.tau.len(),
        });
    }
    let implied = lambda_to_tau(&cert.lambda);
    let equality_residuals: Vec<f64> = implied
        .iter()
        .zip(&cert.tau)
        .map(|(a, b)| (a - b).abs())
        .collect();
    let mut negative = Vec::new();
    for (i, &l) in cert.lambda.iter().enumerate() {
        if l < -tol {
            negative.push((Multiplier::Lambda(i + 1), l));
        }
    }
    for (i, &t) in cert.tau.iter().enumerate() {
        if t < -tol {
            negative.push((Multiplier::Tau(i), t));
        }
    }
    let member = negative.is_empty()
        && equality_residuals
            .iter()
            .all(|&r| r <= MULTIPLIER_EQUALITY_TOL.max(tol));
    Ok(MembershipReport {
        equality_residuals,
        negative,
        member,
    })
}

/// The bordered dual matrix `[[sum lambda_i Ã_{i-1,i} + sum tau_i D̃_i, ½ tau], [½ tau^T, ½ t]]`.
pub fn assemble_dual_lmi(m: &PepMatrices, cert: &DualCertificate) -> Result<DMatrix<f64>> {
    let n = m.n();
    if cert.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: cert.n(),
        });
    }
    if cert.tau.len() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            got: cert.tau.len(),
        });
    }
    let implied = lambda_to_tau(&cert.lambda);
    for (index, (a, b)) in implied.iter().zip(&cert.tau).enumerate() {
        let residual = (a - b).abs();
        if residual > MULTIPLIER_EQUALITY_TOL {
            return Err(Error::MultiplierEquality { index, residual });
        }
    }
    let mut top = DMatrix::zeros(n + 1, n + 1);
    for i in 1..=n {
        top += m.a(i - 1, i) * cert.lambda[i - 1];
    }
    for i in 0..=n {
        top += m.d(i) * cert.tau[i];
    }
    let mut s = DMatrix::zeros(n + 2, n + 2);
    s.view_mut((0, 0), (n + 1, n + 1)).copy_from(&top);
    for i in 0..=n {
        s[(i, n + 1)] = 0.5 * cert.tau[i];
        s[(n + 1, i)] = 0.5 * cert.tau[i];
    }
    s[(n + 1, n + 1)] = 0.5 * cert.t;
    Ok(s)
}

/// Twice the bordered dual matrix, which for a gradient-method schedule is
/// exactly `[[(1-h) S_0 + h S_1, q], [q^T, t]]`.
pub fn doubled_dual_lmi(m: &PepMatrices, cert: &DualCertificate) -> Result<DMatrix<f64>> {
    Ok(assemble_dual_lmi(m, cert)? * 2.0)
}

/// The dual SDP in variables `(lambda_1..lambda_N, t)` with `tau` eliminated:
/// minimize `½ t` subject to the bordered LMI, `lambda >= 0` and `tau >= 0`.
pub fn build_dual_sdp(m: &PepMatrices) -> SdpProblem {
    let n = m.n();
    let dim = n + 2;
    let mut p = SdpProblem::new(n + 1);
    let lmi = p.add_block(BlockKind::Psd, dim);
    let taus = p.add_block(BlockKind::Diagonal, n + 1);
    let d: Vec<DMatrix<f64>> = (0..=n).map(|i| m.d(i)).collect();

    // Constant part comes from tau_N = 1 - lambda_N.
    p.add_constant_matrix(lmi, &bordered(&d[n], n, 1.0));
    p.add_constant(taus, n, n, 1.0);
    for i in 1..=n {
        let var = i - 1;
        // lambda_i enters tau_{i-1} with +1 and tau_i with -1.
        let top = m.a(i - 1, i) + &d[i - 1] - &d[i];
        let mut block = DMatrix::zeros(dim, dim);
        block.view_mut((0, 0), (n + 1, n + 1)).copy_from(&top);
        block[(i - 1, n + 1)] += 0.5;
        block[(n + 1, i - 1)] += 0.5;
        block[(i, n + 1)] -= 0.5;
        block[(n + 1, i)] -= 0.5;
        p.add_coefficient_matrix(var, lmi, &block);
        p.add_coefficient(var, taus, i - 1, i - 1, 1.0);
        p.add_coefficient(var, taus, i, i, -1.0);
        p.require_nonnegative(var);
    }
    p.add_coefficient(n, lmi, n + 1, n + 1, 0.5);
    p.set_objective(n, 0.5);
    p
}

/// Index of the variable `t` in [`build_dual_sdp`].
pub fn dual_sdp_t_index(n: usize) -> usize {
    n
}

/// `[[top, ½ e_border], [½ e_border^T, 0]]` scaled by `weight`.
fn bordered(top: &DMatrix<f64>, border: usize, weight: f64) -> DMatrix<f64> {
    let k = top.nrows();
    let mut s = DMatrix::zeros(k + 1, k + 1);
    s.view_mut((0, 0), (k, k)).copy_from(&(top * weight));
    s[(border, k)] = 0.5 * weight;
    s[(k, border)] = 0.5 * weight;
    s
}

/// Writes `m` row-major, one row per line, entries in `{:.16e}` separated by spaces.
pub fn write_matrix<W: Write>(m: &DMatrix<f64>, mut out: W) -> Result<()> {
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|c| format!("{:.16e}", m[(r, c)]))
            .collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::gm_schedule;

    #[test]
    fn empty_sums() {
        let m = build_constraint_matrices(&gm_schedule(3, 0.7).unwrap());
        let c0 = m.c(0);
        assert_eq!(c0[(0, 0)], 0.5);
        assert_eq!(c0.iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(m.d(0), c0);
    }

    #[test]
    fn gm_single_step_offdiagonal() {
        let h = 0.8;
        let l1 = 0.3;
        let m = build_constraint_matrices(&gm_schedule(1, h).unwrap());
        let cert = DualCertificate::from_lambda(vec![l1], 0.0);
        let s = doubled_dual_lmi(&m, &cert).unwrap();
        assert!((s[(0, 1)] - (h - l1)).abs() < 1e-15);
    }

    #[test]
    fn gm_blocks_small() {
        let (s0, s1, q) = build_gm_dual_matrices(&[0.4]).unwrap();
        assert_eq!(s0, DMatrix::from_row_slice(2, 2, &[0.8, -0.4, -0.4, 1.0]));
        assert_eq!(s1, DMatrix::from_row_slice(2, 2, &[0.8, 0.6, 0.6, 1.0]));
        assert_eq!(q.as_slice(), &[0.4, 0.6]);
        let (_, _, q) = build_gm_dual_matrices(&[0.25, 2.0 / 3.0]).unwrap();
        let expect = [0.25, 5.0 / 12.0, 1.0 / 3.0];
        for (a, b) in q.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn tau_from_lambda() {
        assert_eq!(lambda_to_tau(&[0.0, 0.0, 0.0]), vec![0.0, 0.0, 0.0, 1.0]);
        let bad = DualCertificate::from_lambda(vec![0.6, 0.2], 1.0);
        let report = check_multiplier_set(&bad, 0.0).unwrap();
        assert!(!report.member);
        assert_eq!(report.negative.len(), 1);
        assert_eq!(report.negative[0].0, Multiplier::Tau(1));
    }

    #[test]
    fn equality_violation_is_an_error() {
        let m = build_constraint_matrices(&gm_schedule(2, 1.0).unwrap());
        let mut cert = DualCertificate::from_lambda(vec![0.25, 0.5], 0.2);
        cert.tau[1] += 0.1;
        match assemble_dual_lmi(&m, &cert) {
            Err(Error::MultiplierEquality { index: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_lambda_certificate() {
        let m = build_constraint_matrices(&gm_schedule(3, 1.0).unwrap());
        let cert = DualCertificate::from_lambda(vec![0.0; 3], 1.0);
        let s = assemble_dual_lmi(&m, &cert).unwrap();
        assert_eq!(s[(3, 4)], 0.5);
        assert_eq!(s[(4, 4)], 0.5);
        assert_eq!(s.view((0, 0), (4, 4)), m.d(3));
    }

    #[test]
    fn dual_sdp_matches_assembled_lmi() {
        let s = crate::schedule::hbm_schedule(3, 1.0, 0.5).unwrap();
        let m = build_constraint_matrices(&s);
        let p = build_dual_sdp(&m);
        let lambda = vec![0.2, 0.5, 0.9];
        let t = 0.7;
        let mut y = lambda.clone();
        y.push(t);
        let blocks = p.lmi_value(&y);
        let direct =
            assemble_dual_lmi(&m, &DualCertificate::from_lambda(lambda.clone(), t)).unwrap();
        assert!((&blocks[0] - direct).amax() < 1e-14);
        let tau = lambda_to_tau(&lambda);
        for (i, &v) in tau.iter().enumerate() {
            assert!((blocks[1][(i, i)] - v).abs() < 1e-14);
        }
    }

    #[test]
    fn matrix_dump_format() {
        let mut buf = Vec::new();
        write_matrix(&DMatrix::from_row_slice(1, 2, &[1.0, -0.5]), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "1.0000000000000000e0 -5.0000000000000000e-1\n"
        );
    }
}
