//! Numerical verification of the positive-definiteness argument for the
//! gradient-method dual blocks `S_0` and `S_1`: the quadratic-form
//! decomposition of `S_0`, the determinant recursion for the leading minors
//! of `S_1`, its closed-form solution, and eigenvalue checks.
//!
//! The helper sequences `f_i`, `g_i`, `x_i`, `y_i` here are local to the
//! determinant argument and unrelated to trajectories or gradients.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::certificate_lambda;
use crate::error::{Error, Result};
use crate::pep::build_gm_dual_matrices;
use crate::sdp::min_eigenvalue_unchecked;

/// Tolerance for the algebraic identities, relative to the size of the terms involved.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Relative tolerance for recursion / closed form / direct determinant agreement.
pub const DETERMINANT_TOL: f64 = 1e-9;
/// Tolerance for the `S_0` quadratic-form decomposition.
pub const QUADRATIC_FORM_TOL: f64 = 1e-12;

/// Diagonal `d_0..d_N` and border `a_1..a_N` of the bordered matrices `M_k`
/// whose `k`-th member is the leading `(k+1) x (k+1)` minor of `S_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorSequenceSpec {
    pub n: usize,
    /// `d[i] = d_i` for `i = 0..=N`.
    pub d: Vec<f64>,
    /// `a[i] = a_i` for `i = 1..=N`; `a[0]` is unused and set to zero.
    pub a: Vec<f64>,
}

impl MinorSequenceSpec {
    /// The choice matching `S_1` under `lambda_i = i / (2N + 1 - i)`.
    pub fn certificate(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidStepCount(0));
        }
        let nf = n as f64;
        let mut d = Vec::with_capacity(n + 1);
        let mut a = vec![0.0];
        for i in 0..n {
            let i = i as f64;
            d.push(2.0 * (i + 1.0) / (2.0 * nf - i));
        }
        d.push(1.0);
        for i in 1..n {
            let i = i as f64;
            a.push((i + 1.0) / (2.0 * nf - i) - i / (2.0 * nf + 1.0 - i));
        }
        a.push(1.0 / (nf + 1.0));
        Ok(Self { n, d, a })
    }

    /// `M_k` assembled explicitly.
    pub fn minor_matrix(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(k + 1, k + 1, |r, c| {
            if r == c {
                self.d[r]
            } else {
                self.a[r.max(c)]
            }
        })
    }

    /// `alpha_k` from its definition in terms of `a` and `d`.
    pub fn alpha(&self, k: usize) -> f64 {
        let (ak, ap, dp) = (self.a[k], self.a[k - 1], self.d[k - 1]);
        self.d[k] - 2.0 * ak * ak / ap + ak * ak * dp / (ap * ap)
    }

    /// `beta_k` from its definition in terms of `a` and `d`.
    pub fn beta(&self, k: usize) -> f64 {
        let (ak, ap, dp) = (self.a[k], self.a[k - 1], self.d[k - 1]);
        ak * ak * (1.0 - dp / ap).powi(2)
    }

    /// Closed form of `alpha_k` for `2 <= k <= N`.
    pub fn alpha_closed(&self, k: usize) -> f64 {
        let (n, kf) = (self.n as f64, k as f64);
        if k < self.n {
            4.0 * ((2.0 * n + 1.0) * kf - kf * kf - 1.0) / (2.0 * n - kf).powi(2)
        } else {
            3.0 * (2.0 * n * n + 2.0 * n - 1.0) / (2.0 * n + 1.0).powi(2)
        }
    }

    /// Closed form of `beta_k` for `2 <= k <= N`.
    pub fn beta_closed(&self, k: usize) -> f64 {
        let (n, kf) = (self.n as f64, k as f64);
        if k < self.n {
            (4.0 * kf * n - 2.0 * n - 2.0 * kf * kf + 4.0 * kf - 1.0).powi(2)
                / ((2.0 * n - kf).powi(2) * (2.0 * n - kf + 1.0).powi(2))
        } else {
            (2.0 * n * n + 2.0 * n - 1.0).powi(2) / ((n + 1.0).powi(2) * (2.0 * n + 1.0).powi(2))
        }
    }

    pub fn f(&self, i: usize) -> f64 {
        let n = self.n as f64;
        (2.0 * n + 1.0).powi(2) / (2.0 * n - i as f64).powi(2)
    }

    pub fn g(&self, i: usize) -> f64 {
        2.0 * self.n as f64 - 2.0 * i as f64 - 1.0
    }

    /// `2N + 4Ni - 2i^2 + 1`, the positive factor shared by `x_i` and `y_i`.
    pub fn core(&self, i: usize) -> f64 {
        let (n, i) = (self.n as f64, i as f64);
        2.0 * n + 4.0 * n * i - 2.0 * i * i + 1.0
    }

    pub fn x(&self, i: usize) -> f64 {
        1.0 / self.core(i)
    }

    pub fn y(&self, i: usize) -> f64 {
        self.core(i) / (2.0 * self.n as f64 + 1.0 - i as f64).powi(2)
    }
}

/// `det M_0..det M_N` from the three-term recursion.
pub fn det_recursion_all(spec: &MinorSequenceSpec) -> Result<Vec<f64>> {
    let n = spec.n;
    let mut dets = vec![spec.d[0]];
    if n >= 1 {
        dets.push(spec.d[0] * spec.d[1] - spec.a[1] * spec.a[1]);
    }
    for k in 2..=n {
        if spec.a[k - 1] == 0.0 {
            return Err(Error::Validation(format!(
                "a_{} = 0 makes the recursion undefined",
                k - 1
            )));
        }
        dets.push(spec.alpha(k) * dets[k - 1] - spec.beta(k) * dets[k - 2]);
    }
    Ok(dets)
}

/// `det M_k` from the recursion.
pub fn det_recursion(spec: &MinorSequenceSpec, k: usize) -> Result<f64> {
    if k > spec.n {
        return Err(Error::OutOfRange(format!(
            "minor index {k} exceeds N = {}",
            spec.n
        )));
    }
    let mut dets = det_recursion_all(spec)?;
    dets.truncate(k + 1);
    Ok(dets[k])
}

/// `det M_k` from the closed-form solution of the recursion.
pub fn closed_form_det(n: usize, k: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidStepCount(0));
    }
    if k > n {
        return Err(Error::OutOfRange(format!(
            "minor index {k} exceeds N = {n}"
        )));
    }
    let spec = MinorSequenceSpec::certificate(n)?;
    let nf = n as f64;
    if k < n {
        let sum: f64 = (0..=k).map(|i| spec.g(k) * spec.x(i)).sum();
        let prod: f64 = (0..=k).map(|i| spec.y(i)).product();
        Ok(spec.f(k) * (1.0 + sum) * prod)
    } else {
        let prod: f64 = (0..n).map(|i| spec.y(i)).product();
        Ok((2.0 * nf + 1.0).powi(2) / (nf + 1.0).powi(2) * prod)
    }
}

/// Determinant of the leading `(k+1) x (k+1)` block of `S_1`, by LU factorization.
pub fn direct_minor_det(n: usize, k: usize) -> Result<f64> {
    if k > n {
        return Err(Error::OutOfRange(format!(
            "minor index {k} exceeds N = {n}"
        )));
    }
    let (_, s1, _) = build_gm_dual_matrices(&certificate_lambda(n))?;
    Ok(s1
        .view((0, 0), (k + 1, k + 1))
        .clone_owned()
        .lu()
        .determinant())
}

/// Closed-form value of `det M_1` in the two-or-more-step case.
pub fn det_m1_formula(n: usize) -> f64 {
    let n = n as f64;
    (28.0 * n * n - 20.0 * n - 1.0) / (4.0 * n * n * (2.0 * n - 1.0).powi(2))
}

/// Right-hand side of the decomposition
/// `x^T S_0 x = sum lambda_{i+1}(x_{i+1}-x_i)^2 + lambda_1 x_0^2 + sum (lambda_{i+1}-lambda_i) x_i^2 + (1-lambda_N) x_N^2`.
pub fn s0_decomposition(lambda: &[f64], x: &DVector<f64>) -> f64 {
    let n = lambda.len();
    let mut v = lambda[0] * x[0] * x[0] + (1.0 - lambda[n - 1]) * x[n] * x[n];
    for i in 0..n {
        v += lambda[i] * (x[i + 1] - x[i]).powi(2);
    }
    for i in 1..n {
        v += (lambda[i] - lambda[i - 1]) * x[i] * x[i];
    }
    v
}

/// Largest `|x^T S_0 x - decomposition|` over `trials` random vectors.
pub fn s0_quadratic_identity(n: usize, trials: usize, seed: u64) -> Result<f64> {
    let lambda = certificate_lambda(n);
    let (s0, _, _) = build_gm_dual_matrices(&lambda)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let x = DVector::from_fn(n + 1, |_, _| rng.random_range(-1.0..1.0));
        let direct = x.dot(&(&s0 * &x));
        worst = worst.max((direct - s0_decomposition(&lambda, &x)).abs());
    }
    Ok(worst)
}

/// Step sizes at which the convex combination `(1-h) S_0 + h S_1` is checked.
pub const COMBINATION_STEPS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Smallest eigenvalue of `(1-h) S_0 + h S_1` under the certificate multipliers.
pub fn combination_min_eigenvalue(n: usize, h: f64) -> Result<f64> {
    let (s0, s1, _) = build_gm_dual_matrices(&certificate_lambda(n))?;
    Ok(min_eigenvalue_unchecked(&(s0 * (1.0 - h) + s1 * h)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdRow {
    pub n: usize,
    pub s0_min_eigenvalue: f64,
    pub s1_min_eigenvalue: f64,
    /// `(h, min eigenvalue)` for each step in [`COMBINATION_STEPS`].
    pub combinations: Vec<(f64, f64)>,
    pub pass: bool,
}

/// Eigenvalue checks of `S_0`, `S_1` and their convex combinations for `N = 1..=max_n`.
pub fn positive_definiteness_suite(max_n: usize) -> Result<Vec<PdRow>> {
    (1..=max_n)
        .map(|n| {
            let (s0, s1, _) = build_gm_dual_matrices(&certificate_lambda(n))?;
            let s0_min = min_eigenvalue_unchecked(&s0);
            let s1_min = min_eigenvalue_unchecked(&s1);
            let combinations: Vec<(f64, f64)> = COMBINATION_STEPS
                .iter()
                .map(|&h| (h, min_eigenvalue_unchecked(&(&s0 * (1.0 - h) + &s1 * h))))
                .collect();
            let pass = s0_min > 0.0 && s1_min > 0.0 && combinations.iter().all(|c| c.1 > 0.0);
            Ok(PdRow {
                n,
                s0_min_eigenvalue: s0_min,
                s1_min_eigenvalue: s1_min,
                combinations,
                pass,
            })
        })
        .collect()
}

/// One checked identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub identity: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub k: Option<usize>,
    pub residual: f64,
    pub pass: bool,
}

fn record(identity: &str, n: usize, k: Option<usize>, residual: f64, tol: f64) -> IdentityRecord {
    IdentityRecord {
        identity: identity.to_string(),
        n,
        k,
        residual,
        pass: residual.is_finite() && residual <= tol,
    }
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.abs().max(1.0)
}

/// The four coefficient identities that make the closed form satisfy the
/// recursion, plus the closed forms of `alpha_k` and `beta_k`, for `2 <= k <= N`.
pub fn recursion_identities(n: usize) -> Result<Vec<IdentityRecord>> {
    let spec = MinorSequenceSpec::certificate(n)?;
    let mut out = Vec::new();
    let nf = n as f64;
    for k in 2..=n {
        let (alpha, beta) = (spec.alpha(k), spec.beta(k));
        out.push(record(
            "alpha-closed-form",
            n,
            Some(k),
            rel(alpha, spec.alpha_closed(k), alpha),
            IDENTITY_TOL,
        ));
        out.push(record(
            "beta-closed-form",
            n,
            Some(k),
            rel(beta, spec.beta_closed(k), beta),
            IDENTITY_TOL,
        ));
        let t1 = alpha * spec.f(k - 1) * (1.0 + spec.g(k - 1) * spec.x(k - 1));
        let t2 = beta / spec.y(k - 1) * spec.f(k - 2);
        let u1 = alpha * spec.f(k - 1) * spec.g(k - 1);
        let u2 = beta / spec.y(k - 1) * spec.f(k - 2) * spec.g(k - 2);
        let scale1 = t1.abs().max(t2.abs());
        let scale2 = u1.abs().max(u2.abs());
        if k < n {
            let rhs1 =
                spec.f(k) * spec.y(k) * (1.0 + spec.g(k) * spec.x(k - 1) + spec.g(k) * spec.x(k));
            let rhs2 = spec.f(k) * spec.g(k) * spec.y(k);
            out.push(record(
                "recursion-constant-term",
                n,
                Some(k),
                rel(t1 - t2, rhs1, scale1),
                IDENTITY_TOL,
            ));
            out.push(record(
                "recursion-sum-term",
                n,
                Some(k),
                rel(u1 - u2, rhs2, scale2),
                IDENTITY_TOL,
            ));
        } else {
            let rhs1 = (2.0 * nf + 1.0).powi(2) / (nf + 1.0).powi(2);
            out.push(record(
                "final-constant-term",
                n,
                Some(k),
                rel(t1 - t2, rhs1, scale1),
                IDENTITY_TOL,
            ));
            out.push(record(
                "final-sum-term",
                n,
                Some(k),
                rel(u1 - u2, 0.0, scale2),
                IDENTITY_TOL,
            ));
        }
    }
    Ok(out)
}

/// Recursion, closed form and direct determinant agreement for every `k <= N`,
/// plus positivity of each closed-form factor.
pub fn determinant_agreement(n: usize) -> Result<Vec<IdentityRecord>> {
    let spec = MinorSequenceSpec::certificate(n)?;
    let rec = det_recursion_all(&spec)?;
    let mut out = Vec::new();
    for (k, &r) in rec.iter().enumerate() {
        let closed = closed_form_det(n, k)?;
        let direct = direct_minor_det(n, k)?;
        let scale = closed.abs().max(f64::MIN_POSITIVE);
        out.push(record(
            "recursion-vs-closed-form",
            n,
            Some(k),
            (r - closed).abs() / scale,
            DETERMINANT_TOL,
        ));
        out.push(record(
            "direct-vs-closed-form",
            n,
            Some(k),
            (direct - closed).abs() / scale,
            DETERMINANT_TOL,
        ));
    }
    out.push(record(
        "det-m0-equals-inverse-n",
        n,
        Some(0),
        rel(rec[0], 1.0 / n as f64, 1.0),
        IDENTITY_TOL,
    ));
    if n >= 2 {
        out.push(record(
            "det-m1-formula",
            n,
            Some(1),
            rel(rec[1], det_m1_formula(n), rec[1]),
            IDENTITY_TOL,
        ));
    }
    let min_core = (0..n).map(|i| spec.core(i)).fold(f64::INFINITY, f64::min);
    // Residual is the amount by which the smallest factor fails to be positive.
    out.push(record(
        "closed-form-factors-positive",
        n,
        None,
        (-min_core).max(0.0),
        0.0,
    ));
    Ok(out)
}

/// Every determinant identity for `N = 1..=max_n`, plus the `S_0` decomposition.
pub fn verification_report(max_n: usize, seed: u64) -> Result<Vec<IdentityRecord>> {
    let mut out = Vec::new();
    for n in 1..=max_n {
        out.extend(determinant_agreement(n)?);
        out.extend(recursion_identities(n)?);
        out.push(record(
            "s0-quadratic-form",
            n,
            None,
            s0_quadratic_identity(n, 100, seed.wrapping_add(n as u64))?,
            QUADRATIC_FORM_TOL,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_cases() {
        let spec = MinorSequenceSpec::certificate(2).unwrap();
        assert!((det_recursion(&spec, 0).unwrap() - 0.5).abs() < 1e-15);
        let spec = MinorSequenceSpec::certificate(1).unwrap();
        assert!((det_recursion(&spec, 1).unwrap() - 0.75).abs() < 1e-15);
        assert!((closed_form_det(1, 1).unwrap() - 0.75).abs() < 1e-15);
        assert!((closed_form_det(1, 0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn minor_matrix_is_leading_block_of_s1() {
        let n = 6;
        let spec = MinorSequenceSpec::certificate(n).unwrap();
        let (_, s1, _) = build_gm_dual_matrices(&certificate_lambda(n)).unwrap();
        for k in 0..=n {
            let diff = spec.minor_matrix(k) - s1.view((0, 0), (k + 1, k + 1));
            assert!(diff.amax() < 1e-15, "k = {k}");
        }
    }

    #[test]
    fn decomposition_probes() {
        let lambda = certificate_lambda(3);
        assert_eq!(s0_decomposition(&lambda, &DVector::zeros(4)), 0.0);
        let mut e = DVector::zeros(4);
        e[3] = 1.0;
        assert!((s0_decomposition(&lambda, &e) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_minor() {
        let spec = MinorSequenceSpec::certificate(3).unwrap();
        assert!(det_recursion(&spec, 4).is_err());
        assert!(closed_form_det(3, 4).is_err());
    }
}
