//! Function oracles and trajectory simulation for schedules of the class.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pep::PepMatrices;
use crate::schedule::{fgm_schedule, FgmTSequence, FgmVariant, StepSchedule};

/// Dimension used by the worst-case oracles unless another one is requested.
pub const DEFAULT_DIM: usize = 4;

type EvalFn = dyn Fn(&DVector<f64>) -> (f64, DVector<f64>) + Send + Sync;

/// A convex function with `L`-Lipschitz gradient, given by a value/gradient map.
#[derive(Clone)]
pub struct FunctionOracle {
    name: String,
    dim: usize,
    lipschitz: f64,
    eval: Arc<EvalFn>,
    minimizer: Option<DVector<f64>>,
    optimal_value: Option<f64>,
    scale: f64,
}

impl fmt::Debug for FunctionOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionOracle")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .field("optimal_value", &self.optimal_value)
            .finish_non_exhaustive()
    }
}

impl FunctionOracle {
    pub fn new<F>(name: impl Into<String>, dim: usize, lipschitz: f64, eval: F) -> Self
    where
        F: Fn(&DVector<f64>) -> (f64, DVector<f64>) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            lipschitz,
            eval: Arc::new(eval),
            minimizer: None,
            optimal_value: None,
            scale: 1.0,
        }
    }

    /// Attaches a known minimizer and optimal value.
    pub fn with_minimizer(mut self, x: DVector<f64>, value: f64) -> Self {
        self.minimizer = Some(x);
        self.optimal_value = Some(value);
        self
    }

    /// Typical length scale of interesting points, used when sampling.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn minimizer(&self) -> Option<&DVector<f64>> {
        self.minimizer.as_ref()
    }

    pub fn optimal_value(&self) -> Option<f64> {
        self.optimal_value
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Value and gradient at `x`.
    pub fn eval(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.eval)(x)
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.eval(x).0
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.eval(x).1
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{name} must be positive and finite (got {v})"
        )))
    }
}

/// First canonical basis vector, the direction along which worst cases are built.
pub fn nu(dim: usize) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    v[0] = 1.0;
    v
}

/// The worst-case function for `n` gradient steps of length `h`: quadratic
/// `(L/2)|x|^2` inside radius `R/(2nh+1)`, affine in `|x|` outside, scaled to
/// Lipschitz constant `L` and initial distance `R`.
pub fn phi1_oracle(n: usize, h: f64, l: f64, r: f64) -> Result<FunctionOracle> {
    phi1_oracle_with_dim(n, h, l, r, DEFAULT_DIM)
}

pub fn phi1_oracle_with_dim(
    n: usize,
    h: f64,
    l: f64,
    r: f64,
    dim: usize,
) -> Result<FunctionOracle> {
    if n == 0 {
        return Err(Error::InvalidStepCount(0));
    }
    positive("h", h)?;
    positive("L", l)?;
    positive("R", r)?;
    if dim == 0 {
        return Err(Error::Validation("dimension must be at least 1".into()));
    }
    let rho = 1.0 / (2.0 * n as f64 * h + 1.0);
    let radius = rho * r;
    let oracle = FunctionOracle::new(
        format!("phi1(n={n}, h={h})"),
        dim,
        l,
        move |x: &DVector<f64>| {
            let norm = x.norm();
            if norm >= radius {
                (
                    l * r * (rho * norm - 0.5 * rho * radius),
                    x * (l * radius / norm),
                )
            } else {
                (0.5 * l * norm * norm, x * l)
            }
        },
    );
    Ok(oracle
        .with_minimizer(DVector::zeros(dim), 0.0)
        .with_scale(r))
}

/// `(L/2)|x|^2`.
pub fn phi2_oracle(l: f64, dim: usize) -> Result<FunctionOracle> {
    positive("L", l)?;
    if dim == 0 {
        return Err(Error::Validation("dimension must be at least 1".into()));
    }
    let oracle = FunctionOracle::new("phi2", dim, l, move |x: &DVector<f64>| {
        (0.5 * l * x.norm_squared(), x * l)
    });
    Ok(oracle.with_minimizer(DVector::zeros(dim), 0.0))
}

/// `½ x^T Q x` with `0 ⪯ Q ⪯ L I`, drawn deterministically from `seed`.
pub fn random_quadratic_oracle(dim: usize, l: f64, seed: u64) -> Result<FunctionOracle> {
    positive("L", l)?;
    if dim == 0 {
        return Err(Error::Validation("dimension must be at least 1".into()));
    }
    let q = random_quadratic_matrix(dim, l, seed);
    let oracle = FunctionOracle::new(
        format!("quadratic(seed={seed})"),
        dim,
        l,
        move |x: &DVector<f64>| {
            let g = &q * x;
            (0.5 * x.dot(&g), g)
        },
    );
    Ok(oracle.with_minimizer(DVector::zeros(dim), 0.0))
}

/// The matrix behind [`random_quadratic_oracle`].
pub fn random_quadratic_matrix(dim: usize, l: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let u = raw.qr().q();
    let eig = DVector::from_fn(dim, |_, _| l * rng.random::<f64>());
    let q = &u * DMatrix::from_diagonal(&eig) * u.transpose();
    (&q + q.transpose()) * 0.5
}

/// Points, values and gradients of one run of a schedule.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub points: Vec<DVector<f64>>,
    pub values: Vec<f64>,
    pub gradients: Vec<DVector<f64>>,
    pub schedule: StepSchedule,
    pub oracle: FunctionOracle,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.schedule.n()
    }

    pub fn last_point(&self) -> &DVector<f64> {
        self.points.last().expect("trajectory has x_0")
    }

    pub fn last_value(&self) -> f64 {
        *self.values.last().expect("trajectory has f(x_0)")
    }

    /// Largest relative mismatch between recorded points and the schedule's recurrence.
    pub fn reconstruction_residual(&self) -> f64 {
        let l = self.oracle.lipschitz();
        let mut worst = 0.0_f64;
        for i in 1..self.points.len() {
            let mut x = self.points[i - 1].clone();
            for (k, &h) in self.schedule.row(i).iter().enumerate() {
                x.axpy(-h / l, &self.gradients[k], 1.0);
            }
            let scale = 1.0 + self.points[i].norm();
            worst = worst.max((x - &self.points[i]).norm() / scale);
        }
        worst
    }

    /// `(f(x_N) - f*) / (L |x_0 - x_*|^2)`.
    pub fn attained_factor(&self) -> Result<f64> {
        let xs = self.oracle.minimizer().ok_or(Error::MissingMinimizer)?;
        let fs = self.oracle.optimal_value().ok_or(Error::MissingMinimizer)?;
        let r2 = (&self.points[0] - xs).norm_squared();
        Ok((self.last_value() - fs) / (self.oracle.lipschitz() * r2))
    }

    /// CSV with columns `step,value,gradient_norm,distance_to_opt` (last column empty without a minimizer).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "value", "gradient_norm", "distance_to_opt"])?;
        for (i, x) in self.points.iter().enumerate() {
            let dist = self
                .oracle
                .minimizer()
                .map(|m| format!("{:e}", (x - m).norm()))
                .unwrap_or_default();
            w.write_record([
                i.to_string(),
                format!("{:e}", self.values[i]),
                format!("{:e}", self.gradients[i].norm()),
                dist,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn checked_eval(
    oracle: &FunctionOracle,
    x: &DVector<f64>,
    step: usize,
) -> Result<(f64, DVector<f64>)> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            step,
            what: "point",
        });
    }
    let (f, g) = oracle.eval(x);
    if !f.is_finite() {
        return Err(Error::Diverged {
            step,
            what: "value",
        });
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            step,
            what: "gradient",
        });
    }
    Ok((f, g))
}

/// Runs `x_i = x_{i-1} - (1/L) sum_{k<i} h_k^(i) f'(x_k)` for `i = 1..N`.
pub fn run_fo(oracle: &FunctionOracle, s: &StepSchedule, x0: &DVector<f64>) -> Result<Trajectory> {
    if x0.len() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dim(),
            got: x0.len(),
        });
    }
    let n = s.n();
    let l = oracle.lipschitz();
    let mut points = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    let mut gradients: Vec<DVector<f64>> = Vec::with_capacity(n + 1);
    let (f0, g0) = checked_eval(oracle, x0, 0)?;
    points.push(x0.clone());
    values.push(f0);
    gradients.push(g0);
    for i in 1..=n {
        let mut x = points[i - 1].clone();
        for (k, &h) in s.row(i).iter().enumerate() {
            if h != 0.0 {
                x.axpy(-h / l, &gradients[k], 1.0);
            }
        }
        let (f, g) = checked_eval(oracle, &x, i)?;
        points.push(x);
        values.push(f);
        gradients.push(g);
    }
    Ok(Trajectory {
        points,
        values,
        gradients,
        schedule: s.clone(),
        oracle: oracle.clone(),
    })
}

/// Both sequences of the two-sequence accelerated method.
#[derive(Debug, Clone)]
pub struct FgmRun {
    /// `x_0..x_N`.
    pub x: Vec<DVector<f64>>,
    /// `y_1..y_N` (`y[0]` is `y_1 = x_0`).
    pub y: Vec<DVector<f64>>,
}

/// The accelerated method written with its momentum sequence.
pub fn run_fgm_native(oracle: &FunctionOracle, n: usize, x0: &DVector<f64>) -> Result<FgmRun> {
    if n == 0 {
        return Err(Error::InvalidStepCount(0));
    }
    if x0.len() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dim(),
            got: x0.len(),
        });
    }
    let l = oracle.lipschitz();
    let t = FgmTSequence::new(n + 1);
    let mut x = vec![x0.clone()];
    let mut y = vec![x0.clone()];
    for i in 1..=n {
        let (_, g) = checked_eval(oracle, &y[i - 1], i - 1)?;
        let xi = &y[i - 1] - g / l;
        if i < n {
            let momentum = (t.get(i) - 1.0) / t.get(i + 1);
            let yi = &xi + (&xi - &x[i - 1]) * momentum;
            y.push(yi);
        }
        x.push(xi);
    }
    Ok(FgmRun { x, y })
}

/// Largest relative distance between the native accelerated iterates and the
/// trajectory of the main accelerated schedule, whose points are `y_1..y_N, x_N`.
pub fn fgm_equivalence_residual(
    oracle: &FunctionOracle,
    n: usize,
    x0: &DVector<f64>,
) -> Result<f64> {
    let native = run_fgm_native(oracle, n, x0)?;
    let traj = run_fo(oracle, &fgm_schedule(n, FgmVariant::Main)?, x0)?;
    let expected = native.y.iter().chain(std::iter::once(&native.x[n]));
    Ok(traj
        .points
        .iter()
        .zip(expected)
        .map(|(a, b)| (a - b).norm() / b.norm().max(1.0))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub trials: usize,
    pub max_residual: f64,
    pub worst_trial: usize,
}

/// Runs [`fgm_equivalence_residual`] on `trials` seeded random quadratics with
/// dimension in `1..=max_dim`, step count in `1..=max_n` and a random start.
pub fn fgm_equivalence_suite(
    trials: usize,
    max_dim: usize,
    max_n: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = EquivalenceReport {
        trials,
        max_residual: 0.0,
        worst_trial: 0,
    };
    for trial in 0..trials {
        let dim = rng.random_range(1..=max_dim);
        let n = rng.random_range(1..=max_n);
        let l = rng.random_range(0.5..4.0);
        let oracle = random_quadratic_oracle(dim, l, rng.random())?;
        let x0 = DVector::<f64>::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let r = fgm_equivalence_residual(&oracle, n, &x0)?;
        if r > report.max_residual {
            report.max_residual = r;
            report.worst_trial = trial;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CocoercivityReport {
    pub pairs: usize,
    /// Largest `lhs - rhs` of the inequality over all ordered pairs (negative when strict everywhere).
    pub max_violation: f64,
    /// Number of ordered pairs violating by more than the tolerance.
    pub violations: usize,
}

/// Samples `num_pairs` point pairs and evaluates
/// `(1/2L)|f'(x) - f'(y)|^2 <= f(x) - f(y) - <f'(y), x - y>` in both orders.
pub fn cocoercivity_check(
    oracle: &FunctionOracle,
    num_pairs: usize,
    seed: u64,
    tol: f64,
) -> CocoercivityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = oracle.lipschitz();
    let center = oracle
        .minimizer()
        .cloned()
        .unwrap_or_else(|| DVector::zeros(oracle.dim()));
    let sample = |rng: &mut ChaCha8Rng| {
        let dir = DVector::<f64>::from_fn(oracle.dim(), |_, _| rng.random_range(-1.0..1.0));
        // Radii spread over two orders of magnitude so piecewise oracles are hit in every regime.
        let radius = oracle.scale() * 10f64.powf(rng.random_range(-1.5..0.5));
        let norm = dir.norm().max(1e-300);
        &center + dir * (radius / norm)
    };
    let mut max_violation = f64::NEG_INFINITY;
    let mut violations = 0;
    for _ in 0..num_pairs {
        let x = sample(&mut rng);
        let y = sample(&mut rng);
        let (fx, gx) = oracle.eval(&x);
        let (fy, gy) = oracle.eval(&y);
        let lhs = (&gx - &gy).norm_squared() / (2.0 * l);
        for (fa, fb, gb, a, b) in [(fx, fy, &gy, &x, &y), (fy, fx, &gx, &y, &x)] {
            let rhs = fa - fb - gb.dot(&(a - b));
            let v = lhs - rhs;
            max_violation = max_violation.max(v);
            if v > tol {
                violations += 1;
            }
        }
    }
    CocoercivityReport {
        pairs: num_pairs,
        max_violation,
        violations,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Largest violation per family, in the order A (i<j), B (j<i), C, D.
    pub family_violation: [f64; 4],
    pub max_violation: f64,
    /// Normalized values `delta_i = (f(x_i) - f*) / (L R^2)`.
    pub delta: Vec<f64>,
}

impl FeasibilityReport {
    pub fn delta_n(&self) -> f64 {
        *self.delta.last().expect("delta has N+1 entries")
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

/// Checks that a real trajectory, normalized by `L` and `R = |x_* - x_0|`,
/// satisfies every constraint family of the estimation problem.
pub fn primal_feasibility_check(traj: &Trajectory) -> Result<FeasibilityReport> {
    let xs = traj.oracle.minimizer().ok_or(Error::MissingMinimizer)?;
    let fs = traj.oracle.optimal_value().ok_or(Error::MissingMinimizer)?;
    let l = traj.oracle.lipschitz();
    let diff = xs - &traj.points[0];
    let r = diff.norm();
    if r <= 0.0 {
        return Err(Error::Validation("x_0 coincides with the minimizer".into()));
    }
    let nu = diff / r;
    let n = traj.n();
    let g = DMatrix::from_fn(n + 1, traj.oracle.dim(), |i, c| {
        traj.gradients[i][c] / (l * r)
    });
    let k = &g * g.transpose();
    let gnu = &g * &nu;
    let delta: Vec<f64> = traj.values.iter().map(|f| (f - fs) / (l * r * r)).collect();
    let m = PepMatrices::new(&traj.schedule);

    // trace(G^T M G) for M = ½(u_i - u_j)(u_i - u_j)^T + s ½(u_j w^T + w u_j^T) is ½|g_i - g_j|^2 + s <g_j, G^T w>.
    let half_dist = |i: usize, j: usize| 0.5 * (k[(i, i)] - 2.0 * k[(i, j)] + k[(j, j)]);
    let cross = |j: usize, w: &DVector<f64>| -> f64 { (0..=n).map(|c| k[(j, c)] * w[c]).sum() };
    let mut fam = [f64::NEG_INFINITY; 4];
    for j in 0..=n {
        for i in 0..=n {
            if i < j {
                let w = m.cumulative(j) - m.cumulative(i);
                let lhs = half_dist(i, j) + cross(j, &w);
                fam[0] = fam[0].max(lhs - (delta[i] - delta[j]));
            } else if j < i {
                let w = m.cumulative(i) - m.cumulative(j);
                let lhs = half_dist(i, j) - cross(j, &w);
                fam[1] = fam[1].max(lhs - (delta[i] - delta[j]));
            }
        }
    }
    for i in 0..=n {
        fam[2] = fam[2].max(0.5 * k[(i, i)] - delta[i]);
        let lhs = 0.5 * k[(i, i)] + cross(i, m.cumulative(i)) + gnu[i];
        fam[3] = fam[3].max(lhs + delta[i]);
    }
    let max_violation = fam.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(FeasibilityReport {
        family_violation: fam,
        max_violation,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::gm_schedule;

    #[test]
    fn phi1_values() {
        let o = phi1_oracle(3, 0.5, 1.0, 1.0).unwrap();
        assert_eq!(o.value(&DVector::zeros(4)), 0.0);
        let (f, g) = o.eval(&nu(4));
        let rho = 1.0 / 4.0;
        assert!((f - (4.0 * 1.5 + 1.0) / (2.0 * 16.0)).abs() < 1e-15);
        assert!((&g - nu(4) * rho).norm() < 1e-15);
    }

    #[test]
    fn phi2_single_step_is_exact() {
        let o = phi2_oracle(1.0, 4).unwrap();
        let t = run_fo(&o, &gm_schedule(1, 1.0).unwrap(), &nu(4)).unwrap();
        assert_eq!(t.last_value(), 0.0);
        let t = run_fo(&o, &gm_schedule(2, 0.5).unwrap(), &nu(4)).unwrap();
        assert_eq!(t.values, vec![0.5, 0.125, 0.03125]);
    }

    #[test]
    fn divergence_is_reported() {
        let o = FunctionOracle::new("blowup", 1, 1.0, |x: &DVector<f64>| {
            let v = if x[0] > 1.5 { f64::NAN } else { x[0] };
            (v, DVector::from_element(1, -1.0))
        });
        let s = gm_schedule(3, 1.0).unwrap();
        match run_fo(&o, &s, &DVector::zeros(1)) {
            Err(Error::Diverged {
                step: 2,
                what: "value",
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_schedule_stays_put_and_is_feasible() {
        let o = phi1_oracle(2, 1.0, 1.0, 1.0).unwrap();
        let t = run_fo(&o, &StepSchedule::zeros(3).unwrap(), &nu(4)).unwrap();
        assert!(t.points.iter().all(|p| p == &nu(4)));
        let rep = primal_feasibility_check(&t).unwrap();
        assert!(rep.is_feasible(1e-12), "{rep:?}");
    }

    #[test]
    fn fgm_first_step_is_gradient_step() {
        let o = random_quadratic_oracle(3, 2.0, 7).unwrap();
        let x0 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let run = run_fgm_native(&o, 1, &x0).unwrap();
        assert_eq!(run.y, vec![x0.clone()]);
        assert_eq!(run.x[1], &x0 - o.gradient(&x0) / 2.0);
    }

    #[test]
    fn fgm_equivalence_small() {
        let o = random_quadratic_oracle(3, 1.5, 11).unwrap();
        let x0 = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        for n in 1..6 {
            assert!(fgm_equivalence_residual(&o, n, &x0).unwrap() < 1e-12);
        }
    }

    #[test]
    fn corrupted_oracle_violates_cocoercivity() {
        let q = random_quadratic_matrix(3, 1.0, 3);
        let bad = FunctionOracle::new("bad", 3, 1.0, move |x: &DVector<f64>| {
            let g = &q * x;
            (0.5 * x.dot(&g), g * 1.5)
        });
        assert!(cocoercivity_check(&bad, 50, 1, 1e-12).violations > 0);
    }

    #[test]
    fn trajectory_csv() {
        let o = phi2_oracle(1.0, 2).unwrap();
        let t = run_fo(&o, &gm_schedule(2, 0.5).unwrap(), &nu(2)).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,value,gradient_norm,distance_to_opt");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("2,3.125e-2,"));
    }
}
