//! Infeasible-start primal-dual interior-point method (HKM direction with
//! Mehrotra predictor-corrector) for the problem
//!
//! ```text
//! minimize   c^T y
//! subject to S = F_0 + sum_j y_j F_j ⪰ 0
//! ```
//!
//! and its conic dual
//!
//! ```text
//! maximize   -F_0 • Z
//! subject to F_j • Z = c_j,  Z ⪰ 0.
//! ```
//!
//! Diagonal blocks are handled as one nonnegative-orthant cone.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::problem::{BlockKind, SdpProblem};
use super::{IterationRecord, Residuals, SdpConfig, SdpSolution, SolveStatus};
use crate::error::Result;

/// Ratio below which a normalized Farkas direction is accepted as a certificate.
const INFEASIBILITY_TOL: f64 = 1e-8;
/// Iterate norm at which the run is declared divergent.
const DIVERGENCE_NORM: f64 = 1e13;

struct VarData {
    /// `(block, row, col, value)` with `row <= col`, duplicates merged.
    psd: Vec<(usize, usize, usize, f64)>,
    lp: Vec<(usize, f64)>,
}

/// Problem after folding sign constraints, merging diagonal blocks and
/// eliminating equalities: `y = y0 + basis * z`.
struct Compiled {
    c: DVector<f64>,
    objective_offset: f64,
    psd_dims: Vec<usize>,
    lp_dim: usize,
    c0_psd: Vec<DMatrix<f64>>,
    c0_lp: DVector<f64>,
    vars: Vec<VarData>,
    /// Per PSD block: variables with entries there and the index range in `vars[j].psd`.
    block_users: Vec<Vec<usize>>,
    /// Per LP index: `(var, value)`.
    lp_users: Vec<Vec<(usize, f64)>>,
    y0: DVector<f64>,
    basis: Option<DMatrix<f64>>,
    num_original: usize,
}

enum Compile {
    Ready(Box<Compiled>),
    Trivial(SolveStatus, f64),
}

pub(super) fn solve(problem: &SdpProblem, cfg: &SdpConfig) -> Result<SdpSolution> {
    problem.validate()?;
    match compile(problem) {
        Compile::Trivial(status, cert) => Ok(SdpSolution {
            vars: vec![0.0; problem.num_vars],
            objective_value: if status == SolveStatus::Unbounded {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            },
            dual_objective: f64::NAN,
            status,
            residuals: Residuals::default(),
            iterations: 0,
            history: Vec::new(),
            dual_blocks: Vec::new(),
            certificate_residual: Some(cert),
        }),
        Compile::Ready(c) => Ok(Ipm::new(&c, cfg).run(problem)),
    }
}

fn compile(p: &SdpProblem) -> Compile {
    // Map every diagonal block, plus sign constraints, into one LP vector.
    let mut psd_index = vec![usize::MAX; p.blocks.len()];
    let mut lp_offset = vec![usize::MAX; p.blocks.len()];
    let mut psd_dims = Vec::new();
    let mut lp_dim = 0;
    for (b, &(kind, dim)) in p.blocks.iter().enumerate() {
        match kind {
            BlockKind::Psd => {
                psd_index[b] = psd_dims.len();
                psd_dims.push(dim);
            }
            BlockKind::Diagonal => {
                lp_offset[b] = lp_dim;
                lp_dim += dim;
            }
        }
    }
    let sign_offset = lp_dim;
    lp_dim += p.sign_constraints.len();

    let m0 = p.num_vars;
    // Dense per-variable blocks are only materialised when equalities force a change of basis.
    let mut c0_psd: Vec<DMatrix<f64>> = psd_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
    let mut c0_lp = DVector::zeros(lp_dim);
    for e in &p.constant {
        if psd_index[e.block] != usize::MAX {
            let m = &mut c0_psd[psd_index[e.block]];
            m[(e.row, e.col)] += e.value;
            if e.row != e.col {
                m[(e.col, e.row)] += e.value;
            }
        } else {
            c0_lp[lp_offset[e.block] + e.row] += e.value;
        }
    }
    let mut raw_vars: Vec<VarData> = (0..m0)
        .map(|j| {
            let mut psd = Vec::new();
            let mut lp = Vec::new();
            for e in &p.coefficients[j] {
                if psd_index[e.block] != usize::MAX {
                    psd.push((psd_index[e.block], e.row, e.col, e.value));
                } else {
                    lp.push((lp_offset[e.block] + e.row, e.value));
                }
            }
            VarData { psd, lp }
        })
        .collect();
    for (s, &v) in p.sign_constraints.iter().enumerate() {
        raw_vars[v].lp.push((sign_offset + s, 1.0));
    }
    for v in raw_vars.iter_mut() {
        merge(v);
    }
    let c_raw = DVector::from_column_slice(&p.objective);

    let (c, objective_offset, vars, y0, basis) = if p.equality_constraints.is_empty() {
        (c_raw, 0.0, raw_vars, DVector::zeros(m0), None)
    } else {
        let ne = p.equality_constraints.len();
        let rows = ne.max(m0);
        let mut e = DMatrix::<f64>::zeros(rows, m0);
        let mut rhs = DVector::<f64>::zeros(rows);
        for (i, eq) in p.equality_constraints.iter().enumerate() {
            for &(v, a) in &eq.coeffs {
                e[(i, v)] += a;
            }
            rhs[i] = eq.rhs;
        }
        let svd = e.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let eps = 1e-10 * smax.max(1.0);
        let y0 = match svd.solve(&rhs, eps) {
            Ok(y) => y,
            Err(_) => return Compile::Trivial(SolveStatus::Infeasible, f64::NAN),
        };
        let resid = (&e * &y0 - &rhs).norm();
        if resid > 1e-9 * (1.0 + rhs.norm()) {
            return Compile::Trivial(SolveStatus::Infeasible, resid);
        }
        let v_t = svd.v_t.expect("requested");
        let null: Vec<usize> = (0..m0).filter(|&i| svd.singular_values[i] <= eps).collect();
        let mut basis = DMatrix::zeros(m0, null.len());
        for (col, &i) in null.iter().enumerate() {
            basis.set_column(col, &v_t.row(i).transpose());
        }
        // Shift the constant term by y0 and recombine coefficients.
        for (j, v) in raw_vars.iter().enumerate() {
            if y0[j] != 0.0 {
                add_var_into(v, y0[j], &mut c0_psd, &mut c0_lp);
            }
        }
        let mut vars = Vec::with_capacity(null.len());
        for col in 0..null.len() {
            let mut psd: Vec<DMatrix<f64>> =
                psd_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
            let mut lp = DVector::zeros(lp_dim);
            for (j, v) in raw_vars.iter().enumerate() {
                let w = basis[(j, col)];
                if w.abs() > 1e-15 {
                    add_var_into(v, w, &mut psd, &mut lp);
                }
            }
            vars.push(sparsify(&psd, &lp));
        }
        let c = basis.transpose() * &c_raw;
        let offset = c_raw.dot(&y0);
        (c, offset, vars, y0, Some(basis))
    };

    // Variables that never touch the LMI are either free (no cost) or make the problem unbounded.
    let mut keep = Vec::new();
    for (j, v) in vars.iter().enumerate() {
        if v.psd.is_empty() && v.lp.is_empty() {
            if c[j].abs() > 0.0 {
                return Compile::Trivial(SolveStatus::Unbounded, 0.0);
            }
        } else {
            keep.push(j);
        }
    }
    let (c, vars, y0, basis) = if keep.len() == vars.len() {
        (c, vars, y0, basis)
    } else {
        let c_kept = DVector::from_iterator(keep.len(), keep.iter().map(|&j| c[j]));
        let m_full = vars.len();
        let mut vars_opt: Vec<Option<VarData>> = vars.into_iter().map(Some).collect();
        let kept: Vec<VarData> = keep
            .iter()
            .map(|&j| vars_opt[j].take().expect("kept once"))
            .collect();
        let basis_full = basis.unwrap_or_else(|| DMatrix::identity(m_full, m_full));
        let mut b = DMatrix::zeros(basis_full.nrows(), keep.len());
        for (col, &j) in keep.iter().enumerate() {
            b.set_column(col, &basis_full.column(j));
        }
        (c_kept, kept, y0, Some(b))
    };

    let mut block_users = vec![Vec::new(); psd_dims.len()];
    let mut lp_users = vec![Vec::new(); lp_dim];
    for (j, v) in vars.iter().enumerate() {
        let mut seen: Vec<usize> = v.psd.iter().map(|e| e.0).collect();
        seen.dedup();
        for b in seen {
            if block_users[b].last() != Some(&j) {
                block_users[b].push(j);
            }
        }
        for &(l, a) in &v.lp {
            lp_users[l].push((j, a));
        }
    }

    Compile::Ready(Box::new(Compiled {
        c,
        objective_offset,
        psd_dims,
        lp_dim,
        c0_psd,
        c0_lp,
        vars,
        block_users,
        lp_users,
        y0,
        basis,
        num_original: m0,
    }))
}

fn merge(v: &mut VarData) {
    v.psd.sort_by_key(|a| (a.0, a.1, a.2));
    let mut out: Vec<(usize, usize, usize, f64)> = Vec::with_capacity(v.psd.len());
    for e in v.psd.drain(..) {
        match out.last_mut() {
            Some(last) if (last.0, last.1, last.2) == (e.0, e.1, e.2) => last.3 += e.3,
            _ => out.push(e),
        }
    }
    out.retain(|e| e.3 != 0.0);
    v.psd = out;
    v.lp.sort_by_key(|e| e.0);
    let mut lp: Vec<(usize, f64)> = Vec::with_capacity(v.lp.len());
    for e in v.lp.drain(..) {
        match lp.last_mut() {
            Some(last) if last.0 == e.0 => last.1 += e.1,
            _ => lp.push(e),
        }
    }
    lp.retain(|e| e.1 != 0.0);
    v.lp = lp;
}

fn add_var_into(v: &VarData, w: f64, psd: &mut [DMatrix<f64>], lp: &mut DVector<f64>) {
    for &(b, r, c, a) in &v.psd {
        psd[b][(r, c)] += w * a;
        if r != c {
            psd[b][(c, r)] += w * a;
        }
    }
    for &(l, a) in &v.lp {
        lp[l] += w * a;
    }
}

fn sparsify(psd: &[DMatrix<f64>], lp: &DVector<f64>) -> VarData {
    let scale = psd.iter().map(|m| m.amax()).fold(lp.amax(), f64::max);
    let cut = 1e-14 * scale;
    let mut out = VarData {
        psd: Vec::new(),
        lp: Vec::new(),
    };
    for (b, m) in psd.iter().enumerate() {
        let n = m.nrows();
        for r in 0..n {
            for c in r..n {
                if m[(r, c)].abs() > cut {
                    out.psd.push((b, r, c, m[(r, c)]));
                }
            }
        }
    }
    for (l, &a) in lp.iter().enumerate() {
        if a.abs() > cut {
            out.lp.push((l, a));
        }
    }
    out
}

/// Block-diagonal symmetric matrix: dense PSD blocks plus one diagonal part.
#[derive(Clone)]
struct BlockMat {
    psd: Vec<DMatrix<f64>>,
    lp: DVector<f64>,
}

impl BlockMat {
    fn dot(&self, other: &BlockMat) -> f64 {
        let mut s = self.lp.dot(&other.lp);
        for (a, b) in self.psd.iter().zip(&other.psd) {
            s += super::linalg::frob(a, b);
        }
        s
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn axpy(&mut self, alpha: f64, x: &BlockMat) {
        for (a, b) in self.psd.iter_mut().zip(&x.psd) {
            *a += b * alpha;
        }
        self.lp.axpy(alpha, &x.lp, 1.0);
    }

    fn sub(&self, other: &BlockMat) -> BlockMat {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    fn max_abs(&self) -> f64 {
        self.psd
            .iter()
            .map(|m| m.amax())
            .fold(self.lp.amax(), f64::max)
    }
}

struct Ipm<'a> {
    p: &'a Compiled,
    cfg: &'a SdpConfig,
    m: usize,
    nu: f64,
}

struct Newton {
    dy: DVector<f64>,
    ds: BlockMat,
    dz: BlockMat,
}

impl<'a> Ipm<'a> {
    fn new(p: &'a Compiled, cfg: &'a SdpConfig) -> Self {
        let nu = (p.psd_dims.iter().sum::<usize>() + p.lp_dim) as f64;
        Self {
            p,
            cfg,
            m: p.vars.len(),
            nu: nu.max(1.0),
        }
    }

    fn zeros(&self) -> BlockMat {
        BlockMat {
            psd: self
                .p
                .psd_dims
                .iter()
                .map(|&d| DMatrix::zeros(d, d))
                .collect(),
            lp: DVector::zeros(self.p.lp_dim),
        }
    }

    fn identity(&self, scale: f64) -> BlockMat {
        BlockMat {
            psd: self
                .p
                .psd_dims
                .iter()
                .map(|&d| DMatrix::identity(d, d) * scale)
                .collect(),
            lp: DVector::from_element(self.p.lp_dim, scale),
        }
    }

    fn constant(&self) -> BlockMat {
        BlockMat {
            psd: self.p.c0_psd.clone(),
            lp: self.p.c0_lp.clone(),
        }
    }

    /// `sum_j y_j F_j`.
    fn adjoint(&self, y: &DVector<f64>) -> BlockMat {
        let mut out = self.zeros();
        for (j, v) in self.p.vars.iter().enumerate() {
            let w = y[j];
            if w == 0.0 {
                continue;
            }
            for &(b, r, c, a) in &v.psd {
                out.psd[b][(r, c)] += w * a;
                if r != c {
                    out.psd[b][(c, r)] += w * a;
                }
            }
            for &(l, a) in &v.lp {
                out.lp[l] += w * a;
            }
        }
        out
    }

    /// `(F_j • G)_j` for a possibly non-symmetric `G`.
    fn op(&self, g: &BlockMat) -> DVector<f64> {
        DVector::from_iterator(
            self.m,
            self.p.vars.iter().map(|v| {
                let mut s = 0.0;
                for &(b, r, c, a) in &v.psd {
                    let m = &g.psd[b];
                    s += if r == c {
                        a * m[(r, r)]
                    } else {
                        a * (m[(r, c)] + m[(c, r)])
                    };
                }
                for &(l, a) in &v.lp {
                    s += a * g.lp[l];
                }
                s
            }),
        )
    }

    fn initial_point(&self) -> (DVector<f64>, BlockMat, BlockMat) {
        let nu = self.nu;
        let f_norm = |v: &VarData| {
            let mut s = 0.0;
            for &(_, r, c, a) in &v.psd {
                s += if r == c { a * a } else { 2.0 * a * a };
            }
            s + v.lp.iter().map(|e| e.1 * e.1).sum::<f64>()
        };
        let mut zeta: f64 = 10.0_f64.max(nu.sqrt());
        let mut eta: f64 = 10.0_f64.max(nu.sqrt());
        let c0_norm = self.constant().norm();
        eta = eta.max(c0_norm);
        for (j, v) in self.p.vars.iter().enumerate() {
            let fn_ = f_norm(v).sqrt();
            zeta = zeta.max(nu * (1.0 + self.p.c[j].abs()) / (1.0 + fn_));
            eta = eta.max(fn_);
        }
        (
            DVector::zeros(self.m),
            self.identity(eta),
            self.identity(zeta),
        )
    }

    fn run(&self, problem: &SdpProblem) -> SdpSolution {
        let p = self.p;
        let tol = self.cfg.tolerance;
        let f0 = self.constant();
        let f0_norm = f0.norm();
        let c_norm = p.c.norm();
        let (mut y, mut s, mut z) = self.initial_point();
        let mut history = Vec::new();
        let mut status = SolveStatus::MaxIterations;
        let mut certificate_residual = None;
        let mut residuals;
        let mut iter = 0;
        let mut stalls = 0;

        loop {
            let aty = self.adjoint(&y);
            let mut rs = f0.clone();
            rs.axpy(1.0, &aty);
            rs.axpy(-1.0, &s);
            let az = self.op(&z);
            let rd = &p.c - &az;
            let cy = p.c.dot(&y);
            let f0z = f0.dot(&z);
            let sz = s.dot(&z);
            let mu = sz / self.nu;
            let pinf = rs.norm() / (1.0 + f0_norm);
            let dinf = rd.norm() / (1.0 + c_norm);
            let denom = 1.0 + cy.abs() + f0z.abs();
            let relgap = ((cy + f0z).abs() / denom).max(sz.max(0.0) / denom);
            residuals = Residuals {
                primal_infeasibility: pinf,
                dual_infeasibility: dinf,
                gap: (cy + f0z).abs(),
                relative_gap: relgap,
            };
            let record = IterationRecord {
                iteration: iter,
                primal_objective: cy + p.objective_offset,
                dual_objective: -f0z + p.objective_offset,
                gap: relgap,
                primal_res: pinf,
                dual_res: dinf,
                mu,
                step_primal: 0.0,
                step_dual: 0.0,
            };
            if self.cfg.verbose {
                log::debug!(
                    "iter {iter:3}: pobj {:+.9e} dobj {:+.9e} gap {relgap:.2e} pinf {pinf:.2e} dinf {dinf:.2e}",
                    record.primal_objective,
                    record.dual_objective
                );
            }
            history.push(record);

            if pinf < tol && dinf < tol && relgap < tol {
                status = SolveStatus::Optimal;
                break;
            }
            // Farkas certificate for an empty LMI: Z ⪰ 0, F_j • Z = 0, F_0 • Z < 0.
            if f0z < 0.0 {
                let ratio = az.norm() / (-f0z);
                if ratio < INFEASIBILITY_TOL * (1.0 + c_norm) || z.max_abs() > DIVERGENCE_NORM {
                    status = SolveStatus::Infeasible;
                    certificate_residual = Some(ratio);
                    break;
                }
            }
            // Improving ray: sum_j y_j F_j ⪰ 0 with c^T y < 0.
            if cy < 0.0 {
                let ratio = rs.sub(&f0).norm() / (-cy);
                if ratio < INFEASIBILITY_TOL * (1.0 + f0_norm) || y.amax() > DIVERGENCE_NORM {
                    status = SolveStatus::Unbounded;
                    certificate_residual = Some(ratio);
                    break;
                }
            }
            if iter >= self.cfg.max_iterations || stalls >= 5 {
                break;
            }
            iter += 1;

            let Some(sinv) = self.inverse(&s) else { break };
            let Some(chol) = self.schur(&z, &sinv) else {
                break;
            };

            // Predictor.
            let target_aff = {
                let mut t = z.clone();
                t.psd.iter_mut().for_each(|m| m.neg_mut());
                t.lp.neg_mut();
                t
            };
            let aff = self.direction(&chol, &z, &sinv, &rs, &rd, &target_aff);
            let ap_aff = self.max_step(&s, &aff.ds).min(1.0);
            let ad_aff = self.max_step(&z, &aff.dz).min(1.0);
            let mut s_aff = s.clone();
            s_aff.axpy(ap_aff, &aff.ds);
            let mut z_aff = z.clone();
            z_aff.axpy(ad_aff, &aff.dz);
            let mu_aff = s_aff.dot(&z_aff) / self.nu;
            let sigma = if mu > 0.0 {
                (mu_aff / mu).clamp(0.0, 1.0).powi(3)
            } else {
                0.0
            };

            // Corrector: T = sigma mu S^-1 - Z - sym(dZa dSa S^-1).
            let mut target = self.zeros();
            for (b, t) in target.psd.iter_mut().enumerate() {
                let corr = &aff.dz.psd[b] * &aff.ds.psd[b] * &sinv.psd[b];
                *t = &sinv.psd[b] * (sigma * mu) - &z.psd[b] - (&corr + corr.transpose()) * 0.5;
            }
            for l in 0..p.lp_dim {
                target.lp[l] =
                    sigma * mu * sinv.lp[l] - z.lp[l] - aff.dz.lp[l] * aff.ds.lp[l] * sinv.lp[l];
            }
            let dir = self.direction(&chol, &z, &sinv, &rs, &rd, &target);
            let ap_max = self.max_step(&s, &dir.ds);
            let ad_max = self.max_step(&z, &dir.dz);
            let gamma = 0.9 + 0.09 * ap_aff.min(ad_aff);
            let ap = (gamma * ap_max).min(1.0);
            let ad = (gamma * ad_max).min(1.0);
            if ap < 1e-10 && ad < 1e-10 {
                stalls += 1;
            } else {
                stalls = 0;
            }
            y.axpy(ap, &dir.dy, 1.0);
            s.axpy(ap, &dir.ds);
            z.axpy(ad, &dir.dz);
            if let Some(last) = history.last_mut() {
                last.step_primal = ap;
                last.step_dual = ad;
            }
        }

        let vars = self.recover(&y);
        let dual_objective = -f0.dot(&z) + p.objective_offset;
        let objective_value = problem.objective_value(&vars);
        SdpSolution {
            vars,
            objective_value,
            dual_objective,
            status,
            residuals,
            iterations: iter,
            history,
            dual_blocks: z.psd,
            certificate_residual,
        }
    }

    fn recover(&self, y: &DVector<f64>) -> Vec<f64> {
        let p = self.p;
        let full = match &p.basis {
            Some(b) => &p.y0 + b * y,
            None => y.clone(),
        };
        debug_assert_eq!(full.len(), p.num_original);
        full.iter().copied().collect()
    }

    fn inverse(&self, s: &BlockMat) -> Option<BlockMat> {
        let mut psd = Vec::with_capacity(s.psd.len());
        for m in &s.psd {
            let chol = Cholesky::new(super::linalg::symmetrized(m))?;
            let inv = chol.inverse();
            psd.push(super::linalg::symmetrized(&inv));
        }
        if s.lp.iter().any(|&v| v <= 0.0) {
            return None;
        }
        Some(BlockMat {
            psd,
            lp: s.lp.map(|v| 1.0 / v),
        })
    }

    /// Schur complement `M_ij = F_i • (Z F_j S^-1)`, Cholesky-factored.
    fn schur(&self, z: &BlockMat, sinv: &BlockMat) -> Option<Cholesky<f64, nalgebra::Dyn>> {
        let p = self.p;
        let m = self.m;
        let mut mat = DMatrix::<f64>::zeros(m, m);
        // Per-variable entries grouped by block, computed once per call.
        let mut by_block: Vec<Vec<Vec<(usize, usize, f64)>>> = vec![Vec::new(); p.psd_dims.len()];
        for (b, users) in p.block_users.iter().enumerate() {
            by_block[b] = users
                .iter()
                .map(|&j| {
                    p.vars[j]
                        .psd
                        .iter()
                        .filter(|e| e.0 == b)
                        .map(|e| (e.1, e.2, e.3))
                        .collect()
                })
                .collect();
        }
        for (b, users) in p.block_users.iter().enumerate() {
            let n = p.psd_dims[b];
            let zb = &z.psd[b];
            let sb = &sinv.psd[b];
            for (uj, &j) in users.iter().enumerate() {
                let ej = &by_block[b][uj];
                let w = if ej.len() * 2 > n {
                    let mut f = DMatrix::zeros(n, n);
                    for &(r, c, a) in ej {
                        f[(r, c)] += a;
                        if r != c {
                            f[(c, r)] += a;
                        }
                    }
                    zb * f * sb
                } else {
                    let mut w = DMatrix::zeros(n, n);
                    for &(r, c, a) in ej {
                        w.ger(a, &zb.column(r), &sb.column(c), 1.0);
                        if r != c {
                            w.ger(a, &zb.column(c), &sb.column(r), 1.0);
                        }
                    }
                    w
                };
                for (ui, &i) in users.iter().enumerate().take(uj + 1) {
                    let mut acc = 0.0;
                    for &(r, c, a) in &by_block[b][ui] {
                        acc += if r == c {
                            a * w[(r, r)]
                        } else {
                            a * (w[(r, c)] + w[(c, r)])
                        };
                    }
                    mat[(i, j)] += acc;
                    if i != j {
                        mat[(j, i)] += acc;
                    }
                }
            }
        }
        for (l, users) in p.lp_users.iter().enumerate() {
            let ratio = z.lp[l] * sinv.lp[l];
            for (a_idx, &(i, a)) in users.iter().enumerate() {
                for &(j, bv) in users.iter().take(a_idx + 1) {
                    let v = a * bv * ratio;
                    mat[(i, j)] += v;
                    if i != j {
                        mat[(j, i)] += v;
                    }
                }
            }
        }
        let sym = super::linalg::symmetrized(&mat);
        if let Some(ch) = Cholesky::new(sym.clone()) {
            return Some(ch);
        }
        let scale = sym.diagonal().amax().max(1e-300);
        let mut reg = 1e-14 * scale;
        for _ in 0..6 {
            let mut shifted = sym.clone();
            for k in 0..m {
                shifted[(k, k)] += reg;
            }
            if let Some(ch) = Cholesky::new(shifted) {
                return Some(ch);
            }
            reg *= 100.0;
        }
        None
    }

    /// Solves the Newton system for a given target `T` (the part of dZ not depending on dS).
    fn direction(
        &self,
        chol: &Cholesky<f64, nalgebra::Dyn>,
        z: &BlockMat,
        sinv: &BlockMat,
        rs: &BlockMat,
        rd: &DVector<f64>,
        target: &BlockMat,
    ) -> Newton {
        let p = self.p;
        // G = T - Z Rs S^-1
        let mut g = target.clone();
        for b in 0..p.psd_dims.len() {
            g.psd[b] -= &z.psd[b] * &rs.psd[b] * &sinv.psd[b];
        }
        for l in 0..p.lp_dim {
            g.lp[l] -= z.lp[l] * rs.lp[l] * sinv.lp[l];
        }
        let rhs = self.op(&g) - rd;
        let dy = chol.solve(&rhs);
        let mut ds = rs.clone();
        ds.axpy(1.0, &self.adjoint(&dy));
        let mut dz = target.clone();
        for b in 0..p.psd_dims.len() {
            let t = &z.psd[b] * &ds.psd[b] * &sinv.psd[b];
            dz.psd[b] -= (&t + t.transpose()) * 0.5;
            let sym = super::linalg::symmetrized(&dz.psd[b]);
            dz.psd[b] = sym;
        }
        for l in 0..p.lp_dim {
            dz.lp[l] -= z.lp[l] * ds.lp[l] * sinv.lp[l];
        }
        Newton { dy, ds, dz }
    }

    /// Largest `alpha` with `X + alpha dX ⪰ 0` (infinite when unrestricted).
    fn max_step(&self, x: &BlockMat, dx: &BlockMat) -> f64 {
        let mut alpha = f64::INFINITY;
        for (xb, db) in x.psd.iter().zip(&dx.psd) {
            let Some(chol) = Cholesky::new(super::linalg::symmetrized(xb)) else {
                return 0.0;
            };
            let l = chol.l();
            let Some(b) = l.solve_lower_triangular(db) else {
                return 0.0;
            };
            let Some(c) = l.solve_lower_triangular(&b.transpose()) else {
                return 0.0;
            };
            let lam = super::linalg::min_eigenvalue_unchecked(&c);
            if lam < 0.0 {
                alpha = alpha.min(-1.0 / lam);
            }
        }
        for (xv, dv) in x.lp.iter().zip(dx.lp.iter()) {
            if *dv < 0.0 {
                alpha = alpha.min(-xv / dv);
            }
        }
        alpha
    }
}
