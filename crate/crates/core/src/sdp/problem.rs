use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cone type of one diagonal block of the LMI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// Dense symmetric block constrained to be positive semidefinite.
    Psd,
    /// Diagonal block; each diagonal entry is constrained to be nonnegative.
    Diagonal,
}

/// One entry `(row, col)` of a symmetric block; the mirrored entry is implied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// A linear equality `sum_j a_j y_j = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEquality {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Minimize `c^T y` subject to `F_0 + sum_j y_j F_j ⪰ 0`, optional sign
/// constraints `y_j >= 0` and optional linear equalities.
///
/// The LMI is block diagonal; diagonal blocks hold scalar nonnegativity
/// constraints that are affine in `y`.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub(crate) num_vars: usize,
    pub(crate) objective: Vec<f64>,
    pub(crate) blocks: Vec<(BlockKind, usize)>,
    pub(crate) constant: Vec<Entry>,
    pub(crate) coefficients: Vec<Vec<Entry>>,
    pub(crate) sign_constraints: Vec<usize>,
    pub(crate) equality_constraints: Vec<LinearEquality>,
}

impl SdpProblem {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            blocks: Vec::new(),
            constant: Vec::new(),
            coefficients: vec![Vec::new(); num_vars],
            sign_constraints: Vec::new(),
            equality_constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn set_objective(&mut self, var: usize, c: f64) {
        self.objective[var] = c;
    }

    /// Appends a block and returns its index.
    pub fn add_block(&mut self, kind: BlockKind, dim: usize) -> usize {
        self.blocks.push((kind, dim));
        self.blocks.len() - 1
    }

    pub fn blocks(&self) -> &[(BlockKind, usize)] {
        &self.blocks
    }

    /// Adds `value` to entries `(row, col)` and `(col, row)` of `F_0`.
    pub fn add_constant(&mut self, block: usize, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            self.constant.push(entry(block, row, col, value));
        }
    }

    /// Adds `value` to entries `(row, col)` and `(col, row)` of `F_var`.
    pub fn add_coefficient(
        &mut self,
        var: usize,
        block: usize,
        row: usize,
        col: usize,
        value: f64,
    ) {
        if value != 0.0 {
            self.coefficients[var].push(entry(block, row, col, value));
        }
    }

    /// Adds a whole dense symmetric matrix (upper triangle read) to `F_0`.
    pub fn add_constant_matrix(&mut self, block: usize, m: &DMatrix<f64>) {
        for (r, c, v) in upper_entries(m) {
            self.add_constant(block, r, c, v);
        }
    }

    /// Adds a whole dense symmetric matrix (upper triangle read) to `F_var`.
    pub fn add_coefficient_matrix(&mut self, var: usize, block: usize, m: &DMatrix<f64>) {
        for (r, c, v) in upper_entries(m) {
            self.add_coefficient(var, block, r, c, v);
        }
    }

    pub fn require_nonnegative(&mut self, var: usize) {
        if !self.sign_constraints.contains(&var) {
            self.sign_constraints.push(var);
        }
    }

    pub fn sign_constraints(&self) -> &[usize] {
        &self.sign_constraints
    }

    pub fn add_equality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.equality_constraints
            .push(LinearEquality { coeffs, rhs });
    }

    pub fn equality_constraints(&self) -> &[LinearEquality] {
        &self.equality_constraints
    }

    /// Checks indices, dimensions and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.num_vars || self.coefficients.len() != self.num_vars {
            return Err(Error::DimensionMismatch {
                expected: self.num_vars,
                got: self.objective.len(),
            });
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation(
                "objective has non-finite coefficients".into(),
            ));
        }
        let check = |e: &Entry| -> Result<()> {
            let (kind, dim) = *self.blocks.get(e.block).ok_or_else(|| {
                Error::Validation(format!("entry refers to missing block {}", e.block))
            })?;
            if e.col >= dim || e.row > e.col {
                return Err(Error::Validation(format!(
                    "entry ({}, {}) outside block {} of dimension {dim}",
                    e.row, e.col, e.block
                )));
            }
            if kind == BlockKind::Diagonal && e.row != e.col {
                return Err(Error::Validation(format!(
                    "off-diagonal entry ({}, {}) in diagonal block {}",
                    e.row, e.col, e.block
                )));
            }
            if !e.value.is_finite() {
                return Err(Error::Validation("non-finite LMI coefficient".into()));
            }
            Ok(())
        };
        self.constant.iter().try_for_each(check)?;
        self.coefficients.iter().flatten().try_for_each(check)?;
        for &v in &self.sign_constraints {
            if v >= self.num_vars {
                return Err(Error::Validation(format!(
                    "sign constraint on missing variable {v}"
                )));
            }
        }
        for eq in &self.equality_constraints {
            if eq
                .coeffs
                .iter()
                .any(|&(v, a)| v >= self.num_vars || !a.is_finite())
                || !eq.rhs.is_finite()
            {
                return Err(Error::Validation("malformed equality constraint".into()));
            }
        }
        Ok(())
    }

    /// Value of each LMI block at `y` (diagonal blocks returned as diagonal matrices).
    pub fn lmi_value(&self, y: &[f64]) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self
            .blocks
            .iter()
            .map(|&(_, d)| DMatrix::zeros(d, d))
            .collect();
        let mut add = |e: &Entry, scale: f64| {
            let m = &mut out[e.block];
            m[(e.row, e.col)] += scale * e.value;
            if e.row != e.col {
                m[(e.col, e.row)] += scale * e.value;
            }
        };
        for e in &self.constant {
            add(e, 1.0);
        }
        for (j, entries) in self.coefficients.iter().enumerate() {
            if y[j] != 0.0 {
                for e in entries {
                    add(e, y[j]);
                }
            }
        }
        out
    }

    /// Smallest eigenvalue over all LMI blocks and sign-constrained variables at `y`.
    pub fn lmi_min_eigenvalue(&self, y: &[f64]) -> f64 {
        let mut worst = f64::INFINITY;
        for (m, &(kind, _)) in self.lmi_value(y).iter().zip(&self.blocks) {
            let ev = match kind {
                BlockKind::Psd => super::linalg::min_eigenvalue_unchecked(m),
                BlockKind::Diagonal => m.diagonal().min(),
            };
            worst = worst.min(ev);
        }
        for &v in &self.sign_constraints {
            worst = worst.min(y[v]);
        }
        worst
    }

    /// Largest violation of the equality constraints at `y`.
    pub fn equality_residual(&self, y: &[f64]) -> f64 {
        self.equality_constraints
            .iter()
            .map(|eq| (eq.coeffs.iter().map(|&(v, a)| a * y[v]).sum::<f64>() - eq.rhs).abs())
            .fold(0.0, f64::max)
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.iter().zip(y).map(|(c, v)| c * v).sum()
    }
}

fn entry(block: usize, row: usize, col: usize, value: f64) -> Entry {
    let (row, col) = if row <= col { (row, col) } else { (col, row) };
    Entry {
        block,
        row,
        col,
        value,
    }
}

fn upper_entries(m: &DMatrix<f64>) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    let n = m.nrows();
    (0..n)
        .flat_map(move |r| (r..n).map(move |c| (r, c, m[(r, c)])))
        .filter(|&(_, _, v)| v != 0.0)
}
