//! Step-size coefficient triangles for fixed-step first-order methods.
//!
//! A method with `n` steps is described by coefficients `h[i][k]`,
//! `1 <= i <= n`, `0 <= k < i`, and produces
//!
//! ```text
//! x_i = x_{i-1} - (1/L) * sum_{k < i} h[i][k] * f'(x_k)
//! ```
//!
//! The gradient method, the heavy ball method and Nesterov's fast gradient
//! method all fit this form; constructors for each live here.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Lower-triangular table of step coefficients.
///
/// Row `i` (1-based) holds the `i` coefficients applied to the gradients at
/// `x_0 .. x_{i-1}` when forming `x_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr", into = "ScheduleRepr")]
pub struct StepSchedule {
    n: usize,
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleRepr {
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<ScheduleRepr> for StepSchedule {
    type Error = Error;

    fn try_from(r: ScheduleRepr) -> Result<Self> {
        if r.rows.len() != r.n {
            return Err(Error::Validation(format!(
                "n = {} but {} rows given",
                r.n,
                r.rows.len()
            )));
        }
        Self::from_rows(&r.rows)
    }
}

impl From<StepSchedule> for ScheduleRepr {
    fn from(s: StepSchedule) -> Self {
        Self {
            n: s.n,
            rows: s.to_rows(),
        }
    }
}

#[inline]
fn offset(i: usize, k: usize) -> usize {
    (i - 1) * i / 2 + k
}

impl StepSchedule {
    /// All-zero schedule with `n` steps.
    pub fn zeros(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidStepCount(0));
        }
        Ok(Self {
            n,
            coeffs: vec![0.0; n * (n + 1) / 2],
        })
    }

    /// Builds a schedule from explicit rows; row `i` must have exactly `i` entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let mut s = Self::zeros(rows.len())?;
        for (idx, row) in rows.iter().enumerate() {
            let i = idx + 1;
            if row.len() != i {
                return Err(Error::Validation(format!(
                    "row {i} has {} entries, expected {i}",
                    row.len()
                )));
            }
            for (k, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "row {i}, column {k}: coefficient {v} is not finite"
                    )));
                }
                s.coeffs[offset(i, k)] = v;
            }
        }
        Ok(s)
    }

    /// Number of steps `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Coefficient applied to `f'(x_k)` when forming `x_i`.
    ///
    /// Panics unless `0 <= k < i <= n`.
    pub fn get(&self, i: usize, k: usize) -> f64 {
        assert!(
            k < i && i <= self.n,
            "coefficient ({i},{k}) outside triangle"
        );
        self.coeffs[offset(i, k)]
    }

    pub fn set(&mut self, i: usize, k: usize, value: f64) {
        assert!(
            k < i && i <= self.n,
            "coefficient ({i},{k}) outside triangle"
        );
        self.coeffs[offset(i, k)] = value;
    }

    /// Row `i` (1-based) as a slice of length `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        assert!(i >= 1 && i <= self.n);
        &self.coeffs[offset(i, 0)..offset(i, 0) + i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (1..=self.n).map(move |i| self.row(i))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Total number of coefficients, `N(N+1)/2`.
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Returns `Some(h)` when the schedule is a constant-step gradient method.
    pub fn as_constant_gradient(&self) -> Option<f64> {
        let h = self.get(1, 0);
        for i in 1..=self.n {
            for k in 0..i {
                let expected = if k + 1 == i { h } else { 0.0 };
                if self.get(i, k) != expected {
                    return None;
                }
            }
        }
        Some(h)
    }

    /// Schedule truncated to its first `m` rows.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.n {
            return Err(Error::InvalidStepCount(m));
        }
        Ok(Self {
            n: m,
            coeffs: self.coeffs[..m * (m + 1) / 2].to_vec(),
        })
    }

    /// Copy with every coefficient negated (used to render the "+" convention).
    pub fn negated(&self) -> Self {
        Self {
            n: self.n,
            coeffs: self.coeffs.iter().map(|v| -v).collect(),
        }
    }

    /// Serializes to the schedule JSON document (17 significant digits per number).
    pub fn to_json_string(&self) -> String {
        let rows: Vec<String> = self
            .rows()
            .map(|row| {
                let cells: Vec<String> = row.iter().map(|v| format_number(*v)).collect();
                format!("[{}]", cells.join(", "))
            })
            .collect();
        format!(
            "{{\n  \"n\": {},\n  \"rows\": [\n    {}\n  ]\n}}\n",
            self.n,
            rows.join(",\n    ")
        )
    }

    /// Parses the schedule JSON document, naming the offending row/column on failure.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| Error::ScheduleFormat {
            row: None,
            col: None,
            message: format!(
                "invalid JSON at line {}, column {}: {e}",
                e.line(),
                e.column()
            ),
        })?;
        let fmt_err = |row: Option<usize>, col: Option<usize>, message: String| {
            Error::ScheduleFormat { row, col, message }
        };
        let n = doc
            .get("n")
            .and_then(Value::as_u64)
            .ok_or_else(|| fmt_err(None, None, "missing or non-integer field \"n\"".into()))?
            as usize;
        if n == 0 {
            return Err(Error::InvalidStepCount(0));
        }
        let rows = doc
            .get("rows")
            .and_then(Value::as_array)
            .ok_or_else(|| fmt_err(None, None, "missing array field \"rows\"".into()))?;
        if rows.len() != n {
            let first_bad = rows.len().min(n) + 1;
            return Err(fmt_err(
                Some(first_bad),
                None,
                format!("document declares n = {n} but holds {} rows", rows.len()),
            ));
        }
        let mut s = Self::zeros(n)?;
        for (idx, row) in rows.iter().enumerate() {
            let i = idx + 1;
            let cells = row
                .as_array()
                .ok_or_else(|| fmt_err(Some(i), None, "row is not an array".into()))?;
            if cells.len() != i {
                return Err(fmt_err(
                    Some(i),
                    Some(cells.len().min(i)),
                    format!("expected {i} coefficients, found {}", cells.len()),
                ));
            }
            for (k, cell) in cells.iter().enumerate() {
                let v = cell.as_f64().filter(|v| v.is_finite()).ok_or_else(|| {
                    fmt_err(Some(i), Some(k), format!("not a finite number: {cell}"))
                })?;
                s.set(i, k, v);
            }
        }
        Ok(s)
    }
}

impl fmt::Display for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (idx, row) in self.rows().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
            writeln!(f, "h^({}) = [{}]", idx + 1, cells.join(", "))?;
        }
        Ok(())
    }
}

fn format_number(v: f64) -> String {
    if v == 0.0 {
        "0.0".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Writes a schedule file.
pub fn save_schedule(s: &StepSchedule, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, s.to_json_string())?;
    Ok(())
}

/// Reads and validates a schedule file.
pub fn load_schedule(path: impl AsRef<Path>) -> Result<StepSchedule> {
    let text = fs::read_to_string(path)?;
    StepSchedule::from_json_str(&text)
}

/// Constant-step gradient method: `x_{i+1} = x_i - (h/L) f'(x_i)`.
pub fn gm_schedule(n: usize, h: f64) -> Result<StepSchedule> {
    let mut s = StepSchedule::zeros(n)?;
    if !h.is_finite() {
        return Err(Error::Validation(format!("step size {h} is not finite")));
    }
    for i in 1..=n {
        s.set(i, i - 1, h);
    }
    Ok(s)
}

/// Heavy ball method with step `alpha` and momentum `beta`, unrolled into
/// `h[i+1][k] = alpha * beta^(i-k)`.
///
/// Parameters outside `0 <= beta < 1`, `0 < alpha < 2(1+beta)` only log a warning.
pub fn hbm_schedule(n: usize, alpha: f64, beta: f64) -> Result<StepSchedule> {
    let mut s = StepSchedule::zeros(n)?;
    if !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::Validation(
            "heavy ball parameters must be finite".into(),
        ));
    }
    if !(0.0..1.0).contains(&beta) || !(alpha > 0.0 && alpha < 2.0 * (1.0 + beta)) {
        log::warn!(
            "heavy ball parameters alpha = {alpha}, beta = {beta} lie outside the classical stability range"
        );
    }
    for i in 1..=n {
        for k in 0..i {
            s.set(i, k, alpha * beta.powi((i - 1 - k) as i32));
        }
    }
    Ok(s)
}

/// The momentum sequence `t_1 = 1`, `t_{i+1} = (1 + sqrt(1 + 4 t_i^2)) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FgmTSequence(Vec<f64>);

impl FgmTSequence {
    /// First `len` terms `t_1 .. t_len`.
    pub fn new(len: usize) -> Self {
        let mut t = Vec::with_capacity(len);
        let mut cur = 1.0_f64;
        for _ in 0..len {
            t.push(cur);
            cur = (1.0 + (1.0 + 4.0 * cur * cur).sqrt()) / 2.0;
        }
        Self(t)
    }

    /// `t_i`, 1-based.
    pub fn get(&self, i: usize) -> f64 {
        self.0[i - 1]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Which FGM sequence a schedule terminates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FgmVariant {
    /// Ends at `x_N = y_N - f'(y_N)/L`.
    Main,
    /// Ends at the auxiliary point `y_N`.
    Auxiliary,
}

impl fmt::Display for FgmVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FgmVariant::Main => f.write_str("main"),
            FgmVariant::Auxiliary => f.write_str("aux"),
        }
    }
}

/// Fast gradient method as a coefficient triangle.
///
/// The auxiliary variant has `n - 1` rows and ends at `y_n` (points are
/// re-based so that `y_1 = x_0` is point 0). The main variant appends a pure
/// gradient step, giving `n` rows that end at `x_n`.
pub fn fgm_schedule(n: usize, variant: FgmVariant) -> Result<StepSchedule> {
    if n == 0 {
        return Err(Error::InvalidStepCount(0));
    }
    let aux_rows = fgm_auxiliary_rows(n);
    match variant {
        FgmVariant::Auxiliary => {
            if n == 1 {
                return Err(Error::InvalidStepCount(0));
            }
            StepSchedule::from_rows(&aux_rows)
        }
        FgmVariant::Main => {
            let mut rows = aux_rows;
            let mut last = vec![0.0; n];
            last[n - 1] = 1.0;
            rows.push(last);
            StepSchedule::from_rows(&rows)
        }
    }
}

/// Rows 1..n-1 of the serial form of FGM (row `i` produces `y_{i+1}`).
fn fgm_auxiliary_rows(n: usize) -> Vec<Vec<f64>> {
    let t = FgmTSequence::new(n);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n.saturating_sub(1));
    for i in 1..n {
        let ratio = (t.get(i) - 1.0) / t.get(i + 1);
        // Unknowns h^{(i+1)}_k for k = 1..i, stored at column k - 1.
        let mut row = vec![0.0; i];
        if i >= 2 {
            let prev = &rows[i - 2];
            for k in 1..=i.saturating_sub(2) {
                row[k - 1] = ratio * prev[k - 1];
            }
            row[i - 2] = ratio * (prev[i - 2] - 1.0);
        }
        row[i - 1] = 1.0 + ratio;
        rows.push(row);
    }
    rows
}
