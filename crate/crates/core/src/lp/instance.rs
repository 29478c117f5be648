use serde::{Deserialize, Serialize};

use super::sparse::SparseColMatrix;
use crate::error::{Error, Result};

/// Values at or beyond this magnitude are read as infinite.
pub const INFINITY_THRESHOLD: f64 = 1e30;

/// Maps solver-convention huge numbers onto IEEE infinities.
pub fn normalize_infinity(v: f64) -> f64 {
    if v >= INFINITY_THRESHOLD {
        f64::INFINITY
    } else if v <= -INFINITY_THRESHOLD {
        f64::NEG_INFINITY
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowSense {
    /// `a·x <= b`
    Le,
    /// `a·x >= b`
    Ge,
    /// `a·x = b`
    Eq,
}

/// A minimization LP `min c·x + offset` over rows with senses and column bounds.
///
/// Rows may carry an MPS-style range `R`; the resulting row activity
/// interval is given by [`LpInstance::row_bounds`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpInstance {
    pub name: String,
    pub objective_name: String,
    pub objective: Vec<f64>,
    pub objective_offset: f64,
    pub matrix: SparseColMatrix,
    pub rhs: Vec<f64>,
    pub row_sense: Vec<RowSense>,
    pub row_range: Vec<Option<f64>>,
    pub col_lower: Vec<f64>,
    pub col_upper: Vec<f64>,
    pub col_names: Vec<String>,
    pub row_names: Vec<String>,
}

impl LpInstance {
    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    /// Activity interval `[lo, hi]` of row `i`, accounting for ranges.
    pub fn row_bounds(&self, i: usize) -> (f64, f64) {
        let b = self.rhs[i];
        match (self.row_sense[i], self.row_range[i]) {
            (RowSense::Le, None) => (f64::NEG_INFINITY, b),
            (RowSense::Ge, None) => (b, f64::INFINITY),
            (RowSense::Eq, None) => (b, b),
            (RowSense::Le, Some(r)) => (b - r.abs(), b),
            (RowSense::Ge, Some(r)) => (b, b + r.abs()),
            (RowSense::Eq, Some(r)) if r >= 0.0 => (b, b + r),
            (RowSense::Eq, Some(r)) => (b + r, b),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.num_rows(), self.num_cols());
        if self.matrix.rows() != m || self.matrix.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, expected {m}x{n}",
                self.matrix.rows(),
                self.matrix.cols()
            )));
        }
        let lens = [
            ("row_sense", self.row_sense.len(), m),
            ("row_range", self.row_range.len(), m),
            ("row_names", self.row_names.len(), m),
            ("col_lower", self.col_lower.len(), n),
            ("col_upper", self.col_upper.len(), n),
            ("col_names", self.col_names.len(), n),
        ];
        for (what, got, want) in lens {
            if got != want {
                return Err(Error::DimensionMismatch(format!(
                    "{what} has length {got}, expected {want}"
                )));
            }
        }
        self.matrix.check_structure()?;
        for j in 0..n {
            let (l, u) = (self.col_lower[j], self.col_upper[j]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::InvalidLp(format!(
                    "column {} has invalid bounds [{l}, {u}]",
                    self.col_names[j]
                )));
            }
            if !self.objective[j].is_finite() {
                return Err(Error::InvalidLp(format!("objective of column {j} not finite")));
            }
        }
        for i in 0..m {
            if !self.rhs[i].is_finite() {
                return Err(Error::InvalidLp(format!("rhs of row {i} not finite")));
            }
            if let Some(r) = self.row_range[i] {
                if !r.is_finite() {
                    return Err(Error::InvalidLp(format!("range of row {i} not finite")));
                }
            }
        }
        Ok(())
    }

    /// Maximum violation of rows and column bounds at `x`.
    pub fn primal_violation(&self, x: &[f64]) -> f64 {
        let ax = self.matrix.mul_vec(x);
        let mut worst = 0.0f64;
        for (i, &act) in ax.iter().enumerate() {
            let (lo, hi) = self.row_bounds(i);
            worst = worst.max(lo - act).max(act - hi);
        }
        for (j, &xj) in x.iter().enumerate() {
            worst = worst.max(self.col_lower[j] - xj).max(xj - self.col_upper[j]);
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.objective_offset
    }
}

/// Incremental row/column builder used by generators and tests.
#[derive(Debug, Default, Clone)]
pub struct LpBuilder {
    name: String,
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    col_names: Vec<String>,
    columns: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    sense: Vec<RowSense>,
    range: Vec<Option<f64>>,
    row_names: Vec<String>,
}

impl LpBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    /// Adds a column and returns its index.
    pub fn add_col(&mut self, name: impl Into<String>, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.col_names.push(name.into());
        self.columns.push(Vec::new());
        self.objective.len() - 1
    }

    /// Adds a row over existing columns and returns its index.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        sense: RowSense,
        rhs: f64,
        entries: &[(usize, f64)],
    ) -> usize {
        let i = self.rhs.len();
        for &(j, v) in entries {
            self.columns[j].push((i, v));
        }
        self.rhs.push(rhs);
        self.sense.push(sense);
        self.range.push(None);
        self.row_names.push(name.into());
        i
    }

    pub fn set_range(&mut self, row: usize, range: f64) {
        self.range[row] = Some(range);
    }

    pub fn num_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn build(self) -> Result<LpInstance> {
        let m = self.rhs.len();
        let lp = LpInstance {
            name: self.name,
            objective_name: "obj".into(),
            objective: self.objective,
            objective_offset: 0.0,
            matrix: SparseColMatrix::from_columns(m, self.columns)?,
            rhs: self.rhs,
            row_sense: self.sense,
            row_range: self.range,
            col_lower: self.lower,
            col_upper: self.upper,
            col_names: self.col_names,
            row_names: self.row_names,
        };
        lp.validate()?;
        Ok(lp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranged_row_bounds() {
        let mut b = LpBuilder::new("r");
        let x = b.add_col("x", 1.0, 0.0, f64::INFINITY);
        let r0 = b.add_row("le", RowSense::Le, 4.0, &[(x, 1.0)]);
        let r1 = b.add_row("ge", RowSense::Ge, 4.0, &[(x, 1.0)]);
        let r2 = b.add_row("eqp", RowSense::Eq, 4.0, &[(x, 1.0)]);
        let r3 = b.add_row("eqn", RowSense::Eq, 4.0, &[(x, 1.0)]);
        b.set_range(r0, -2.0);
        b.set_range(r1, 2.0);
        b.set_range(r2, 2.0);
        b.set_range(r3, -2.0);
        let lp = b.build().unwrap();
        assert_eq!(lp.row_bounds(0), (2.0, 4.0));
        assert_eq!(lp.row_bounds(1), (4.0, 6.0));
        assert_eq!(lp.row_bounds(2), (4.0, 6.0));
        assert_eq!(lp.row_bounds(3), (2.0, 4.0));
    }

    #[test]
    fn crossed_bounds_rejected() {
        let mut b = LpBuilder::new("bad");
        b.add_col("x", 0.0, 2.0, 1.0);
        assert!(matches!(b.build(), Err(Error::InvalidLp(_))));
    }

    #[test]
    fn infinity_threshold() {
        assert_eq!(normalize_infinity(1e30), f64::INFINITY);
        assert_eq!(normalize_infinity(-2e31), f64::NEG_INFINITY);
        assert_eq!(normalize_infinity(9.9e29), 9.9e29);
    }
}
