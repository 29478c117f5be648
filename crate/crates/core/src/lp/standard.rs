use std::ops::Range;

use super::instance::{LpInstance, RowSense};
use super::sparse::SparseColMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnOrigin {
    Original(usize),
    /// Slack or surplus column of the given row.
    Slack(usize),
}

/// Equality-form LP `min c·x  s.t.  A x = b,  l <= x <= u`.
///
/// Slack columns occupy `slack_range` after the original columns; each one
/// carries coefficient `+1` (`<=` side) or `-1` (`>=` side) in its row.
#[derive(Debug, Clone)]
pub struct StandardFormLp {
    pub matrix: SparseColMatrix,
    pub rhs: Vec<f64>,
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub slack_range: Range<usize>,
    pub origin_map: Vec<ColumnOrigin>,
    /// Slack column and its coefficient for each row, when one exists.
    pub row_slack: Vec<Option<(usize, f64)>>,
}

impl StandardFormLp {
    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn num_original(&self) -> usize {
        self.slack_range.start
    }

    /// Projects a standard-form point onto the original columns.
    pub fn original_point(&self, x: &[f64]) -> Vec<f64> {
        x[..self.num_original()].to_vec()
    }

    /// Extends an original point with the slack values that make every row an equality.
    pub fn extend_point(&self, x: &[f64]) -> Vec<f64> {
        let n = self.num_original();
        let mut full = x.to_vec();
        full.resize(self.num_cols(), 0.0);
        let mut act = vec![0.0; self.num_rows()];
        for j in 0..n {
            for (i, v) in self.matrix.column_iter(j) {
                act[i] += v * x[j];
            }
        }
        for (i, slack) in self.row_slack.iter().enumerate() {
            if let Some((col, coef)) = *slack {
                full[col] = (self.rhs[i] - act[i]) / coef;
            }
        }
        full
    }
}

/// Appends one slack/surplus column per inequality (and per ranged equality) row.
pub fn to_standard_form(lp: &LpInstance) -> StandardFormLp {
    let (m, n) = (lp.num_rows(), lp.num_cols());
    let mut slack_cols = Vec::new();
    let mut lower = lp.col_lower.clone();
    let mut upper = lp.col_upper.clone();
    let mut origin_map: Vec<ColumnOrigin> = (0..n).map(ColumnOrigin::Original).collect();
    let mut row_slack = vec![None; m];
    for i in 0..m {
        let range = lp.row_range[i].map(f64::abs);
        let coef = match (lp.row_sense[i], lp.row_range[i]) {
            (RowSense::Le, _) => 1.0,
            (RowSense::Ge, _) => -1.0,
            (RowSense::Eq, None) => continue,
            (RowSense::Eq, Some(r)) if r >= 0.0 => -1.0,
            (RowSense::Eq, Some(_)) => 1.0,
        };
        let col = n + slack_cols.len();
        slack_cols.push(vec![(i, coef)]);
        lower.push(0.0);
        upper.push(range.unwrap_or(f64::INFINITY));
        origin_map.push(ColumnOrigin::Slack(i));
        row_slack[i] = Some((col, coef));
    }
    let mut matrix = lp.matrix.clone();
    matrix.append_columns(&slack_cols);
    let mut objective = lp.objective.clone();
    objective.resize(n + slack_cols.len(), 0.0);
    StandardFormLp {
        matrix,
        rhs: lp.rhs.clone(),
        objective,
        lower,
        upper,
        slack_range: n..n + slack_cols.len(),
        origin_map,
        row_slack,
    }
}
