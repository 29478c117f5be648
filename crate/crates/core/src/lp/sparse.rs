use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compressed sparse column matrix. Row indices are strictly increasing
/// within each column and no explicit zeros are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseColMatrix {
    rows: usize,
    cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseColMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            col_ptr: vec![0; cols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from per-column `(row, value)` lists. Entries are sorted,
    /// duplicates summed and zeros dropped.
    pub fn from_columns(rows: usize, columns: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let cols = columns.len();
        let mut col_ptr = Vec::with_capacity(cols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for (j, mut col) in columns.into_iter().enumerate() {
            col.sort_by_key(|&(r, _)| r);
            let mut last: Option<usize> = None;
            for (r, v) in col {
                if r >= rows {
                    return Err(Error::DimensionMismatch(format!(
                        "row index {r} out of range in column {j} (rows = {rows})"
                    )));
                }
                if !v.is_finite() {
                    return Err(Error::InvalidLp(format!(
                        "non-finite coefficient at ({r}, {j})"
                    )));
                }
                if last == Some(r) {
                    *values.last_mut().unwrap() += v;
                } else {
                    row_idx.push(r);
                    values.push(v);
                    last = Some(r);
                }
            }
            // drop entries that cancelled or were given as zero
            let start = *col_ptr.last().unwrap();
            let mut w = start;
            for k in start..row_idx.len() {
                if values[k] != 0.0 {
                    row_idx[w] = row_idx[k];
                    values[w] = values[k];
                    w += 1;
                }
            }
            row_idx.truncate(w);
            values.truncate(w);
            col_ptr.push(w);
        }
        Ok(Self {
            rows,
            cols,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn from_dense(dense: &[Vec<f64>]) -> Result<Self> {
        let rows = dense.len();
        let cols = dense.first().map_or(0, |r| r.len());
        let mut columns = vec![Vec::new(); cols];
        for (i, row) in dense.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::DimensionMismatch("ragged dense matrix".into()));
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    columns[j].push((i, v));
                }
            }
        }
        Self::from_columns(rows, columns)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Row indices and values of column `j`.
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.col_ptr[j], self.col_ptr[j + 1]);
        (&self.row_idx[s..e], &self.values[s..e])
    }

    pub fn column_iter(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (r, v) = self.column(j);
        r.iter().copied().zip(v.iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, v) = self.column(j);
        match r.binary_search(&i) {
            Ok(k) => v[k],
            Err(_) => 0.0,
        }
    }

    /// Iterates over all stored entries as `(row, col, value)` in column-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.cols).flat_map(move |j| self.column_iter(j).map(move |(i, v)| (i, j, v)))
    }

    /// Row-major view: for every row, the `(col, value)` list in increasing column order.
    pub fn to_rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.rows];
        for (i, j, v) in self.triplets() {
            out[i].push((j, v));
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.cols]; self.rows];
        for (i, j, v) in self.triplets() {
            out[i][j] = v;
        }
        out
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for j in 0..self.cols {
            let xj = x[j];
            if xj != 0.0 {
                for (i, v) in self.column_iter(j) {
                    y[i] += v * xj;
                }
            }
        }
        y
    }

    /// New matrix whose column `j` is column `order[j]` of `self`.
    pub fn select_columns(&self, order: &[usize]) -> Self {
        let mut col_ptr = Vec::with_capacity(order.len() + 1);
        let mut row_idx = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        col_ptr.push(0);
        for &src in order {
            let (r, v) = self.column(src);
            row_idx.extend_from_slice(r);
            values.extend_from_slice(v);
            col_ptr.push(row_idx.len());
        }
        Self {
            rows: self.rows,
            cols: order.len(),
            col_ptr,
            row_idx,
            values,
        }
    }

    /// Appends columns on the right.
    pub fn append_columns(&mut self, columns: &[Vec<(usize, f64)>]) {
        for col in columns {
            for &(r, v) in col {
                debug_assert!(r < self.rows);
                if v != 0.0 {
                    self.row_idx.push(r);
                    self.values.push(v);
                }
            }
            self.col_ptr.push(self.row_idx.len());
            self.cols += 1;
        }
    }

    pub(crate) fn check_structure(&self) -> Result<()> {
        if self.col_ptr.len() != self.cols + 1 {
            return Err(Error::InvalidLp("column pointer length".into()));
        }
        for j in 0..self.cols {
            let (r, v) = self.column(j);
            if r.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidLp(format!(
                    "row indices of column {j} not strictly increasing"
                )));
            }
            if r.iter().any(|&i| i >= self.rows) {
                return Err(Error::InvalidLp(format!("row index out of range in column {j}")));
            }
            if v.iter().any(|&x| x == 0.0 || !x.is_finite()) {
                return Err(Error::InvalidLp(format!(
                    "stored zero or non-finite value in column {j}"
                )));
            }
        }
        Ok(())
    }
}
