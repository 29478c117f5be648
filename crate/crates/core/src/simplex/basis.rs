use crate::lp::StandardFormLp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

/// Artificial column `sign * e_row` appended after the standard-form columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Artificial {
    pub row: usize,
    pub sign: f64,
}

/// Basis over standard-form columns plus artificials. Column ids
/// `>= num_columns` refer to `artificials[id - num_columns]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub basic: Vec<usize>,
    pub status: Vec<VarStatus>,
    pub num_columns: usize,
    pub artificials: Vec<Artificial>,
}

impl Basis {
    pub fn is_artificial(&self, col: usize) -> bool {
        col >= self.num_columns
    }

    pub fn nonbasic(&self) -> impl Iterator<Item = usize> + '_ {
        self.status
            .iter()
            .enumerate()
            .filter(|(_, s)| **s != VarStatus::Basic)
            .map(|(j, _)| j)
    }
}

pub(crate) fn nonbasic_status(lower: f64, upper: f64) -> VarStatus {
    if lower.is_finite() {
        VarStatus::AtLower
    } else if upper.is_finite() {
        VarStatus::AtUpper
    } else {
        VarStatus::Free
    }
}

pub(crate) fn nonbasic_value(status: VarStatus, lower: f64, upper: f64) -> f64 {
    match status {
        VarStatus::AtLower => lower,
        VarStatus::AtUpper => upper,
        _ => 0.0,
    }
}

/// Feasible-slack starting basis.
///
/// Nonbasic columns sit at a finite bound (zero when free). Each row takes its
/// slack into the basis when the resulting slack value respects the slack's
/// bounds; every other row (equalities included) gets an artificial whose
/// sign makes its starting value non-negative. The basis matrix is diagonal.
pub fn initial_slack_basis(sf: &StandardFormLp) -> Basis {
    let (m, n) = (sf.num_rows(), sf.num_cols());
    let mut status: Vec<VarStatus> = (0..n)
        .map(|j| nonbasic_status(sf.lower[j], sf.upper[j]))
        .collect();
    let mut residual = sf.rhs.clone();
    for j in 0..sf.num_original() {
        let v = nonbasic_value(status[j], sf.lower[j], sf.upper[j]);
        if v != 0.0 {
            for (i, a) in sf.matrix.column_iter(j) {
                residual[i] -= a * v;
            }
        }
    }
    let mut basic = Vec::with_capacity(m);
    let mut artificials = Vec::new();
    for i in 0..m {
        if let Some((col, coef)) = sf.row_slack[i] {
            let value = residual[i] / coef;
            if value >= sf.lower[col] && value <= sf.upper[col] {
                status[col] = VarStatus::Basic;
                basic.push(col);
                continue;
            }
        }
        let sign = if residual[i] < 0.0 { -1.0 } else { 1.0 };
        basic.push(n + artificials.len());
        artificials.push(Artificial { row: i, sign });
        status.push(VarStatus::Basic);
    }
    Basis {
        basic,
        status,
        num_columns: n,
        artificials,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{to_standard_form, LpBuilder, RowSense};

    fn build(rows: &[(RowSense, f64)]) -> StandardFormLp {
        let mut b = LpBuilder::new("b");
        let x = b.add_col("x", 1.0, 0.0, f64::INFINITY);
        let y = b.add_col("y", 1.0, 0.0, f64::INFINITY);
        for (k, &(s, rhs)) in rows.iter().enumerate() {
            b.add_row(format!("r{k}"), s, rhs, &[(x, 1.0), (y, 1.0)]);
        }
        to_standard_form(&b.build().unwrap())
    }

    #[test]
    fn inequalities_use_slacks() {
        let sf = build(&[(RowSense::Le, 4.0), (RowSense::Le, 2.0), (RowSense::Ge, -1.0)]);
        let basis = initial_slack_basis(&sf);
        assert!(basis.artificials.is_empty());
        assert_eq!(basis.basic, vec![2, 3, 4]);
    }

    #[test]
    fn equalities_use_artificials() {
        let sf = build(&[(RowSense::Eq, 4.0), (RowSense::Eq, -2.0)]);
        let basis = initial_slack_basis(&sf);
        assert_eq!(basis.basic, vec![2, 3]);
        assert_eq!(basis.artificials.len(), 2);
        assert_eq!(basis.artificials[1].sign, -1.0);
    }

    #[test]
    fn mixed_rows() {
        let sf = build(&[(RowSense::Le, 4.0), (RowSense::Eq, 1.0), (RowSense::Ge, 3.0)]);
        let basis = initial_slack_basis(&sf);
        assert_eq!(basis.basic.len(), 3);
        // slack of row 0 is basic; row 1 (equality) and row 2 (surplus would
        // be negative) need artificials
        assert_eq!(basis.basic[0], 2);
        assert_eq!(basis.artificials.iter().map(|a| a.row).collect::<Vec<_>>(), vec![1, 2]);
        let basic_count = basis.status.iter().filter(|s| **s == VarStatus::Basic).count();
        assert_eq!(basic_count, 3);
    }
}
