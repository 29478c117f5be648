use serde::{Deserialize, Serialize};

use super::instance::LpInstance;
use crate::error::{Error, Result};
use crate::reformulate::ClusterSplit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PermutationSource {
    Identity,
    Sampled,
    Oracle,
    Manual,
}

/// A reordering of LP columns: position `j` of the reordered LP holds
/// column `perm[j]` of the original.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnPermutation {
    perm: Vec<usize>,
    source: PermutationSource,
}

impl ColumnPermutation {
    pub fn identity(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
            source: PermutationSource::Identity,
        }
    }

    pub fn new(perm: Vec<usize>, source: PermutationSource) -> Result<Self> {
        check_bijection(&perm)?;
        Ok(Self { perm, source })
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn source(&self) -> PermutationSource {
        self.source
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| i == p)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.perm.len()];
        for (new, &old) in self.perm.iter().enumerate() {
            inv[old] = new;
        }
        Self {
            perm: inv,
            source: self.source,
        }
    }

    /// `self ∘ other`: applying the result equals applying `other` first and
    /// then `self`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "compose lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(Self {
            perm: self.perm.iter().map(|&p| other.perm[p]).collect(),
            source: PermutationSource::Manual,
        })
    }

    /// Maps a point of the reordered LP back to original column order.
    pub fn restore_point(&self, permuted: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; permuted.len()];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = permuted[new];
        }
        out
    }
}

fn check_bijection(perm: &[usize]) -> Result<()> {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() {
            return Err(Error::InvalidPermutation(format!(
                "index {p} out of range for length {}",
                perm.len()
            )));
        }
        if std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidPermutation(format!("index {p} repeated")));
        }
    }
    Ok(())
}

/// Reorders columns (objective, matrix, bounds, names). Rows are untouched.
pub fn apply_permutation(lp: &LpInstance, p: &ColumnPermutation) -> Result<LpInstance> {
    let n = lp.num_cols();
    if p.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "permutation of length {} for {n} columns",
            p.len()
        )));
    }
    let order = p.as_slice();
    let pick = |v: &[f64]| order.iter().map(|&j| v[j]).collect::<Vec<_>>();
    Ok(LpInstance {
        name: lp.name.clone(),
        objective_name: lp.objective_name.clone(),
        objective: pick(&lp.objective),
        objective_offset: lp.objective_offset,
        matrix: lp.matrix.select_columns(order),
        rhs: lp.rhs.clone(),
        row_sense: lp.row_sense.clone(),
        row_range: lp.row_range.clone(),
        col_lower: pick(&lp.col_lower),
        col_upper: pick(&lp.col_upper),
        col_names: order.iter().map(|&j| lp.col_names[j].clone()).collect(),
        row_names: lp.row_names.clone(),
    })
}

/// Variables of cluster `cluster_perm[0]` first (internal order kept), then
/// `cluster_perm[1]`, and so on.
pub fn expand_cluster_permutation(
    split: &ClusterSplit,
    cluster_perm: &[usize],
) -> Result<ColumnPermutation> {
    if cluster_perm.len() != split.k() {
        return Err(Error::InvalidPermutation(format!(
            "cluster permutation of length {} for k = {}",
            cluster_perm.len(),
            split.k()
        )));
    }
    check_bijection(cluster_perm)?;
    let perm: Vec<usize> = cluster_perm
        .iter()
        .flat_map(|&c| split.members(c).iter().copied())
        .collect();
    let source = if cluster_perm.iter().enumerate().all(|(i, &c)| i == c) {
        PermutationSource::Identity
    } else {
        PermutationSource::Sampled
    };
    let mut out = ColumnPermutation::new(perm, source)?;
    if out.is_identity() {
        out.source = PermutationSource::Identity;
    }
    Ok(out)
}
