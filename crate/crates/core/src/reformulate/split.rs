use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::LpInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SplitMethod {
    #[default]
    ContiguousBlocks,
    RoundRobin,
    ByNamePrefix,
}

/// Partition of the columns into `k` disjoint, non-empty clusters whose
/// members keep their original relative order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSplit {
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl ClusterSplit {
    /// Builds a split from explicit member lists over `n` columns.
    pub fn from_members(n: usize, mut members: Vec<Vec<usize>>) -> Result<Self> {
        if members.is_empty() || members.len() > n.max(1) {
            return Err(Error::InvalidK { k: members.len(), n });
        }
        let mut assignment = vec![usize::MAX; n];
        for (c, list) in members.iter_mut().enumerate() {
            if list.is_empty() {
                return Err(Error::EmptyCluster(c));
            }
            list.sort_unstable();
            for &j in list.iter() {
                if j >= n || assignment[j] != usize::MAX {
                    return Err(Error::InvalidPermutation(format!(
                        "column {j} is out of range or assigned twice"
                    )));
                }
                assignment[j] = c;
            }
        }
        if let Some(j) = assignment.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidPermutation(format!("column {j} is not assigned")));
        }
        Ok(Self { assignment, members })
    }

    /// Builds a split from a per-column cluster id in `0..k`.
    pub fn from_assignment(assignment: Vec<usize>, k: usize) -> Result<Self> {
        let n = assignment.len();
        let mut members = vec![Vec::new(); k];
        for (j, &c) in assignment.iter().enumerate() {
            if c >= k {
                return Err(Error::InvalidK { k, n });
            }
            members[c].push(j);
        }
        Self::from_members(n, members)
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn num_columns(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn members(&self, cluster: usize) -> &[usize] {
        &self.members[cluster]
    }

    pub fn all_members(&self) -> &[Vec<usize>] {
        &self.members
    }
}

/// Splits the columns of `lp` into `k` clusters.
pub fn split_variables(lp: &LpInstance, k: usize, method: SplitMethod) -> Result<ClusterSplit> {
    let n = lp.num_cols();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    match method {
        SplitMethod::ContiguousBlocks => {
            let block = n.div_ceil(k);
            let members: Vec<Vec<usize>> = (0..k)
                .map(|c| (c * block..((c + 1) * block).min(n)).collect())
                .collect();
            // With ceil-sized blocks trailing clusters can come out empty
            // (e.g. n=5, k=4); rebalance so every cluster keeps at least one.
            if members.iter().any(|m| m.is_empty()) {
                return ClusterSplit::from_members(n, balanced_blocks(n, k));
            }
            ClusterSplit::from_members(n, members)
        }
        SplitMethod::RoundRobin => {
            ClusterSplit::from_assignment((0..n).map(|j| j % k).collect(), k)
        }
        SplitMethod::ByNamePrefix => {
            ClusterSplit::from_members(n, name_prefix_groups(&lp.col_names, k))
        }
    }
}

fn balanced_blocks(n: usize, k: usize) -> Vec<Vec<usize>> {
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|c| {
            let len = base + usize::from(c < extra);
            let block = (start..start + len).collect();
            start += len;
            block
        })
        .collect()
}

/// Name up to (not including) its first ASCII digit.
fn name_prefix(name: &str) -> &str {
    let end = name.find(|ch: char| ch.is_ascii_digit()).unwrap_or(name.len());
    &name[..end]
}

fn name_prefix_groups(names: &[String], k: usize) -> Vec<Vec<usize>> {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let p = name_prefix(name);
        match groups.iter_mut().find(|(g, _)| g == p) {
            Some((_, list)) => list.push(j),
            None => groups.push((p.to_string(), vec![j])),
        }
    }
    let mut groups: Vec<Vec<usize>> = groups.into_iter().map(|(_, l)| l).collect();
    while groups.len() > k {
        let (best, _) = (0..groups.len() - 1)
            .map(|i| (i, groups[i].len() + groups[i + 1].len()))
            .min_by_key(|&(i, size)| (size, i))
            .expect("at least two groups");
        let next = groups.remove(best + 1);
        groups[best].extend(next);
        groups[best].sort_unstable();
    }
    while groups.len() < k {
        let (largest, _) = groups
            .iter()
            .enumerate()
            .max_by_key(|(i, g)| (g.len(), std::cmp::Reverse(*i)))
            .expect("at least one group");
        let half = groups[largest].len().div_ceil(2);
        let tail = groups[largest].split_off(half);
        groups.insert(largest + 1, tail);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{LpBuilder, RowSense};

    fn lp_with_names(names: &[&str]) -> LpInstance {
        let mut b = LpBuilder::new("names");
        let cols: Vec<usize> = names.iter().map(|n| b.add_col(*n, 1.0, 0.0, 1.0)).collect();
        let row: Vec<(usize, f64)> = cols.iter().map(|&c| (c, 1.0)).collect();
        b.add_row("r", RowSense::Le, 1.0, &row);
        b.build().unwrap()
    }

    fn plain(n: usize) -> LpInstance {
        let names: Vec<String> = (0..n).map(|j| format!("x{j}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        lp_with_names(&refs)
    }

    #[test]
    fn contiguous_blocks_use_ceiling_width() {
        let s = split_variables(&plain(5), 2, SplitMethod::ContiguousBlocks).unwrap();
        assert_eq!(s.all_members(), &[vec![0, 1, 2], vec![3, 4]]);
        assert_eq!(s.assignment(), &[0, 0, 0, 1, 1]);
    }

    #[test]
    fn contiguous_blocks_never_leave_empty_clusters() {
        let s = split_variables(&plain(5), 4, SplitMethod::ContiguousBlocks).unwrap();
        assert_eq!(s.k(), 4);
        assert!(s.all_members().iter().all(|m| !m.is_empty()));
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let s = split_variables(&plain(4), 4, SplitMethod::ContiguousBlocks).unwrap();
        assert!(s.all_members().iter().all(|m| m.len() == 1));
    }

    #[test]
    fn round_robin() {
        let s = split_variables(&plain(5), 2, SplitMethod::RoundRobin).unwrap();
        assert_eq!(s.all_members(), &[vec![0, 2, 4], vec![1, 3]]);
    }

    #[test]
    fn invalid_k() {
        assert!(matches!(
            split_variables(&plain(3), 0, SplitMethod::RoundRobin),
            Err(Error::InvalidK { .. })
        ));
        assert!(split_variables(&plain(3), 4, SplitMethod::RoundRobin).is_err());
    }

    #[test]
    fn name_prefix_groups_merge_smallest_adjacent() {
        let lp = lp_with_names(&["x1", "x2", "y1", "z1", "x3", "w1", "w2"]);
        let s = split_variables(&lp, 4, SplitMethod::ByNamePrefix).unwrap();
        assert_eq!(s.all_members(), &[vec![0, 1, 4], vec![2], vec![3], vec![5, 6]]);
        let s = split_variables(&lp, 3, SplitMethod::ByNamePrefix).unwrap();
        assert_eq!(s.all_members(), &[vec![0, 1, 4], vec![2, 3], vec![5, 6]]);
    }

    #[test]
    fn name_prefix_splits_when_too_few_groups() {
        let lp = lp_with_names(&["x1", "x2", "x3", "y1"]);
        let s = split_variables(&lp, 3, SplitMethod::ByNamePrefix).unwrap();
        assert_eq!(s.all_members(), &[vec![0, 1], vec![2], vec![3]]);
    }

    #[test]
    fn from_members_validates() {
        assert!(ClusterSplit::from_members(3, vec![vec![0], vec![1]]).is_err());
        assert!(ClusterSplit::from_members(2, vec![vec![0, 1], vec![]]).is_err());
        assert!(ClusterSplit::from_members(2, vec![vec![0, 1], vec![1]]).is_err());
        let s = ClusterSplit::from_members(3, vec![vec![2, 0], vec![1]]).unwrap();
        assert_eq!(s.members(0), &[0, 2]);
    }
}
