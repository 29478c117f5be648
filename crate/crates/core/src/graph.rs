//! Bipartite constraint/variable graph with static, normalized features.

use serde::{Deserialize, Serialize};

use crate::lp::LpInstance;

pub const CONS_FEATURES: usize = 3;
pub const VAR_FEATURES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RowNorm {
    #[default]
    L2,
    MaxAbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub row_norm: RowNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Lossless graph view of an LP: one constraint node per row, one variable
/// node per column and one edge per stored nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    pub num_cons: usize,
    pub num_vars: usize,
    /// Row-major `num_cons x 3`: `[rhs, upper, lower]`.
    pub cons_feats: Vec<f64>,
    /// Row-major `num_vars x 3`: `[lower, upper, cost]`.
    pub var_feats: Vec<f64>,
    /// Edges in column-major order of the coefficient matrix.
    pub edges: Vec<Edge>,
    /// Edge indices incident to each constraint.
    pub cons_adj: Vec<Vec<usize>>,
    /// Edge indices incident to each variable.
    pub var_adj: Vec<Vec<usize>>,
}

impl BipartiteGraph {
    pub fn cons_feature(&self, i: usize) -> &[f64] {
        &self.cons_feats[i * CONS_FEATURES..(i + 1) * CONS_FEATURES]
    }

    pub fn var_feature(&self, j: usize) -> &[f64] {
        &self.var_feats[j * VAR_FEATURES..(j + 1) * VAR_FEATURES]
    }

    pub fn edge_rows(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.row).collect()
    }

    pub fn edge_cols(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.col).collect()
    }

    pub fn edge_values(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.value).collect()
    }
}

/// `(m, n, NNZ)` of the underlying LP.
pub fn graph_stats(g: &BipartiteGraph) -> (usize, usize, usize) {
    (g.num_cons, g.num_vars, g.edges.len())
}

/// Scales finite values into (-1, 1) by `max finite |v| + 1`; infinities map
/// to -1 / +1.
fn normalize_bounds(values: &mut [f64]) {
    let scale = values
        .iter()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        + 1.0;
    for v in values.iter_mut() {
        *v = if v.is_finite() { *v / scale } else { v.signum() };
    }
}

fn row_norms(lp: &LpInstance, kind: RowNorm) -> Vec<f64> {
    let mut entries: Vec<Vec<f64>> = vec![Vec::new(); lp.num_rows()];
    for (j, _) in lp.col_names.iter().enumerate() {
        for (i, v) in lp.matrix.column_iter(j) {
            entries[i].push(v.abs());
        }
    }
    entries
        .into_iter()
        .map(|mut row| {
            // Sorting makes the sum independent of column order.
            row.sort_by(f64::total_cmp);
            match kind {
                RowNorm::L2 => row.iter().map(|v| v * v).sum::<f64>().sqrt(),
                RowNorm::MaxAbs => row.last().copied().unwrap_or(0.0),
            }
        })
        .collect()
}

pub fn featurize(lp: &LpInstance) -> BipartiteGraph {
    featurize_with(lp, &FeatureConfig::default())
}

pub fn featurize_with(lp: &LpInstance, cfg: &FeatureConfig) -> BipartiteGraph {
    let (m, n) = (lp.num_rows(), lp.num_cols());
    let norms = row_norms(lp, cfg.row_norm);

    let mut rhs = Vec::with_capacity(m);
    let mut cons_upper = Vec::with_capacity(m);
    let mut cons_lower = Vec::with_capacity(m);
    for i in 0..m {
        let norm = if norms[i] > 0.0 {
            norms[i]
        } else {
            log::warn!("row {} ({}) has no nonzeros", i, lp.row_names[i]);
            1.0
        };
        let (lo, up) = lp.row_bounds(i);
        rhs.push(lp.rhs[i] / norm);
        cons_upper.push(up / norm);
        cons_lower.push(lo / norm);
    }
    let mut bounds: Vec<f64> = cons_upper.iter().chain(&cons_lower).copied().collect();
    normalize_bounds(&mut bounds);
    let mut cons_feats = Vec::with_capacity(m * CONS_FEATURES);
    for i in 0..m {
        cons_feats.extend([rhs[i], bounds[i], bounds[m + i]]);
    }

    let mut var_bounds: Vec<f64> = lp.col_lower.iter().chain(&lp.col_upper).copied().collect();
    normalize_bounds(&mut var_bounds);
    let cmax = lp.objective.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let mut var_feats = Vec::with_capacity(n * VAR_FEATURES);
    for j in 0..n {
        let cost = if cmax > 0.0 { lp.objective[j] / cmax } else { 0.0 };
        var_feats.extend([var_bounds[j], var_bounds[n + j], cost]);
    }

    let mut edges = Vec::with_capacity(lp.nnz());
    let mut cons_adj = vec![Vec::new(); m];
    let mut var_adj = vec![Vec::new(); n];
    for j in 0..n {
        for (i, v) in lp.matrix.column_iter(j) {
            cons_adj[i].push(edges.len());
            var_adj[j].push(edges.len());
            edges.push(Edge {
                row: i,
                col: j,
                value: v / norms[i],
            });
        }
    }
    BipartiteGraph {
        num_cons: m,
        num_vars: n,
        cons_feats,
        var_feats,
        edges,
        cons_adj,
        var_adj,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{apply_permutation, ColumnPermutation, LpBuilder, RowSense};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn row_normalization() {
        let mut b = LpBuilder::new("t");
        let x = b.add_col("x", 1.0, 0.0, 1.0);
        let y = b.add_col("y", 2.0, 0.0, 3.0);
        b.add_row("r", RowSense::Le, 10.0, &[(x, 3.0), (y, 4.0)]);
        let g = featurize(&b.build().unwrap());
        assert_eq!(g.edge_values(), vec![0.6, 0.8]);
        assert_eq!(g.cons_feature(0)[0], 2.0);
        // upper bound 2.0 scaled by (2 + 1); lower -inf maps to -1
        assert!((g.cons_feature(0)[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.cons_feature(0)[2], -1.0);
        assert_eq!(g.var_feature(1), &[0.0, 0.75, 1.0]);
        assert_eq!(graph_stats(&g), (1, 2, 2));
    }

    #[test]
    fn max_abs_norm() {
        let mut b = LpBuilder::new("t");
        let x = b.add_col("x", 1.0, 0.0, 1.0);
        let y = b.add_col("y", 1.0, 0.0, 1.0);
        b.add_row("r", RowSense::Eq, 8.0, &[(x, 3.0), (y, -4.0)]);
        let g = featurize_with(
            &b.build().unwrap(),
            &FeatureConfig {
                row_norm: RowNorm::MaxAbs,
            },
        );
        assert_eq!(g.edge_values(), vec![0.75, -1.0]);
        assert_eq!(g.cons_feature(0)[0], 2.0);
    }

    #[test]
    fn free_variables_map_to_unit_sentinels() {
        let mut b = LpBuilder::new("free");
        b.add_col("x", 0.0, f64::NEG_INFINITY, f64::INFINITY);
        b.add_col("y", 0.0, f64::NEG_INFINITY, f64::INFINITY);
        let g = featurize(&b.build().unwrap());
        assert_eq!(g.var_feature(0), &[-1.0, 1.0, 0.0]);
        assert_eq!(graph_stats(&g), (0, 2, 0));
    }

    #[test]
    fn empty_row_keeps_raw_rhs() {
        let mut b = LpBuilder::new("e");
        b.add_col("x", 1.0, 0.0, 1.0);
        b.add_row("r", RowSense::Ge, -3.0, &[]);
        let g = featurize(&b.build().unwrap());
        assert_eq!(g.cons_feature(0)[0], -3.0);
    }

    #[test]
    fn empty_lp() {
        let g = featurize(&LpBuilder::new("empty").build().unwrap());
        assert_eq!(graph_stats(&g), (0, 0, 0));
    }

    proptest! {
        #[test]
        fn stats_and_finiteness(seed in 0u64..500, m in 0usize..6, n in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lp = crate::datagen::random_lp(&mut rng, "p", m, n);
            let g = featurize(&lp);
            prop_assert_eq!(graph_stats(&g), (lp.num_rows(), lp.num_cols(), lp.nnz()));
            prop_assert!(g.cons_feats.iter().chain(&g.var_feats).all(|v| v.is_finite()));
            for e in &g.edges {
                prop_assert!(lp.matrix.get(e.row, e.col) != 0.0);
            }
        }

        #[test]
        fn column_relabeling_is_exact(seed in 0u64..500, n in 1usize..9) {
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lp = crate::datagen::random_lp(&mut rng, "p", 4, n);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let p = ColumnPermutation::new(perm.clone(), crate::lp::PermutationSource::Manual).unwrap();
            let g = featurize(&lp);
            let h = featurize(&apply_permutation(&lp, &p).unwrap());
            prop_assert_eq!(&g.cons_feats, &h.cons_feats);
            for (new, &old) in perm.iter().enumerate() {
                prop_assert_eq!(g.var_feature(old), h.var_feature(new));
            }
            let mut ge: Vec<(usize, usize, u64)> = g.edges.iter()
                .map(|e| (e.row, e.col, e.value.to_bits())).collect();
            let mut he: Vec<(usize, usize, u64)> = h.edges.iter()
                .map(|e| (e.row, perm[e.col], e.value.to_bits())).collect();
            ge.sort_unstable();
            he.sort_unstable();
            prop_assert_eq!(ge, he);
        }
    }
}
