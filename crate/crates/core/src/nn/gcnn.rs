//! Bipartite graph convolution with alternating half-passes.
//!
//! Each round first updates constraint embeddings from their incident
//! variables, then variable embeddings from the updated constraints:
//!
//! ```text
//! c_i <- f_C(c_i, sum_{(i,j) in E} g_C(c_i, v_j, e_ij))
//! v_j <- f_V(v_j, sum_{(i,j) in E} g_V(c_i, v_j, e_ij))
//! ```
//!
//! `g` is a prenormed two-layer perceptron over the concatenation
//! `[target, source, edge]`. Its first layer splits into per-block products
//! computed once per node and gathered onto the edges, and its second layer
//! commutes with the neighbor sum (`sum_e (h_e W + b) = (sum_e h_e) W + deg b`),
//! so the per-edge work is a gather, an add and a ReLU.

use std::rc::Rc;

use rand::Rng;

use super::layers::{Ctx, Linear, ParamSet, PreNorm};
use super::tape::Var;
use super::tensor::Tensor;
use crate::error::Result;
use crate::graph::{BipartiteGraph, CONS_FEATURES, VAR_FEATURES};

/// Graph tensors prepared once per instance.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub num_cons: usize,
    pub num_vars: usize,
    pub cons_feats: Tensor,
    pub var_feats: Tensor,
    /// `E x 1` edge features.
    pub edge_feats: Tensor,
    pub edge_rows: Rc<[usize]>,
    pub edge_cols: Rc<[usize]>,
    pub cons_degree: Tensor,
    pub var_degree: Tensor,
}

impl GraphInput {
    pub fn new(g: &BipartiteGraph) -> Self {
        let mut cons_degree = vec![0.0; g.num_cons];
        let mut var_degree = vec![0.0; g.num_vars];
        for e in &g.edges {
            cons_degree[e.row] += 1.0;
            var_degree[e.col] += 1.0;
        }
        Self {
            num_cons: g.num_cons,
            num_vars: g.num_vars,
            cons_feats: Tensor::from_vec(g.num_cons, CONS_FEATURES, g.cons_feats.clone()),
            var_feats: Tensor::from_vec(g.num_vars, VAR_FEATURES, g.var_feats.clone()),
            edge_feats: Tensor::column_vector(g.edge_values()),
            edge_rows: g.edge_rows().into(),
            edge_cols: g.edge_cols().into(),
            cons_degree: Tensor::column_vector(cons_degree),
            var_degree: Tensor::column_vector(var_degree),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Embedder {
    pre: PreNorm,
    lin: Linear,
}

impl Embedder {
    fn new(ps: &mut ParamSet, name: &str, input: usize, width: usize, rng: &mut impl Rng) -> Self {
        Self {
            pre: PreNorm::new(ps, &format!("{name}.prenorm"), input),
            lin: Linear::new(ps, &format!("{name}.linear"), input, width, rng),
        }
    }

    fn forward(&self, ctx: &mut Ctx, x: Var) -> Var {
        let h = self.pre.forward(ctx, x);
        let h = self.lin.forward(ctx, h);
        ctx.tape.relu(h)
    }
}

/// Update of one node side from the other.
#[derive(Debug, Clone, Copy)]
struct HalfPass {
    pre_target: PreNorm,
    pre_source: PreNorm,
    pre_edge: PreNorm,
    g_target: usize,
    g_source: usize,
    g_edge: usize,
    g_bias: usize,
    g_out: Linear,
    f_pre: PreNorm,
    f_hidden: Linear,
    f_out: Linear,
}

impl HalfPass {
    fn new(ps: &mut ParamSet, name: &str, width: usize, rng: &mut impl Rng) -> Self {
        // Glorot limits of the fused first layer use its full fan-in.
        let limit = (6.0 / (2 * width + 1 + width) as f64).sqrt();
        let mut block = |ps: &mut ParamSet, part: &str, rows: usize| {
            let data = (0..rows * width).map(|_| rng.gen_range(-limit..limit)).collect();
            ps.add(format!("{name}.g.{part}"), Tensor::from_vec(rows, width, data), true)
        };
        let pre_target = PreNorm::new(ps, &format!("{name}.g.prenorm_target"), width);
        let pre_source = PreNorm::new(ps, &format!("{name}.g.prenorm_source"), width);
        let pre_edge = PreNorm::new(ps, &format!("{name}.g.prenorm_edge"), 1);
        let g_target = block(ps, "w_target", width);
        let g_source = block(ps, "w_source", width);
        let g_edge = block(ps, "w_edge", 1);
        let g_bias = ps.add(format!("{name}.g.b1"), Tensor::zeros(1, width), true);
        let g_out = Linear::new(ps, &format!("{name}.g.out"), width, width, rng);
        let f_pre = PreNorm::new(ps, &format!("{name}.f.prenorm"), 2 * width);
        let f_hidden = Linear::new(ps, &format!("{name}.f.hidden"), 2 * width, width, rng);
        let f_out = Linear::new(ps, &format!("{name}.f.out"), width, width, rng);
        Self {
            pre_target,
            pre_source,
            pre_edge,
            g_target,
            g_source,
            g_edge,
            g_bias,
            g_out,
            f_pre,
            f_hidden,
            f_out,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn forward(
        &self,
        ctx: &mut Ctx,
        target: Var,
        source: Var,
        edges: Var,
        target_idx: &Rc<[usize]>,
        source_idx: &Rc<[usize]>,
        target_degree: Var,
    ) -> Var {
        let num_targets = ctx.tape.value(target).rows();
        let t = self.pre_target.forward(ctx, target);
        let s = self.pre_source.forward(ctx, source);
        let e = self.pre_edge.forward(ctx, edges);
        let (wt, ws, we, b1) = (
            ctx.p(self.g_target),
            ctx.p(self.g_source),
            ctx.p(self.g_edge),
            ctx.p(self.g_bias),
        );
        let (w2, b2) = (ctx.p(self.g_out.w), ctx.p(self.g_out.b));
        let tape = &mut ctx.tape;
        let pt = tape.matmul(t, wt);
        let ps = tape.matmul(s, ws);
        let pe = tape.matmul(e, we);
        let gt = tape.gather_rows(pt, target_idx.clone());
        let gs = tape.gather_rows(ps, source_idx.clone());
        let h = tape.add(gt, gs);
        let h = tape.add(h, pe);
        let h = tape.add_row(h, b1);
        let h = tape.relu(h);
        let summed = tape.scatter_add_rows(h, target_idx.clone(), num_targets);
        let msg = tape.matmul(summed, w2);
        let bias = tape.matmul(target_degree, b2);
        let msg = tape.add(msg, bias);

        let joined = tape.concat_cols(target, msg);
        let z = self.f_pre.forward(ctx, joined);
        let z = self.f_hidden.forward(ctx, z);
        let z = ctx.tape.relu(z);
        self.f_out.forward(ctx, z)
    }
}

#[derive(Debug, Clone, Copy)]
struct Round {
    cons: HalfPass,
    vars: HalfPass,
}

/// Encoder parameters (θ_G) laid out in a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Gcnn {
    pub width: usize,
    embed_cons: Embedder,
    embed_vars: Embedder,
    rounds: Vec<Round>,
}

impl Gcnn {
    pub fn new(ps: &mut ParamSet, width: usize, rounds: usize, rng: &mut impl Rng) -> Self {
        let embed_cons = Embedder::new(ps, "gcnn.embed_cons", CONS_FEATURES, width, rng);
        let embed_vars = Embedder::new(ps, "gcnn.embed_vars", VAR_FEATURES, width, rng);
        let rounds = (0..rounds)
            .map(|r| Round {
                cons: HalfPass::new(ps, &format!("gcnn.round{r}.cons"), width, rng),
                vars: HalfPass::new(ps, &format!("gcnn.round{r}.vars"), width, rng),
            })
            .collect();
        Self {
            width,
            embed_cons,
            embed_vars,
            rounds,
        }
    }

    /// Number of prenorm layers in forward order.
    pub fn num_prenorms(&self) -> usize {
        2 + 8 * self.rounds.len()
    }

    pub(crate) fn prenorms(&self) -> Vec<PreNorm> {
        let mut out = vec![self.embed_cons.pre, self.embed_vars.pre];
        for r in &self.rounds {
            for h in [&r.cons, &r.vars] {
                out.extend([h.pre_target, h.pre_source, h.pre_edge, h.f_pre]);
            }
        }
        out
    }

    /// Variable embeddings (`n x width`).
    pub fn forward(&self, ctx: &mut Ctx, g: &GraphInput) -> Result<Var> {
        let tape = &mut ctx.tape;
        let cons_raw = tape.constant(g.cons_feats.clone());
        let vars_raw = tape.constant(g.var_feats.clone());
        let edges = tape.constant(g.edge_feats.clone());
        let cons_deg = tape.constant(g.cons_degree.clone());
        let var_deg = tape.constant(g.var_degree.clone());
        let mut c = self.embed_cons.forward(ctx, cons_raw);
        let mut v = self.embed_vars.forward(ctx, vars_raw);
        for r in &self.rounds {
            c = r
                .cons
                .forward(ctx, c, v, edges, &g.edge_rows, &g.edge_cols, cons_deg);
            v = r
                .vars
                .forward(ctx, v, c, edges, &g.edge_cols, &g.edge_rows, var_deg);
        }
        ctx.tape.check_finite()?;
        Ok(v)
    }
}
