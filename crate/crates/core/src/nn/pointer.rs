//! Pointer network decoding a permutation of cluster embeddings.
//!
//! The encoder LSTM reads the projected cluster embeddings in input order.
//! The decoder starts from the encoder's final state and a learned start
//! token; at each step additive attention `v . tanh(W_ref enc_i + W_q dec)`
//! scores the clusters, already-chosen clusters are masked out, and the next
//! decoder input is the projected embedding of the chosen cluster.

use rand::Rng;

use super::layers::{Ctx, Linear, Lstm, ParamSet};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug)]
pub enum DecodeMode<'r, R: Rng> {
    Sample(&'r mut R),
    /// Argmax with exact ties going to the lowest index.
    Greedy,
    /// Scores a given permutation.
    Forced(&'r [usize]),
}

#[derive(Debug, Clone)]
pub struct PointerOutput {
    pub perm: Vec<usize>,
    /// Sum of the per-step chosen log-probabilities.
    pub log_prob: Var,
    pub step_log_probs: Vec<f64>,
    /// Tape handles of the per-step log-probabilities.
    pub step_log_prob_vars: Vec<Var>,
    /// Full per-step distributions (masked entries exactly zero).
    pub step_probs: Vec<Vec<f64>>,
}

/// Decoder parameters (θ_P) laid out in a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Pointer {
    pub hidden: usize,
    project: Linear,
    encoder: Lstm,
    decoder: Lstm,
    w_ref: usize,
    w_query: usize,
    score: usize,
    start: usize,
}

impl Pointer {
    pub fn new(
        ps: &mut ParamSet,
        input: usize,
        hidden: usize,
        forget_bias: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let project = Linear::new(ps, "pointer.project", input, hidden, rng);
        let encoder = Lstm::new(ps, "pointer.encoder", hidden, hidden, forget_bias, rng);
        let decoder = Lstm::new(ps, "pointer.decoder", hidden, hidden, forget_bias, rng);
        let w_ref = ps.add_glorot("pointer.attention.w_ref", hidden, hidden, rng);
        let w_query = ps.add_glorot("pointer.attention.w_query", hidden, hidden, rng);
        // A zero score vector makes the untrained policy exactly uniform.
        let score = ps.add("pointer.attention.v", Tensor::zeros(hidden, 1), true);
        let limit = (6.0 / (1 + hidden) as f64).sqrt();
        let start = ps.add(
            "pointer.start",
            Tensor::row_vector((0..hidden).map(|_| rng.gen_range(-limit..limit)).collect()),
            true,
        );
        Self {
            hidden,
            project,
            encoder,
            decoder,
            w_ref,
            w_query,
            score,
            start,
        }
    }

    pub fn forward<R: Rng>(
        &self,
        ctx: &mut Ctx,
        clusters: Var,
        mut mode: DecodeMode<'_, R>,
    ) -> Result<PointerOutput> {
        let k = ctx.tape.value(clusters).rows();
        if k == 0 {
            return Err(Error::InvalidK { k: 0, n: 0 });
        }
        if let DecodeMode::Forced(p) = &mode {
            if p.len() != k {
                return Err(Error::InvalidPermutation(format!(
                    "forced permutation has length {} for {k} clusters",
                    p.len()
                )));
            }
        }
        let x = self.project.forward(ctx, clusters);
        let zeros = Tensor::zeros(1, self.hidden);
        let mut h = ctx.tape.constant(zeros.clone());
        let mut c = ctx.tape.constant(zeros);
        let mut enc_states = Vec::with_capacity(k);
        for i in 0..k {
            let xi = ctx.tape.gather_rows(x, vec![i].into());
            (h, c) = self.encoder.step(ctx, xi, h, c);
            enc_states.push(h);
        }
        let enc = ctx.tape.concat_rows(&enc_states);
        let (w_ref, w_query, v) = (ctx.p(self.w_ref), ctx.p(self.w_query), ctx.p(self.score));
        let refs = ctx.tape.matmul(enc, w_ref);
        let mut input = ctx.p(self.start);

        let mut allowed = vec![true; k];
        let mut perm = Vec::with_capacity(k);
        let mut log_prob: Option<Var> = None;
        let mut step_log_probs = Vec::with_capacity(k);
        let mut step_log_prob_vars = Vec::with_capacity(k);
        let mut step_probs = Vec::with_capacity(k);
        for step in 0..k {
            (h, c) = self.decoder.step(ctx, input, h, c);
            let q = ctx.tape.matmul(h, w_query);
            let u = ctx.tape.add_row(refs, q);
            let u = ctx.tape.tanh(u);
            let scores = ctx.tape.matmul(u, v);
            let values = ctx.tape.value(scores).data().to_vec();
            if values.iter().any(|s| !s.is_finite()) {
                return Err(Error::NonFinite("pointer attention scores".into()));
            }
            let probs = Tape::masked_softmax(&values, &allowed);
            let choice = match &mut mode {
                DecodeMode::Sample(rng) => sample_index(&probs, &allowed, rng.gen::<f64>()),
                DecodeMode::Greedy => greedy_index(&values, &allowed),
                DecodeMode::Forced(p) => {
                    let j = p[step];
                    if j >= k || !allowed[j] {
                        return Err(Error::InvalidPermutation(format!(
                            "forced permutation repeats or exceeds cluster {j}"
                        )));
                    }
                    j
                }
            };
            let (lp, _) = ctx.tape.log_softmax_pick(scores, &allowed, choice);
            step_log_probs.push(ctx.tape.value(lp).item());
            step_log_prob_vars.push(lp);
            step_probs.push(probs);
            log_prob = Some(match log_prob {
                None => lp,
                Some(acc) => ctx.tape.add(acc, lp),
            });
            allowed[choice] = false;
            perm.push(choice);
            input = ctx.tape.gather_rows(x, vec![choice].into());
        }
        ctx.tape.check_finite()?;
        Ok(PointerOutput {
            perm,
            log_prob: log_prob.expect("k >= 1"),
            step_log_probs,
            step_log_prob_vars,
            step_probs,
        })
    }
}

/// Inverse-CDF draw over the allowed entries.
fn sample_index(probs: &[f64], allowed: &[bool], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = None;
    for (j, (&p, &ok)) in probs.iter().zip(allowed).enumerate() {
        if !ok {
            continue;
        }
        acc += p;
        last = Some(j);
        if u < acc {
            return j;
        }
    }
    last.expect("at least one allowed entry")
}

fn greedy_index(scores: &[f64], allowed: &[bool]) -> usize {
    let mut best: Option<usize> = None;
    for (j, &ok) in allowed.iter().enumerate() {
        if ok && best.map_or(true, |b| scores[j] > scores[b]) {
            best = Some(j);
        }
    }
    best.expect("at least one allowed entry")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_index_respects_mask() {
        let probs = [0.5, 0.0, 0.5];
        let allowed = [true, false, true];
        assert_eq!(sample_index(&probs, &allowed, 0.0), 0);
        assert_eq!(sample_index(&probs, &allowed, 0.49), 0);
        assert_eq!(sample_index(&probs, &allowed, 0.5), 2);
        assert_eq!(sample_index(&probs, &allowed, 0.999_999_999_9), 2);
    }

    #[test]
    fn greedy_ties_go_low() {
        assert_eq!(greedy_index(&[1.0, 3.0, 3.0], &[true, true, true]), 1);
        assert_eq!(greedy_index(&[1.0, 3.0, 3.0], &[true, false, true]), 2);
        assert_eq!(greedy_index(&[0.0, 0.0], &[true, true]), 0);
    }
}
