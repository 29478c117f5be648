use rand::Rng;

use super::layers::{Ctx, Linear, ParamSet};
use super::tape::Var;
use super::tensor::Tensor;

/// Value baseline (θ_c): mean-pooled variable embeddings through a two-layer
/// perceptron. It reads embedding values only, so its loss never reaches
/// the encoder.
#[derive(Debug, Clone)]
pub struct Critic {
    hidden: Linear,
    out: Linear,
}

impl Critic {
    pub fn new(ps: &mut ParamSet, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            hidden: Linear::new(ps, "critic.hidden", input, hidden, rng),
            out: Linear::new(ps, "critic.out", hidden, 1, rng),
        }
    }

    /// Scalar prediction from detached `n x width` embeddings.
    pub fn forward(&self, ctx: &mut Ctx, embeddings: &Tensor) -> Var {
        let x = ctx.tape.constant(embeddings.clone());
        let pooled = ctx.tape.mean_rows(x);
        let h = self.hidden.forward(ctx, pooled);
        let h = ctx.tape.relu(h);
        self.out.forward(ctx, h)
    }
}
