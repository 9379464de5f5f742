//! Inter-group aggregation: trade-data query, attention over group
//! summaries, four-way fusion and the up/down classifier.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::nn::{Dropout, Linear, INIT_STD};
use crate::params::{truncated_normal, ParamId, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationParams {
    pub mlp: [Linear; 3],
    /// `H × H` bilinear form between the trade query and group summaries.
    pub wa: ParamId,
    /// `4H → 2` classifier.
    pub out: Linear,
}

impl AggregationParams {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        feature_dim: usize,
        hidden: usize,
    ) -> Self {
        let mlp = [
            Linear::new(store, rng, "agg.mlp0", feature_dim, hidden),
            Linear::new(store, rng, "agg.mlp1", hidden, hidden),
            Linear::new(store, rng, "agg.mlp2", hidden, hidden),
        ];
        let wa = store.add(
            "agg.wa",
            truncated_normal(rng, hidden, hidden, INIT_STD),
            true,
        );
        let out = Linear::new(store, rng, "agg.out", 4 * hidden, 2);
        AggregationParams { mlp, wa, out }
    }
}

/// Three affine + ReLU layers mapping the trade vector (`1 × D`) to `R_t`
/// (`1 × H`), with dropout on the two hidden layers.
pub fn trade_mlp(
    tape: &mut Tape,
    y: Var,
    params: &AggregationParams,
    dropout: &mut Dropout,
) -> Var {
    let mut x = y;
    for (i, layer) in params.mlp.iter().enumerate() {
        let z = layer.forward(tape, x);
        x = tape.relu(z);
        if i < 2 {
            x = dropout.apply(tape, x);
        }
    }
    x
}

/// `att = softmax_i(ReLU(R_t · W_a · G_iᵀ))` over the rows of `summaries` (`L × H`).
pub fn group_attention(tape: &mut Tape, rt: Var, summaries: Var, wa: ParamId) -> Var {
    let wa = tape.param(wa);
    let q = tape.matmul(rt, wa);
    let g = tape.matmul_t(q, summaries);
    let g = tape.relu(g);
    tape.softmax_rows(g)
}

/// `[R_t, R_s, R_t − R_s, R_t ∘ R_s]`.
pub fn fuse(tape: &mut Tape, rt: Var, rs: Var) -> Var {
    let diff = tape.sub(rt, rs);
    let prod = tape.mul(rt, rs);
    tape.concat_cols(&[rt, rs, diff, prod])
}

/// Class probabilities (`1 × 2`, index = label) from the fused vector.
pub fn classify(
    tape: &mut Tape,
    fused: Var,
    params: &AggregationParams,
    dropout: &mut Dropout,
) -> Var {
    let fused = dropout.apply(tape, fused);
    let logits = params.out.forward(tape, fused);
    tape.softmax_rows(logits)
}
