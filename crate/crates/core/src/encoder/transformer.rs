use rand_chacha::ChaCha8Rng;

use super::{EncoderConfig, GroupEncoding};
use crate::autodiff::{Tape, Var};
use crate::nn::{Dropout, LayerNorm, Linear, INIT_STD};
use crate::params::{truncated_normal, ParamId, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerParams {
    pub token_emb: ParamId,
    pub segment_emb: ParamId,
    pub position_emb: ParamId,
    pub emb_ln: LayerNorm,
    pub layers: Vec<Block>,
    heads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub ln2: LayerNorm,
}

impl TransformerParams {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        config: &EncoderConfig,
        vocab_size: usize,
    ) -> Self {
        let h = config.hidden;
        let token_emb = store.add(
            "enc.token_emb",
            truncated_normal(rng, vocab_size, h, INIT_STD),
            true,
        );
        let segment_emb = store.add(
            "enc.segment_emb",
            truncated_normal(rng, 2, h, INIT_STD),
            true,
        );
        let position_emb = store.add(
            "enc.position_emb",
            truncated_normal(rng, config.max_len, h, INIT_STD),
            true,
        );
        let emb_ln = LayerNorm::new(store, "enc.emb_ln", h);
        let layers = (0..config.layers)
            .map(|l| {
                let p = format!("enc.layer{l}");
                Block {
                    q: Linear::new(store, rng, &format!("{p}.q"), h, h),
                    k: Linear::new(store, rng, &format!("{p}.k"), h, h),
                    v: Linear::new(store, rng, &format!("{p}.v"), h, h),
                    o: Linear::new(store, rng, &format!("{p}.o"), h, h),
                    ln1: LayerNorm::new(store, &format!("{p}.ln1"), h),
                    ff1: Linear::new(store, rng, &format!("{p}.ff1"), h, config.ffn),
                    ff2: Linear::new(store, rng, &format!("{p}.ff2"), config.ffn, h),
                    ln2: LayerNorm::new(store, &format!("{p}.ln2"), h),
                }
            })
            .collect();
        TransformerParams {
            token_emb,
            segment_emb,
            position_emb,
            emb_ln,
            layers,
            heads: config.heads,
        }
    }

    pub fn encode(&self, tape: &mut Tape, enc: &GroupEncoding, dropout: &mut Dropout) -> Var {
        let max_len = tape.params().get(self.position_emb).rows;
        assert!(
            enc.len() <= max_len,
            "sequence of {} exceeds max length {max_len}",
            enc.len()
        );
        let segments: Vec<usize> = enc.segments.iter().map(|s| s.id()).collect();
        let tok = tape.gather_param(self.token_emb, &enc.token_ids);
        let seg = tape.gather_param(self.segment_emb, &segments);
        let pos = tape.gather_param(self.position_emb, &enc.positions);
        let x = tape.add(tok, seg);
        let x = tape.add(x, pos);
        let x = self.emb_ln.forward(tape, x);
        let mut x = dropout.apply(tape, x);
        for block in &self.layers {
            x = self.block(tape, block, x, dropout);
        }
        tape.gather(x, &enc.cls_positions)
    }

    fn block(&self, tape: &mut Tape, b: &Block, x: Var, dropout: &mut Dropout) -> Var {
        let h = tape.shape(x).1;
        let dh = h / self.heads;
        let q = b.q.forward(tape, x);
        let k = b.k.forward(tape, x);
        let v = b.v.forward(tape, x);
        let scale = 1.0 / (dh as f64).sqrt();
        let heads: Vec<Var> = (0..self.heads)
            .map(|i| {
                let qi = tape.col_slice(q, i * dh, dh);
                let ki = tape.col_slice(k, i * dh, dh);
                let vi = tape.col_slice(v, i * dh, dh);
                let scores = tape.matmul_t(qi, ki);
                let scores = tape.scale(scores, scale);
                let probs = tape.softmax_rows(scores);
                tape.matmul(probs, vi)
            })
            .collect();
        let ctx = tape.concat_cols(&heads);
        let attn = b.o.forward(tape, ctx);
        let attn = dropout.apply(tape, attn);
        let x = tape.add(x, attn);
        let x = b.ln1.forward(tape, x);

        let ff = b.ff1.forward(tape, x);
        let ff = tape.gelu(ff);
        let ff = b.ff2.forward(tape, ff);
        let ff = dropout.apply(tape, ff);
        let x2 = tape.add(x, ff);
        b.ln2.forward(tape, x2)
    }
}
