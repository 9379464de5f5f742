use rand_chacha::ChaCha8Rng;

use super::{EncoderConfig, GroupEncoding};
use crate::autodiff::{Tape, Var};
use crate::nn::{Dropout, Linear, INIT_STD};
use crate::params::{truncated_normal, ParamId, ParamStore};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
}

/// Bidirectional LSTM (each direction H/2 wide) with per-unit attention pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub token_emb: ParamId,
    pub layers: Vec<[LstmDirection; 2]>,
    pub pool: Linear,
    pub pool_query: ParamId,
}

impl LstmParams {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        config: &EncoderConfig,
        vocab_size: usize,
    ) -> Self {
        let h = config.hidden;
        let half = h / 2;
        let token_emb = store.add(
            "lstm.token_emb",
            truncated_normal(rng, vocab_size, h, INIT_STD),
            true,
        );
        let layers = (0..config.layers)
            .map(|l| {
                let mut dir = |name: &str| LstmDirection {
                    wx: store.add(
                        &format!("lstm.layer{l}.{name}.wx"),
                        truncated_normal(rng, h, 4 * half, INIT_STD),
                        true,
                    ),
                    wh: store.add(
                        &format!("lstm.layer{l}.{name}.wh"),
                        truncated_normal(rng, half, 4 * half, INIT_STD),
                        true,
                    ),
                    b: store.add(
                        &format!("lstm.layer{l}.{name}.b"),
                        Matrix::zeros(1, 4 * half),
                        false,
                    ),
                };
                [dir("fwd"), dir("bwd")]
            })
            .collect();
        let pool = Linear::new(store, rng, "lstm.pool", h, h);
        let pool_query = store.add(
            "lstm.pool_query",
            truncated_normal(rng, h, 1, INIT_STD),
            true,
        );
        LstmParams {
            token_emb,
            layers,
            pool,
            pool_query,
        }
    }

    fn run_direction(tape: &mut Tape, d: &LstmDirection, x: Var, reverse: bool) -> Var {
        let steps = tape.shape(x).0;
        let half = tape.params().get(d.wh).rows;
        let wx = tape.param(d.wx);
        let wh = tape.param(d.wh);
        let b = tape.param(d.b);
        let xw = tape.affine(x, wx, b);
        let mut h = tape.constant(Matrix::zeros(1, half));
        let mut c = tape.constant(Matrix::zeros(1, half));
        let mut outputs = vec![h; steps];
        let order: Vec<usize> = if reverse {
            (0..steps).rev().collect()
        } else {
            (0..steps).collect()
        };
        for t in order {
            let xt = tape.gather(xw, &[t]);
            let hw = tape.matmul(h, wh);
            let pre = tape.add(xt, hw);
            let i = tape.col_slice(pre, 0, half);
            let i = tape.sigmoid(i);
            let f = tape.col_slice(pre, half, half);
            let f = tape.sigmoid(f);
            let g = tape.col_slice(pre, 2 * half, half);
            let g = tape.tanh(g);
            let o = tape.col_slice(pre, 3 * half, half);
            let o = tape.sigmoid(o);
            let fc = tape.mul(f, c);
            let ig = tape.mul(i, g);
            c = tape.add(fc, ig);
            let tc = tape.tanh(c);
            h = tape.mul(o, tc);
            outputs[t] = h;
        }
        tape.concat_rows(&outputs)
    }

    pub fn encode(&self, tape: &mut Tape, enc: &GroupEncoding, dropout: &mut Dropout) -> Var {
        let x = tape.gather_param(self.token_emb, &enc.token_ids);
        let mut x = dropout.apply(tape, x);
        for [fwd, bwd] in &self.layers {
            let f = Self::run_direction(tape, fwd, x, false);
            let b = Self::run_direction(tape, bwd, x, true);
            let both = tape.concat_cols(&[f, b]);
            x = dropout.apply(tape, both);
        }
        let query = tape.param(self.pool_query);
        let pooled: Vec<Var> = enc
            .spans
            .iter()
            .map(|&(start, end)| {
                let rows: Vec<usize> = (start..end).collect();
                let span = tape.gather(x, &rows);
                let u = self.pool.forward(tape, span);
                let u = tape.tanh(u);
                let e = tape.matmul(u, query);
                let e = tape.transpose(e);
                let alpha = tape.softmax_rows(e);
                tape.matmul(alpha, span)
            })
            .collect();
        tape.concat_rows(&pooled)
    }
}
