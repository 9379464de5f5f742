//! Small layer helpers shared by the encoder and the aggregation head.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::params::{truncated_normal, ParamId, ParamStore};
use crate::tensor::Matrix;

pub const INIT_STD: f64 = 0.02;
pub const LN_EPS: f64 = 1e-12;

/// Inverted dropout. Without an rng it is the identity.
pub struct Dropout<'r> {
    rate: f64,
    rng: Option<&'r mut ChaCha8Rng>,
}

impl<'r> Dropout<'r> {
    pub fn off() -> Self {
        Dropout {
            rate: 0.0,
            rng: None,
        }
    }

    pub fn new(rate: f64, rng: &'r mut ChaCha8Rng) -> Self {
        Dropout {
            rate,
            rng: Some(rng),
        }
    }

    pub fn is_active(&self) -> bool {
        self.rng.is_some() && self.rate > 0.0
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Var {
        let rate = self.rate;
        let Some(rng) = self.rng.as_deref_mut() else {
            return x;
        };
        if rate <= 0.0 {
            return x;
        }
        let (rows, cols) = tape.shape(x);
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..rows * cols)
            .map(|_| {
                if rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        tape.mul_const(x, Matrix::from_vec(rows, cols, mask))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        inputs: usize,
        outputs: usize,
    ) -> Self {
        Linear {
            w: store.add(
                &format!("{name}.w"),
                truncated_normal(rng, inputs, outputs, INIT_STD),
                true,
            ),
            b: store.add(&format!("{name}.b"), Matrix::zeros(1, outputs), false),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        tape.affine(x, w, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        LayerNorm {
            gamma: store.add(
                &format!("{name}.gamma"),
                Matrix::filled(1, width, 1.0),
                false,
            ),
            beta: store.add(&format!("{name}.beta"), Matrix::zeros(1, width), false),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let g = tape.param(self.gamma);
        let b = tape.param(self.beta);
        tape.layer_norm(x, g, b, LN_EPS)
    }
}
