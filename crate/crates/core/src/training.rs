//! Mini-batch Adam training with L2 regularization, learning-rate decay and
//! early stopping on dev macro-F1; plus a finite-difference gradient check.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::extraction::TopK;
use crate::grouping::GroupingMethod;
use crate::model::{nll, Model, PreparedSample, Variant};
use crate::nn::Dropout;
use crate::parallel;
use crate::params::{Gradients, ParamStore};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub dropout: f64,
    pub l2: f64,
    pub decay_start: usize,
    pub decay_factor: f64,
    pub patience: usize,
    pub grouping: GroupingMethod,
    pub variant: Variant,
    pub k: TopK,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            batch_size: 32,
            max_epochs: 60,
            dropout: 0.2,
            l2: 0.015,
            decay_start: 10,
            decay_factor: 0.95,
            patience: 8,
            grouping: GroupingMethod::Category,
            variant: Variant::Full,
            k: TopK::Top(3),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("train.lr must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return fail("train.batch_size, train.max_epochs and train.patience must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("train.dropout must be in [0, 1)");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return fail("train.l2 must be non-negative");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return fail("train.decay_factor must be in (0, 1]");
        }
        Ok(())
    }

    /// Learning rate used during 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decayed = epoch.saturating_sub(self.decay_start);
        self.lr * self.decay_factor.powi(decayed as i32)
    }
}

/// `(λ/2) · Σ w²` over regularized tensors.
pub fn l2_penalty(store: &ParamStore, lambda: f64) -> f64 {
    0.5 * lambda * store.l2_sum()
}

/// `−ln max(p[label], 1e-12) + (λ/2) · Σ w²`.
pub fn loss_value(probs: &[f64], label: u8, store: &ParamStore, lambda: f64) -> f64 {
    -probs[label as usize].max(crate::model::PROB_FLOOR).ln() + l2_penalty(store, lambda)
}

pub fn add_l2_gradient(store: &ParamStore, grads: &mut Gradients, lambda: f64) {
    if lambda == 0.0 {
        return;
    }
    for id in store.ids() {
        if store.is_regularized(id) {
            let w = store.get(id);
            for (g, x) in grads.tensors[id.0].data.iter_mut().zip(&w.data) {
                *g += lambda * x;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Matrix> = store
            .tensors()
            .iter()
            .map(|t| Matrix::zeros(t.rows, t.cols))
            .collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (i, param) in store.tensors_mut().iter_mut().enumerate() {
            let g = &grads.tensors[i].data;
            let m = &mut self.m[i].data;
            let v = &mut self.v[i].data;
            for j in 0..param.data.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                param.data[j] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Dropout stream for one sample visit, independent of batching and threads.
pub fn sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

/// Summed NLL and summed gradients over `batch` (indices into `samples`).
/// Per-sample gradients are reduced in batch order on both paths.
pub fn batch_gradients(
    model: &Model,
    samples: &[PreparedSample],
    batch: &[usize],
    dropout: f64,
    seed: u64,
    epoch: usize,
    use_parallel: bool,
) -> Result<(f64, Gradients)> {
    let one = |_: usize, &i: &usize| {
        let mut rng = sample_rng(seed, epoch, i);
        let mut d = if dropout > 0.0 {
            Dropout::new(dropout, &mut rng)
        } else {
            Dropout::off()
        };
        model.sample_gradients(&samples[i], &mut d)
    };
    let parts = if use_parallel {
        parallel::map_indexed(batch, one)
    } else {
        parallel::map_indexed_seq(batch, one)
    };
    let mut total = model.store.zero_grads();
    let mut loss = 0.0;
    for p in parts {
        let (l, g) = p?;
        loss += l;
        total.add_assign(&g);
    }
    Ok((loss, total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_macro_f1: f64,
    pub dev_mcc: f64,
    pub lr: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_macro_f1: f64,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for e in &self.epochs {
            let line = serde_json::to_string(e).map_err(|e| Error::Serde(e.to_string()))?;
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Trains `model` in place and returns it holding the best-dev parameters.
pub fn train(
    mut model: Model,
    train_set: &[PreparedSample],
    dev_set: &[PreparedSample],
    config: &TrainConfig,
    seed: u64,
) -> Result<(Model, TrainHistory)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    if dev_set.is_empty() {
        return Err(Error::InsufficientData("dev set is empty".into()));
    }
    let mut adam = Adam::new(&model.store);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_5a3b1e5);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best_store = model.store.clone();
    let mut best = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut epochs = Vec::new();
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let (loss, mut grads) =
                batch_gradients(&model, train_set, batch, config.dropout, seed, epoch, true)?;
            let n = batch.len() as f64;
            grads.scale(1.0 / n);
            add_l2_gradient(&model.store, &mut grads, config.l2);
            let batch_loss = loss / n + l2_penalty(&model.store, config.l2);
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::NanLoss { epoch, batch: b });
            }
            loss_sum += batch_loss;
            batches += 1;
            adam.step(&mut model.store, &grads, lr);
        }
        let (report, _) = evaluate(&model, dev_set, seed)?;
        let improved = report.macro_f1 > best;
        if improved {
            best = report.macro_f1;
            best_epoch = epoch;
            best_store = model.store.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        log::info!(
            "epoch {epoch}: loss {:.5} dev f1 {:.4} mcc {:.4} lr {lr:.6}",
            loss_sum / batches as f64,
            report.macro_f1,
            report.mcc
        );
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            dev_macro_f1: report.macro_f1,
            dev_mcc: report.mcc,
            lr,
            improved,
        });
        if stale >= config.patience {
            stopped_early = epoch < config.max_epochs;
            break;
        }
    }
    model.store = best_store;
    Ok((
        model,
        TrainHistory {
            epochs,
            best_epoch,
            best_dev_macro_f1: best,
            stopped_early,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub coords: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn failures(&self) -> Vec<&TensorCheck> {
        self.tensors
            .iter()
            .filter(|t| !(t.max_rel_error < self.tolerance))
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

/// Loss of one sample (NLL + L2) with dropout off.
pub fn sample_loss(
    model: &Model,
    store: &ParamStore,
    sample: &PreparedSample,
    lambda: f64,
) -> Result<f64> {
    let mut tape = Tape::new(store);
    let out = model.forward(&mut tape, sample, &mut Dropout::off())?;
    let l = nll(&mut tape, out.probs, sample.label);
    Ok(tape.scalar(l) + l2_penalty(store, lambda))
}

/// Analytic gradients of one sample's loss (dropout off).
pub fn analytic_gradients(
    model: &Model,
    sample: &PreparedSample,
    lambda: f64,
) -> Result<Gradients> {
    let (_, mut g) = model.sample_gradients(sample, &mut Dropout::off())?;
    add_l2_gradient(&model.store, &mut g, lambda);
    Ok(g)
}

/// Compares `analytic` against central differences (step 1e-5) on up to
/// `coords` random entries per tensor. The error measure is
/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(
    model: &Model,
    sample: &PreparedSample,
    analytic: &Gradients,
    lambda: f64,
    coords: usize,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    const STEP: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = model.store.clone();
    let mut tensors = Vec::new();
    for id in model.store.ids() {
        let n = model.store.get(id).len();
        let picks: Vec<usize> = if n <= coords {
            (0..n).collect()
        } else {
            (0..coords).map(|_| rng.gen_range(0..n)).collect()
        };
        let mut worst: f64 = 0.0;
        for &j in &picks {
            let orig = store.get(id).data[j];
            store.get_mut(id).data[j] = orig + STEP;
            let plus = sample_loss(model, &store, sample, lambda)?;
            store.get_mut(id).data[j] = orig - STEP;
            let minus = sample_loss(model, &store, sample, lambda)?;
            store.get_mut(id).data[j] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic.tensors[id.0].data[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
        }
        tensors.push(TensorCheck {
            name: model.store.name(id).to_string(),
            coords: picks.len(),
            max_rel_error: worst,
        });
    }
    Ok(GradCheckReport { tensors, tolerance })
}
