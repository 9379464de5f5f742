//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! read from a borrowed [`ParamStore`]; `backward` returns gradients aligned
//! with that store. Tapes are cheap, single-use and never shared between
//! threads, so batch evaluation builds one tape per sample.

use std::collections::HashMap;

use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::{dot, sigmoid, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    GatherParam(ParamId, Vec<usize>),
    Gather(Var, Vec<usize>),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    ColSlice(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MulConst(Var, Matrix),
    Sum(Var),
    Transpose(Var),
    Element(Var, usize),
    LnFloor(Var, f64),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

pub struct Tape<'a> {
    params: &'a ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'a ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.len(), 1);
        m.data[0]
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    /// The parameter as a tape variable. Repeated calls share one node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let value = self.params.get(id).clone();
        let v = self.push(value, Op::Param(id));
        self.param_vars.insert(id, v);
        v
    }

    /// Rows of a parameter table (embedding lookup).
    pub fn gather_param(&mut self, id: ParamId, rows: &[usize]) -> Var {
        let table = self.params.get(id);
        let mut out = Matrix::zeros(rows.len(), table.cols);
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(table.row(r));
        }
        self.push(out, Op::GatherParam(id, rows.to_vec()))
    }

    pub fn gather(&mut self, x: Var, rows: &[usize]) -> Var {
        let src = self.value(x);
        let mut out = Matrix::zeros(rows.len(), src.cols);
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(src.row(r));
        }
        self.push(out, Op::Gather(x, rows.to_vec()))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_t(self.value(b));
        self.push(out, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    /// Adds a `1 × m` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let rv = self.value(row);
        let av = self.value(a);
        assert_eq!(rv.rows, 1, "add_row expects a row vector");
        assert_eq!(rv.cols, av.cols, "add_row width mismatch");
        let mut out = av.clone();
        for r in 0..out.rows {
            for (o, b) in out.row_mut(r).iter_mut().zip(&rv.data) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    /// `x · w + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        self.push(out, Op::Gelu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let mut out = Matrix::zeros(src.rows, src.cols);
        for r in 0..src.rows {
            let row = crate::tensor::softmax(src.row(r));
            out.row_mut(r).copy_from_slice(&row);
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Row-wise layer normalization with gain `gamma` and shift `beta` (both `1 × m`).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let g = self.value(gamma);
        let b = self.value(beta);
        let (rows, cols) = xv.shape();
        let mut xhat = Matrix::zeros(rows, cols);
        let mut out = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for c in 0..cols {
                let h = (row[c] - mean) * is;
                xhat.set(r, c, h);
                out.set(r, c, h * g.data[c] + b.data[c]);
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    pub fn col_slice(&mut self, a: Var, start: usize, width: usize) -> Var {
        let src = self.value(a);
        assert!(start + width <= src.cols, "col_slice out of range");
        let mut out = Matrix::zeros(src.rows, width);
        for r in 0..src.rows {
            out.row_mut(r)
                .copy_from_slice(&src.row(r)[start..start + width]);
        }
        self.push(out, Op::ColSlice(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[offset..offset + v.cols].copy_from_slice(v.row(r));
            }
            offset += v.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&v.data);
            rows += v.rows;
        }
        self.push(
            Matrix::from_vec(rows, cols, data),
            Op::ConcatRows(parts.to_vec()),
        )
    }

    /// Elementwise product with a constant (dropout masks).
    pub fn mul_const(&mut self, a: Var, mask: Matrix) -> Var {
        let out = self.value(a).zip_map(&mask, |x, m| x * m);
        self.push(out, Op::MulConst(a, mask))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::scalar(s), Op::Sum(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    /// The flat-indexed element of `a` as a `1 × 1` variable.
    pub fn element(&mut self, a: Var, index: usize) -> Var {
        let v = self.value(a).data[index];
        self.push(Matrix::scalar(v), Op::Element(a, index))
    }

    /// `ln(max(a, floor))`; zero gradient below the floor.
    pub fn ln_floor(&mut self, a: Var, floor: f64) -> Var {
        let out = self.value(a).map(|x| x.max(floor).ln());
        self.push(out, Op::LnFloor(a, floor))
    }

    /// Gradients of `sum(output)` with respect to every parameter.
    pub fn backward(&self, output: Var) -> Gradients {
        let mut param_grads = self.params.zero_grads();
        let mut grads: Vec<Option<Matrix>> = (0..=output.0).map(|_| None).collect();
        let out = self.value(output);
        grads[output.0] = Some(Matrix::filled(out.rows, out.cols, 1.0));

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => param_grads.tensors[id.0].add_assign(&g),
                Op::GatherParam(id, rows) => {
                    let target = &mut param_grads.tensors[id.0];
                    for (r, &src) in rows.iter().enumerate() {
                        for (t, v) in target.row_mut(src).iter_mut().zip(g.row(r)) {
                            *t += v;
                        }
                    }
                }
                Op::Gather(x, rows) => {
                    let xs = self.value(*x).shape();
                    let mut dx = Matrix::zeros(xs.0, xs.1);
                    for (r, &src) in rows.iter().enumerate() {
                        for (t, v) in dx.row_mut(src).iter_mut().zip(g.row(r)) {
                            *t += v;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul_t(self.value(*b));
                    let db = self.value(*a).t_matmul(&g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMulT(a, b) => {
                    // out = a bᵀ: da = g b, db = gᵀ a
                    let da = g.matmul(self.value(*b));
                    let db = g.t_matmul(self.value(*a));
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|v| -v));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.value(*b), |x, y| x * y);
                    let db = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::AddRow(a, row) => {
                    let mut dr = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (d, v) in dr.data.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *row, dr);
                    accumulate(&mut grads, *a, g);
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    accumulate(&mut grads, *a, g.map(|v| v * s));
                }
                Op::Relu(a) => {
                    let dx = g.zip_map(self.value(*a), |d, x| if x > 0.0 { d } else { 0.0 });
                    accumulate(&mut grads, *a, dx);
                }
                Op::Sigmoid(a) => {
                    let dx = g.zip_map(&node.value, |d, y| d * y * (1.0 - y));
                    accumulate(&mut grads, *a, dx);
                }
                Op::Tanh(a) => {
                    let dx = g.zip_map(&node.value, |d, y| d * (1.0 - y * y));
                    accumulate(&mut grads, *a, dx);
                }
                Op::Gelu(a) => {
                    let dx = g.zip_map(self.value(*a), |d, x| d * gelu_grad(x));
                    accumulate(&mut grads, *a, dx);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let inner = dot(yr, gr);
                        for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                            *d = yr[c] * (gr[c] - inner);
                        }
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gamma);
                    let (rows, cols) = xhat.shape();
                    let mut dgamma = Matrix::zeros(1, cols);
                    let mut dbeta = Matrix::zeros(1, cols);
                    let mut dx = Matrix::zeros(rows, cols);
                    let n = cols as f64;
                    for r in 0..rows {
                        let gr = g.row(r);
                        let hr = xhat.row(r);
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for c in 0..cols {
                            dgamma.data[c] += gr[c] * hr[c];
                            dbeta.data[c] += gr[c];
                            let dh = gr[c] * gv.data[c];
                            sum_dh += dh;
                            sum_dh_h += dh * hr[c];
                        }
                        let is = inv_std[r];
                        for c in 0..cols {
                            let dh = gr[c] * gv.data[c];
                            dx.set(r, c, is / n * (n * dh - sum_dh - hr[c] * sum_dh_h));
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *gamma, dgamma);
                    accumulate(&mut grads, *beta, dbeta);
                }
                Op::ColSlice(a, start) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut dx = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        dx.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *a, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = self.value(p).shape();
                        let mut dp = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            dp.row_mut(r)
                                .copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        accumulate(&mut grads, p, dp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = self.value(p).shape();
                        let dp = Matrix::from_vec(
                            rows,
                            cols,
                            g.data[offset * cols..(offset + rows) * cols].to_vec(),
                        );
                        offset += rows;
                        accumulate(&mut grads, p, dp);
                    }
                }
                Op::MulConst(a, mask) => {
                    accumulate(&mut grads, *a, g.zip_map(mask, |d, m| d * m));
                }
                Op::Sum(a) => {
                    let (rows, cols) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Matrix::filled(rows, cols, g.data[0]));
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Element(a, index) => {
                    let (rows, cols) = self.value(*a).shape();
                    let mut dx = Matrix::zeros(rows, cols);
                    dx.data[*index] = g.data[0];
                    accumulate(&mut grads, *a, dx);
                }
                Op::LnFloor(a, floor) => {
                    let floor = *floor;
                    let dx = g.zip_map(self.value(*a), |d, x| if x > floor { d / x } else { 0.0 });
                    accumulate(&mut grads, *a, dx);
                }
            }
        }
        param_grads
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}
