//! Named trainable tensors and the checkpoint archive.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const ARCHIVE_FORMAT: &str = "forexsum-tensors";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Matrix>,
    regularized: Vec<bool>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. `regularized` marks it for the L2 penalty
    /// (weights and embeddings, not biases or normalization gains).
    pub fn add(&mut self, name: &str, value: Matrix, regularized: bool) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = self.tensors.len();
        self.names.push(name.to_string());
        self.tensors.push(value);
        self.regularized.push(regularized);
        self.index.insert(name.to_string(), id);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn is_regularized(&self, id: ParamId) -> bool {
        self.regularized[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    /// Σ of squared entries over the regularized tensors.
    pub fn l2_sum(&self) -> f64 {
        self.tensors
            .iter()
            .zip(&self.regularized)
            .filter(|(_, &r)| r)
            .map(|(t, _)| t.sum_squares())
            .sum()
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            tensors: self
                .tensors
                .iter()
                .map(|t| Matrix::zeros(t.rows, t.cols))
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let archive = TensorArchive {
            format: ARCHIVE_FORMAT.to_string(),
            version: ARCHIVE_VERSION,
            tensors: self
                .names
                .iter()
                .zip(&self.tensors)
                .zip(&self.regularized)
                .map(|((name, t), &regularized)| NamedTensor {
                    name: name.clone(),
                    rows: t.rows,
                    cols: t.cols,
                    regularized,
                    data: t.data.clone(),
                })
                .collect(),
        };
        let text = serde_json::to_string(&archive).map_err(|e| Error::Serde(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let archive: TensorArchive =
            serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))?;
        if archive.format != ARCHIVE_FORMAT || archive.version != ARCHIVE_VERSION {
            return Err(Error::Serde(format!(
                "unsupported archive {} v{}",
                archive.format, archive.version
            )));
        }
        let mut store = ParamStore::new();
        for t in archive.tensors {
            if t.rows * t.cols != t.data.len() {
                return Err(Error::Serde(format!("tensor {} has wrong length", t.name)));
            }
            store.add(
                &t.name,
                Matrix::from_vec(t.rows, t.cols, t.data),
                t.regularized,
            );
        }
        Ok(store)
    }

    /// Overwrites values of tensors present in `other` by name, checking shapes.
    pub fn load_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            let src = other
                .id(name)
                .ok_or_else(|| Error::Serde(format!("checkpoint lacks tensor {name}")))?;
            let src = other.get(src);
            if src.shape() != self.tensors[i].shape() {
                return Err(Error::Shape(format!(
                    "tensor {name}: checkpoint {:?} vs model {:?}",
                    src.shape(),
                    self.tensors[i].shape()
                )));
            }
            self.tensors[i] = src.clone();
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorArchive {
    format: String,
    version: u32,
    tensors: Vec<NamedTensor>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    regularized: bool,
    data: Vec<f64>,
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Matrix>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.tensors[id.0]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            t.scale_assign(s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }
}

/// Truncated normal (cut at two standard deviations).
pub fn truncated_normal<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Matrix {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let data = (0..rows * cols)
        .map(|_| loop {
            let z: f64 = normal.sample(rng);
            if z.abs() <= 2.0 {
                break z * std;
            }
        })
        .collect();
    Matrix::from_vec(rows, cols, data)
}
