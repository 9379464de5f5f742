//! Affinity propagation over a dense similarity matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Self-similarity placed on the diagonal before message passing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PreferenceRepr", into = "PreferenceRepr")]
pub enum Preference {
    /// Median of the off-diagonal similarities.
    Median,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PreferenceRepr {
    Value(f64),
    Name(String),
}

impl TryFrom<PreferenceRepr> for Preference {
    type Error = String;

    fn try_from(r: PreferenceRepr) -> std::result::Result<Self, String> {
        match r {
            PreferenceRepr::Value(v) => Ok(Preference::Value(v)),
            PreferenceRepr::Name(s) if s == "median" => Ok(Preference::Median),
            PreferenceRepr::Name(s) => Err(format!(
                "preference must be a number or \"median\", got {s:?}"
            )),
        }
    }
}

impl From<Preference> for PreferenceRepr {
    fn from(p: Preference) -> Self {
        match p {
            Preference::Median => PreferenceRepr::Name("median".into()),
            Preference::Value(v) => PreferenceRepr::Value(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct APConfig {
    pub damping: f64,
    pub max_iter: usize,
    pub convergence_iter: usize,
    pub preference: Preference,
}

impl Default for APConfig {
    fn default() -> Self {
        APConfig {
            damping: 0.5,
            max_iter: 200,
            convergence_iter: 15,
            preference: Preference::Median,
        }
    }
}

impl APConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..1.0).contains(&self.damping) {
            return Err(Error::Config(format!(
                "ap.damping must be in [0.5, 1), got {}",
                self.damping
            )));
        }
        if self.max_iter == 0 || self.convergence_iter == 0 {
            return Err(Error::Config(
                "ap.max_iter and ap.convergence_iter must be positive".into(),
            ));
        }
        if let Preference::Value(v) = self.preference {
            if !v.is_finite() {
                return Err(Error::Config("ap.preference must be finite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster id per point; ids are ordered by exemplar index.
    pub labels: Vec<usize>,
    /// Exemplar point index per cluster.
    pub exemplars: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

impl Clustering {
    pub fn n_clusters(&self) -> usize {
        self.exemplars.len()
    }

    fn from_exemplar_of(exemplar_of: &[usize], iterations: usize, converged: bool) -> Self {
        let mut exemplars = exemplar_of.to_vec();
        exemplars.sort_unstable();
        exemplars.dedup();
        let labels = exemplar_of
            .iter()
            .map(|e| exemplars.binary_search(e).expect("exemplar listed"))
            .collect();
        Clustering {
            labels,
            exemplars,
            iterations,
            converged,
        }
    }
}

pub fn median_off_diagonal(s: &Matrix) -> f64 {
    let n = s.rows;
    let mut v: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&k| k != i).map(move |k| (i, k)))
        .map(|(i, k)| s.get(i, k))
        .collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Similarity matrix with the configured preference on the diagonal.
pub fn with_preference(s: &Matrix, preference: Preference) -> Matrix {
    let p = match preference {
        Preference::Median => median_off_diagonal(s),
        Preference::Value(v) => v,
    };
    let mut out = s.clone();
    for k in 0..s.rows {
        out.set(k, k, p);
    }
    out
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Clusters points given pairwise similarities. The diagonal of `s` is
/// ignored and replaced by the configured preference.
pub fn affinity_propagation(s: &Matrix, config: &APConfig) -> Result<Clustering> {
    config.validate()?;
    if s.rows != s.cols {
        return Err(Error::Shape(format!(
            "similarity matrix is {}x{}",
            s.rows, s.cols
        )));
    }
    if s.data.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("similarity matrix contains NaN".into()));
    }
    let n = s.rows;
    if n == 0 {
        return Ok(Clustering::from_exemplar_of(&[], 0, true));
    }
    if n == 1 {
        return Ok(Clustering::from_exemplar_of(&[0], 0, true));
    }
    let mut s = with_preference(s, config.preference);

    // Degenerate input: every similarity and the preference coincide.
    let first_off = s.get(0, 1);
    let all_equal_off = (0..n).all(|i| (0..n).all(|k| i == k || s.get(i, k) == first_off));
    if all_equal_off {
        let p = s.get(0, 0);
        let exemplar_of: Vec<usize> = if p > first_off {
            (0..n).collect()
        } else {
            vec![0; n]
        };
        return Ok(Clustering::from_exemplar_of(&exemplar_of, 0, true));
    }

    // Exact ties: joining an existing exemplar beats founding a new one,
    // then lower candidate indices win.
    let scale = s
        .data
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let tau = scale * 1e-9 / n as f64;
    for i in 0..n {
        for k in 0..n {
            let founding = if i == k { scale * 1e-6 } else { 0.0 };
            let v = s.get(i, k) - tau * k as f64 - founding;
            s.set(i, k, v);
        }
    }

    let lambda = config.damping;
    let mut r = Matrix::zeros(n, n);
    let mut a = Matrix::zeros(n, n);
    let mut history = vec![vec![false; n]; config.convergence_iter];
    let mut iterations = 0;
    let mut converged = false;
    let mut row = vec![0.0; n];

    for it in 0..config.max_iter {
        iterations = it + 1;
        for i in 0..n {
            for k in 0..n {
                row[k] = a.get(i, k) + s.get(i, k);
            }
            let best = argmax(row.iter().copied());
            let first = row[best];
            let second = (0..n)
                .filter(|&k| k != best)
                .map(|k| row[k])
                .fold(f64::NEG_INFINITY, f64::max);
            for k in 0..n {
                let competitor = if k == best { second } else { first };
                let new = s.get(i, k) - competitor;
                let old = r.get(i, k);
                r.set(i, k, lambda * old + (1.0 - lambda) * new);
            }
        }
        for k in 0..n {
            let positive: f64 = (0..n)
                .filter(|&i| i != k)
                .map(|i| r.get(i, k).max(0.0))
                .sum();
            for i in 0..n {
                let new = if i == k {
                    positive
                } else {
                    (r.get(k, k) + positive - r.get(i, k).max(0.0)).min(0.0)
                };
                let old = a.get(i, k);
                a.set(i, k, lambda * old + (1.0 - lambda) * new);
            }
        }

        let e: Vec<bool> = (0..n).map(|k| a.get(k, k) + r.get(k, k) > 0.0).collect();
        let n_exemplars = e.iter().filter(|&&x| x).count();
        history[it % config.convergence_iter] = e;
        if it + 1 >= config.convergence_iter {
            let stable = (0..n).all(|k| {
                let on = history.iter().filter(|h| h[k]).count();
                on == 0 || on == config.convergence_iter
            });
            if stable && n_exemplars > 0 {
                converged = true;
                break;
            }
        }
    }

    let last = &history[(iterations - 1) % config.convergence_iter];
    let mut exemplars: Vec<usize> = (0..n).filter(|&k| last[k]).collect();
    if exemplars.is_empty() {
        // No exemplar emerged: fall back to the single best-supported point.
        let best = argmax((0..n).map(|k| (0..n).map(|i| s.get(i, k)).sum::<f64>()));
        return Ok(Clustering::from_exemplar_of(
            &vec![best; n],
            iterations,
            converged,
        ));
    }

    let assign = |exemplars: &[usize]| -> Vec<usize> {
        (0..n)
            .map(|i| {
                if let Some(pos) = exemplars.iter().position(|&e| e == i) {
                    pos
                } else {
                    argmax(exemplars.iter().map(|&e| s.get(i, e)))
                }
            })
            .collect()
    };
    let c = assign(&exemplars);
    for (ci, ex) in exemplars.iter_mut().enumerate() {
        let members: Vec<usize> = (0..n).filter(|&i| c[i] == ci).collect();
        let j = argmax(
            members
                .iter()
                .map(|&cand| members.iter().map(|&i| s.get(i, cand)).sum::<f64>()),
        );
        *ex = members[j];
    }
    let c = assign(&exemplars);
    let exemplar_of: Vec<usize> = c.iter().map(|&ci| exemplars[ci]).collect();
    Ok(Clustering::from_exemplar_of(
        &exemplar_of,
        iterations,
        converged,
    ))
}
