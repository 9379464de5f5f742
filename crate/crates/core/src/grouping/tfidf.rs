//! Word-bigram tf-idf with a unigram fallback for one-word headlines.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::normalize_tokens;

const HEADER: &str = "# forexsum-tfidf v1";

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfVocab {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    idf: Vec<f64>,
    n_docs: usize,
}

/// Sparse vector as `(term index, weight)` pairs sorted by index.
pub type SparseVec = Vec<(usize, f64)>;

/// Bigram terms of a headline; a single token falls back to itself.
pub fn terms_of(headline: &str) -> Vec<String> {
    let tokens = normalize_tokens(headline);
    match tokens.len() {
        0 => Vec::new(),
        1 => tokens,
        _ => tokens
            .windows(2)
            .map(|w| format!("{} {}", w[0], w[1]))
            .collect(),
    }
}

impl TfidfVocab {
    /// idf(t) = ln((1 + N) / (1 + df(t))) + 1.
    pub fn fit<S: AsRef<str>>(headlines: &[S]) -> Result<Self> {
        if headlines.is_empty() {
            return Err(Error::InsufficientData("tf-idf corpus is empty".into()));
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for h in headlines {
            let distinct: BTreeSet<String> = terms_of(h.as_ref()).into_iter().collect();
            for t in distinct {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = headlines.len();
        let terms: Vec<String> = df.keys().cloned().collect();
        let idf = df
            .values()
            .map(|&d| ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(TfidfVocab {
            terms,
            index,
            idf,
            n_docs: n,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.index.get(term).map(|&i| self.idf[i])
    }

    /// L2-normalized tf-idf vector; out-of-vocabulary terms are ignored.
    pub fn vectorize(&self, headline: &str) -> Result<SparseVec> {
        if self.terms.is_empty() {
            return Err(Error::EmptyVocab);
        }
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in terms_of(headline) {
            if let Some(&i) = self.index.get(&t) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut v: SparseVec = counts
            .into_iter()
            .map(|(i, tf)| (i, tf * self.idf[i]))
            .collect();
        let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut v {
                *w /= norm;
            }
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = format!("{HEADER} n_docs={}\n", self.n_docs);
        for (t, idf) in self.terms.iter().zip(&self.idf) {
            text.push_str(&format!("{t}\t{idf:?}\n"));
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |line: usize, message: &str| Error::MalformedRecord {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "missing header"))?;
        let n_docs = header
            .strip_prefix(HEADER)
            .and_then(|rest| rest.trim().strip_prefix("n_docs="))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| bad(1, "bad header"))?;
        let mut terms = Vec::new();
        let mut idf = Vec::new();
        for (i, line) in lines.enumerate() {
            let (t, v) = line
                .split_once('\t')
                .ok_or_else(|| bad(i + 2, "expected term<TAB>idf"))?;
            terms.push(t.to_string());
            idf.push(v.parse().map_err(|_| bad(i + 2, "bad idf"))?);
        }
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(TfidfVocab {
            terms,
            index,
            idf,
            n_docs,
        })
    }
}

pub fn cosine(a: &SparseVec, b: &SparseVec) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut dot = 0.0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    let na = a.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    let nb = b.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
