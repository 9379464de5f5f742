//! Intra-group extraction: score headlines, keep the top-k, and pool them.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::INIT_STD;
use crate::params::{truncated_normal, ParamId, ParamStore};
use crate::tensor::Matrix;

/// How many headlines each group keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TopKRepr", into = "TopKRepr")]
pub enum TopK {
    Top(usize),
    All,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TopKRepr {
    Count(usize),
    Name(String),
}

impl TryFrom<TopKRepr> for TopK {
    type Error = String;

    fn try_from(r: TopKRepr) -> std::result::Result<Self, String> {
        match r {
            TopKRepr::Count(0) => Err("k must be at least 1".into()),
            TopKRepr::Count(k) => Ok(TopK::Top(k)),
            TopKRepr::Name(s) => s.parse(),
        }
    }
}

impl From<TopK> for TopKRepr {
    fn from(k: TopK) -> Self {
        match k {
            TopK::Top(k) => TopKRepr::Count(k),
            TopK::All => TopKRepr::Name("all".into()),
        }
    }
}

impl std::str::FromStr for TopK {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "all" => Ok(TopK::All),
            n => match n.parse::<usize>() {
                Ok(0) | Err(_) => Err(format!(
                    "k must be a positive integer or \"all\", got {s:?}"
                )),
                Ok(k) => Ok(TopK::Top(k)),
            },
        }
    }
}

impl std::fmt::Display for TopK {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TopK::Top(k) => write!(f, "{k}"),
            TopK::All => f.write_str("all"),
        }
    }
}

impl TopK {
    /// Concrete count for a group of `n` headlines.
    pub fn resolve(self, n: usize) -> usize {
        match self {
            TopK::Top(k) => k,
            TopK::All => n.max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractionParams {
    /// `H × 1`.
    pub w0: ParamId,
    /// `1 × 1`.
    pub b0: ParamId,
}

impl ExtractionParams {
    pub fn init(store: &mut ParamStore, rng: &mut ChaCha8Rng, hidden: usize) -> Self {
        ExtractionParams {
            w0: store.add(
                "extract.w0",
                truncated_normal(rng, hidden, 1, INIT_STD),
                true,
            ),
            b0: store.add("extract.b0", Matrix::zeros(1, 1), false),
        }
    }
}

/// `sigmoid(cls · w0 + b0)` per row, as an `n × 1` column.
pub fn score_news(tape: &mut Tape, cls: Var, params: &ExtractionParams) -> Var {
    let w0 = tape.param(params.w0);
    let b0 = tape.param(params.b0);
    let logits = tape.affine(cls, w0, b0);
    tape.sigmoid(logits)
}

/// Indices of the `k` highest scores in descending order; equal scores
/// prefer the earlier index. All indices when `n <= k`.
pub fn select_topk(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no scores to select from".into()));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

#[derive(Debug, Clone)]
pub struct GroupSummary {
    /// `1 × H`.
    pub representation: Var,
    pub selected: Vec<usize>,
    pub weights: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Softmax over the selected scores, then the weighted sum of their rows.
/// The index choice itself carries no gradient.
pub fn group_representation(
    tape: &mut Tape,
    cls: Var,
    scores: Var,
    selected: &[usize],
) -> GroupSummary {
    let picked = tape.gather(scores, selected);
    let picked = tape.transpose(picked);
    let s = tape.softmax_rows(picked);
    let rows = tape.gather(cls, selected);
    let representation = tape.matmul(s, rows);
    GroupSummary {
        representation,
        selected: selected.to_vec(),
        weights: tape.value(s).data.clone(),
        scores: tape.value(scores).data.clone(),
    }
}

/// Scores, selects and pools one group's encoded headlines.
pub fn extract(
    tape: &mut Tape,
    cls: Var,
    params: &ExtractionParams,
    k: TopK,
) -> Result<GroupSummary> {
    let scores = score_news(tape, cls, params);
    let n = tape.shape(scores).0;
    let selected = select_topk(&tape.value(scores).data, k.resolve(n))?;
    Ok(group_representation(tape, cls, scores, &selected))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topk_rules() {
        assert_eq!(select_topk(&[0.1, 0.9, 0.5], 2).unwrap(), vec![1, 2]);
        assert_eq!(select_topk(&[0.5, 0.5, 0.5], 2).unwrap(), vec![0, 1]);
        assert_eq!(select_topk(&[0.2, 0.3], 3).unwrap(), vec![1, 0]);
        assert!(select_topk(&[], 1).is_err());
    }

    #[test]
    fn topk_parsing() {
        assert_eq!("all".parse::<TopK>().unwrap(), TopK::All);
        assert_eq!("3".parse::<TopK>().unwrap(), TopK::Top(3));
        assert!("0".parse::<TopK>().is_err());
        assert_eq!(TopK::All.resolve(7), 7);
        assert_eq!(serde_json::to_string(&TopK::All).unwrap(), "\"all\"");
        assert_eq!(serde_json::from_str::<TopK>("2").unwrap(), TopK::Top(2));
    }

    #[test]
    fn zero_params_score_one_half() {
        let mut store = ParamStore::new();
        let p = ExtractionParams {
            w0: store.add("w0", Matrix::zeros(3, 1), true),
            b0: store.add("b0", Matrix::zeros(1, 1), false),
        };
        let mut tape = Tape::new(&store);
        let cls = tape.constant(Matrix::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0]));
        let s = score_news(&mut tape, cls, &p);
        assert_eq!(tape.value(s).data, vec![0.5, 0.5]);
    }

    #[test]
    fn single_selection_returns_that_row() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let cls = tape.constant(Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let scores = tape.constant(Matrix::from_vec(2, 1, vec![0.3, 0.7]));
        let g = group_representation(&mut tape, cls, scores, &[1]);
        assert_eq!(g.weights, vec![1.0]);
        assert_eq!(tape.value(g.representation).data, vec![3.0, 4.0]);
    }
}
