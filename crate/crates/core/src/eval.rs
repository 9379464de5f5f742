//! Classification metrics, evaluation reports and attention attribution.

use serde::{Deserialize, Serialize};

use crate::corpus::{Category, Region};
use crate::error::{Error, Result};
use crate::grouping::GroupSubject;
use crate::model::{analysis_record, AnalysisRecord, Model, Prediction, PreparedSample};
use crate::parallel;

/// `[[tn, fp], [fn, tp]]` with label 1 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_pairs(predictions: &[u8], labels: &[u8]) -> Result<Self> {
        if predictions.is_empty() {
            return Err(Error::InvalidInput("no predictions".into()));
        }
        if predictions.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} predictions vs {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        let mut c = Confusion::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            if p > 1 || y > 1 {
                return Err(Error::InvalidInput(format!(
                    "labels must be 0/1, got {p}/{y}"
                )));
            }
            match (p, y) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn f1(tp: u64, fp: u64, fn_: u64) -> f64 {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    }

    pub fn macro_f1(&self) -> f64 {
        0.5 * (Self::f1(self.tp, self.fp, self.fn_) + Self::f1(self.tn, self.fn_, self.fp))
    }

    pub fn mcc(&self) -> f64 {
        let (tp, fp, fn_, tn) = (
            self.tp as f64,
            self.fp as f64,
            self.fn_ as f64,
            self.tn as f64,
        );
        let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            (tp * tn - fp * fn_) / denom
        }
    }
}

/// Unweighted mean of the two per-class F1 scores.
pub fn macro_f1(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    Ok(Confusion::from_pairs(predictions, labels)?.macro_f1())
}

/// Matthews correlation; 0 when any marginal is empty.
pub fn mcc(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    Ok(Confusion::from_pairs(predictions, labels)?.mcc())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub macro_f1: f64,
    pub mcc: f64,
    pub confusion: Confusion,
    pub n: usize,
    pub variant: String,
    pub grouping: String,
    pub seed: u64,
}

pub fn predict_all(model: &Model, samples: &[PreparedSample]) -> Result<Vec<Prediction>> {
    parallel::map_indexed(samples, |_, s| model.predict(s))
        .into_iter()
        .collect()
}

pub fn evaluate(
    model: &Model,
    samples: &[PreparedSample],
    seed: u64,
) -> Result<(EvalReport, Vec<Prediction>)> {
    let preds = predict_all(model, samples)?;
    let p: Vec<u8> = preds.iter().map(|p| p.predicted).collect();
    let y: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let confusion = Confusion::from_pairs(&p, &y)?;
    Ok((
        EvalReport {
            macro_f1: confusion.macro_f1(),
            mcc: confusion.mcc(),
            confusion,
            n: samples.len(),
            variant: model.spec.variant.as_str().into(),
            grouping: model.spec.grouping.as_str().into(),
            seed,
        },
        preds,
    ))
}

pub fn analysis_records(samples: &[PreparedSample], preds: &[Prediction]) -> Vec<AnalysisRecord> {
    samples
        .iter()
        .zip(preds)
        .map(|(s, p)| analysis_record(s, p))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    /// Indexed like [`Category::ALL`].
    pub categories: Vec<(Category, f64)>,
    /// Indexed like [`Region::ALL`].
    pub regions: Vec<(Region, f64)>,
}

impl AttributionReport {
    pub fn top_category(&self) -> Category {
        top(&self.categories)
    }

    pub fn top_region(&self) -> Region {
        top(&self.regions)
    }
}

fn top<T: Copy>(items: &[(T, f64)]) -> T {
    let mut best = 0;
    for (i, (_, w)) in items.iter().enumerate() {
        if *w > items[best].1 {
            best = i;
        }
    }
    items[best].0
}

fn normalize<T: Copy>(labels: &[T], totals: &[f64]) -> Result<Vec<(T, f64)>> {
    let sum: f64 = totals.iter().sum();
    if sum <= 0.0 {
        return Err(Error::InsufficientData(
            "no attention mass to attribute".into(),
        ));
    }
    Ok(labels
        .iter()
        .zip(totals)
        .map(|(&l, &t)| (l, t / sum))
        .collect())
}

/// Share of summed group attention per category group.
pub fn category_influence(records: &[AnalysisRecord]) -> Result<Vec<(Category, f64)>> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no analysis records".into()));
    }
    let mut totals = [0.0; 9];
    for r in records {
        for g in &r.groups {
            if let GroupSubject::Category { category } = g.subject {
                totals[category.index()] += g.attention;
            }
        }
    }
    normalize(&Category::ALL, &totals)
}

/// Share of `att_i · s_ij` per region class of the selected headlines.
pub fn region_influence(records: &[AnalysisRecord]) -> Result<Vec<(Region, f64)>> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no analysis records".into()));
    }
    let mut totals = [0.0; 3];
    for r in records {
        for g in &r.groups {
            for n in &g.news {
                totals[n.region.index()] += g.attention * n.weight;
            }
        }
    }
    normalize(&Region::ALL, &totals)
}

pub fn attribution(records: &[AnalysisRecord]) -> Result<AttributionReport> {
    Ok(AttributionReport {
        categories: category_influence(records)?,
        regions: region_influence(records)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> (Vec<u8>, Vec<u8>) {
        let mut p = Vec::new();
        let mut y = Vec::new();
        for (n, pv, yv) in [(tp, 1, 1), (fp, 1, 0), (fn_, 0, 1), (tn, 0, 0)] {
            p.extend(std::iter::repeat_n(pv, n));
            y.extend(std::iter::repeat_n(yv, n));
        }
        (p, y)
    }

    #[test]
    fn perfect_and_inverted() {
        let y = vec![0, 1, 1, 0];
        assert_eq!(macro_f1(&y, &y).unwrap(), 1.0);
        assert_eq!(mcc(&y, &y).unwrap(), 1.0);
        let inv: Vec<u8> = y.iter().map(|v| 1 - v).collect();
        assert_eq!(macro_f1(&inv, &y).unwrap(), 0.0);
    }

    #[test]
    fn one_class_predictions_have_zero_mcc() {
        let (p, y) = from_counts(3, 2, 0, 0);
        assert_eq!(mcc(&p, &y).unwrap(), 0.0);
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        assert!(macro_f1(&[], &[]).is_err());
        assert!(mcc(&[1], &[1, 0]).is_err());
    }
}
