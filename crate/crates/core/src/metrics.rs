//! Evaluation metrics: confusion counts, balanced accuracy, ROUGE-N/L and
//! the sample-weighted improvement statistic.
//!
//! Label 1 (inconsistent) is the positive class throughout.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Label;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("predictions ({preds}) and labels ({labels}) differ in length")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("no examples to score")]
    Empty,
    #[error("balanced accuracy needs both classes among the labels")]
    DegenerateLabels,
    #[error("no rows to aggregate")]
    EmptyInput,
    #[error("row {0} has zero samples")]
    ZeroWeight(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, pred: Label, label: Label) {
        match (pred, label) {
            (Label::Inconsistent, Label::Inconsistent) => self.tp += 1,
            (Label::Inconsistent, Label::Consistent) => self.fp += 1,
            (Label::Consistent, Label::Consistent) => self.tn += 1,
            (Label::Consistent, Label::Inconsistent) => self.fn_ += 1,
        }
    }
}

pub fn confusion(preds: &[Label], labels: &[Label]) -> Result<ConfusionMatrix, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &l) in preds.iter().zip(labels) {
        cm.record(p, l);
    }
    Ok(cm)
}

/// Mean of true-positive and true-negative rates, as a fraction in [0, 1].
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    let positives = cm.tp + cm.fn_;
    let negatives = cm.tn + cm.fp;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::DegenerateLabels);
    }
    let tpr = cm.tp as f64 / positives as f64;
    let tnr = cm.tn as f64 / negatives as f64;
    Ok((tpr + tnr) / 2.0)
}

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    /// Builds a score from a match count and the two sides' unit counts.
    /// A side with no units contributes a zero component.
    pub fn from_counts(matches: usize, candidate_total: usize, reference_total: usize) -> Self {
        let ratio = |total: usize| if total == 0 { 0.0 } else { matches as f64 / total as f64 };
        let (precision, recall) = (ratio(candidate_total), ratio(reference_total));
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-N with clipped multiset n-gram overlap.
///
/// # Panics
///
/// If `n` is zero.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> RougeScore {
    assert!(n >= 1, "ROUGE-N needs n >= 1");
    let (cand, refr) = (tokenize(candidate), tokenize(reference));
    let (cand_counts, ref_counts) = (ngram_counts(&cand, n), ngram_counts(&refr, n));
    let matches = cand_counts
        .iter()
        .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    let total = |counts: &BTreeMap<&[String], usize>| counts.values().sum::<usize>();
    RougeScore::from_counts(matches, total(&cand_counts), total(&ref_counts))
}

pub(crate) fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { above.max(row[j]) };
            diag = above;
        }
    }
    row[b.len()]
}

/// ROUGE-L over whole texts.
pub fn rouge_l(candidate: &str, reference: &str) -> RougeScore {
    let (cand, refr) = (tokenize(candidate), tokenize(reference));
    RougeScore::from_counts(lcs_len(&cand, &refr), cand.len(), refr.len())
}

/// One benchmark row: sample count and the two scores being compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub n: u64,
    pub base: f64,
    pub variant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedImprovement {
    pub mean: f64,
    pub se: f64,
}

/// Sample-weighted mean of `variant - base` and its standard error.
///
/// The SE uses the unbiased weighted variance with reliability weights,
/// `sum(w (d - mean)^2) / (V1 - V2 / V1)` where `V1 = sum(w)` and
/// `V2 = sum(w^2)`, divided by the number of rows and square-rooted. A
/// single row has SE 0.
pub fn weighted_improvement(rows: &[ImprovementRow]) -> Result<WeightedImprovement, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if let Some(i) = rows.iter().position(|r| r.n == 0) {
        return Err(MetricsError::ZeroWeight(i));
    }
    let v1: f64 = rows.iter().map(|r| r.n as f64).sum();
    let v2: f64 = rows.iter().map(|r| (r.n as f64) * (r.n as f64)).sum();
    let delta = |r: &ImprovementRow| r.variant - r.base;
    let mean = rows.iter().map(|r| r.n as f64 * delta(r)).sum::<f64>() / v1;
    if rows.len() == 1 {
        return Ok(WeightedImprovement { mean, se: 0.0 });
    }
    let ss: f64 = rows
        .iter()
        .map(|r| {
            let d = delta(r) - mean;
            r.n as f64 * d * d
        })
        .sum();
    let variance = ss / (v1 - v2 / v1);
    let se = libm::sqrt(variance / rows.len() as f64);
    Ok(WeightedImprovement { mean, se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Consistent as C, Inconsistent as I};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn confusion_counts() {
        let cm = confusion(&[I, C], &[I, C]).unwrap();
        assert_eq!((cm.tp, cm.tn, cm.fp, cm.fn_), (1, 1, 0, 0));
        assert_eq!(confusion(&[I, I], &[C, C]).unwrap().fp, 2);
        assert_eq!(
            confusion(&[I], &[I, C]),
            Err(MetricsError::LengthMismatch { preds: 1, labels: 2 })
        );
        assert_eq!(confusion(&[], &[]), Err(MetricsError::Empty));
    }

    #[test]
    fn balanced_accuracy_values() {
        let perfect = confusion(&[I, C, C], &[I, C, C]).unwrap();
        assert_eq!(balanced_accuracy(&perfect).unwrap(), 1.0);
        // TPR 1/2, TNR 2/2.
        let cm = confusion(&[I, C, C, C], &[I, I, C, C]).unwrap();
        assert!(close(balanced_accuracy(&cm).unwrap(), 0.75));
        let degenerate = confusion(&[C, I], &[C, C]).unwrap();
        assert_eq!(balanced_accuracy(&degenerate), Err(MetricsError::DegenerateLabels));
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("The cat's mat."), ["the", "cat", "s", "mat"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("A  B"), ["a", "b"]);
        assert_eq!(tokenize("Größe 3.6x"), ["größe", "3", "6x"]);
    }

    #[test]
    fn rouge_fixtures() {
        let r1 = rouge_n("the cat sat", "the cat sat on the mat", 1);
        assert!(close(r1.precision, 1.0) && close(r1.recall, 0.5) && close(r1.f1, 2.0 / 3.0));
        let r2 = rouge_n("the cat sat", "the cat sat on the mat", 2);
        assert!(close(r2.precision, 1.0) && close(r2.recall, 0.4) && close(r2.f1, 0.8 / 1.4));
        let rl = rouge_l("the cat sat", "the cat sat on the mat");
        assert!(close(rl.precision, 1.0) && close(rl.recall, 0.5) && close(rl.f1, 2.0 / 3.0));
    }

    #[test]
    fn rouge_edge_cases() {
        let same = rouge_n("a b c", "a b c", 2);
        assert_eq!((same.precision, same.recall, same.f1), (1.0, 1.0, 1.0));
        assert_eq!(rouge_n("a b", "c d", 1), RougeScore::default());
        assert_eq!(rouge_n("a b", "a b", 3), RougeScore::default());
        assert_eq!(rouge_l("", "a b"), RougeScore::default());
        assert_eq!(rouge_l("x y", "x y").f1, 1.0);
    }

    #[test]
    fn rouge_clips_repeats() {
        // candidate has "the" three times, reference once.
        let r = rouge_n("the the the", "the cat", 1);
        assert!(close(r.precision, 1.0 / 3.0));
        assert!(close(r.recall, 0.5));
    }

    #[test]
    fn lcs_basics() {
        assert_eq!(lcs_len(b"ABCBDAB", b"BDCABA"), 4);
        assert_eq!(lcs_len::<u8>(b"", b"abc"), 0);
    }

    fn row(n: u64, base: f64, variant: f64) -> ImprovementRow {
        ImprovementRow { n, base, variant }
    }

    #[test]
    fn weighted_improvement_rows() {
        let one = weighted_improvement(&[row(10, 60.0, 66.0)]).unwrap();
        assert!(close(one.mean, 6.0));
        assert_eq!(one.se, 0.0);

        let two = weighted_improvement(&[row(5, 50.0, 54.0), row(5, 50.0, 58.0)]).unwrap();
        assert!(close(two.mean, 6.0));
        // sum w d^2 = 5*4 + 5*4 = 40; V1 - V2/V1 = 10 - 50/10 = 5; var = 8; se = sqrt(8/2).
        assert!(close(two.se, 2.0));

        let skewed = weighted_improvement(&[row(100, 0.0, 10.0), row(1, 0.0, 0.0)]).unwrap();
        assert!(close(skewed.mean, 1000.0 / 101.0));

        assert_eq!(weighted_improvement(&[]), Err(MetricsError::EmptyInput));
        assert_eq!(weighted_improvement(&[row(0, 1.0, 2.0)]), Err(MetricsError::ZeroWeight(0)));
    }
}
