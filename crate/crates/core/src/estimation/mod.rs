//! Estimators of the corruption matrix and the tools around them.
//!
//! Every estimator consumes [`ClassScores`]: softmax outputs of a classifier
//! trained on the untrusted (noisy) labels, evaluated on some set of inputs.
//!
//! * [`estimate_glc`] averages the score rows of trusted examples of each
//!   true class.
//! * [`estimate_forward`] picks, per class, the example at a high percentile
//!   of that class's score and copies its full score row.
//! * [`estimate_confusion`] row-normalizes the argmax confusion matrix on the
//!   trusted examples.
//!
//! [`refine_base_rates`] and [`calibrate_temperature`] are refinements of the
//! GLC estimate; [`conditional_independence_check`] tests the assumption the
//! GLC estimate relies on.

mod base_rates;
mod calibration;
mod independence;

use serde::{Deserialize, Serialize};

pub use base_rates::{empirical_base_rates, refine_base_rates, BaseRateRefinement, KKT_RESIDUAL_TOL};
pub use calibration::{apply_temperature, calibrate_temperature, mean_nll, TemperatureFit, TEMPERATURE_RANGE, TEMPERATURE_TOL};
pub use independence::{bin_features, conditional_independence_check, CellReport, IndependenceConfig, IndependenceReport};

use crate::corruption::ProbMatrix;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numcore::{argmax, DenseMatrix, MlpModel};

/// Softmax outputs of a noisy-label classifier plus whatever labels are known
/// for the scored examples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    scores: DenseMatrix,
    labels_true: Option<Vec<usize>>,
    labels_noisy: Option<Vec<usize>>,
}

impl ClassScores {
    pub fn new(scores: DenseMatrix, labels_true: Option<Vec<usize>>, labels_noisy: Option<Vec<usize>>) -> Result<Self> {
        let k = scores.cols();
        if k == 0 {
            return Err(Error::invalid("scores need at least one class column"));
        }
        for (i, row) in scores.iter_rows().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!("score row {i} is not a probability vector")));
            }
        }
        for labels in [&labels_true, &labels_noisy].into_iter().flatten() {
            if labels.len() != scores.rows() {
                return Err(Error::invalid(format!(
                    "{} labels for {} score rows",
                    labels.len(),
                    scores.rows()
                )));
            }
            if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
                return Err(Error::Index { index: bad, bound: k });
            }
        }
        Ok(ClassScores {
            scores,
            labels_true,
            labels_noisy,
        })
    }

    /// Scores `dataset` with `model`, treating the dataset labels as true labels.
    pub fn trusted(model: &MlpModel, dataset: &Dataset) -> Result<Self> {
        Self::new(model.predict_proba(dataset.features())?, Some(dataset.labels().to_vec()), None)
    }

    /// Scores `dataset` with `model`, treating the dataset labels as noisy labels.
    pub fn untrusted(model: &MlpModel, dataset: &Dataset) -> Result<Self> {
        Self::new(model.predict_proba(dataset.features())?, None, Some(dataset.labels().to_vec()))
    }

    pub fn n(&self) -> usize {
        self.scores.rows()
    }

    pub fn k(&self) -> usize {
        self.scores.cols()
    }

    pub fn scores(&self) -> &DenseMatrix {
        &self.scores
    }

    pub fn labels_true(&self) -> Option<&[usize]> {
        self.labels_true.as_deref()
    }

    pub fn labels_noisy(&self) -> Option<&[usize]> {
        self.labels_noisy.as_deref()
    }

    fn require_true(&self) -> Result<&[usize]> {
        self.labels_true()
            .ok_or_else(|| Error::invalid("estimator needs scores of trusted examples with true labels"))
    }
}

/// What to do when a class has no trusted examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MissingClassPolicy {
    #[default]
    Error,
    /// Use the identity row `eᵢ` and attach a warning.
    IdentityFallback,
}

/// A matrix estimate with any warnings raised while producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub matrix: ProbMatrix,
    pub warnings: Vec<String>,
}

fn finish_rows(k: usize, mut sums: Vec<f64>, counts: &[usize], policy: MissingClassPolicy) -> Result<Estimate> {
    let mut warnings = Vec::new();
    for (i, &count) in counts.iter().enumerate() {
        if count == 0 {
            match policy {
                MissingClassPolicy::Error => return Err(Error::MissingClass { class: i }),
                MissingClassPolicy::IdentityFallback => {
                    sums[i * k + i] = 1.0;
                    let msg = format!("class {i} has no trusted examples; using the identity row");
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
            }
        }
    }
    Ok(Estimate {
        matrix: ProbMatrix::from_rows_normalized(k, sums)?,
        warnings,
    })
}

/// Row `i` is the mean score row over trusted examples whose true label is `i`.
pub fn estimate_glc(trusted: &ClassScores, policy: MissingClassPolicy) -> Result<Estimate> {
    let labels = trusted.require_true()?;
    let k = trusted.k();
    let mut sums = vec![0.0; k * k];
    let mut counts = vec![0; k];
    for (row, &y) in trusted.scores.iter_rows().zip(labels) {
        counts[y] += 1;
        for (s, p) in sums[y * k..(y + 1) * k].iter_mut().zip(row) {
            *s += p;
        }
    }
    // dividing by the row total equals dividing by the count for exact
    // probability rows and keeps the result exactly normalized
    finish_rows(k, sums, &counts, policy)
}

/// Row-normalized confusion matrix of argmax predictions on trusted examples.
pub fn estimate_confusion(trusted: &ClassScores, policy: MissingClassPolicy) -> Result<Estimate> {
    let labels = trusted.require_true()?;
    let k = trusted.k();
    let mut sums = vec![0.0; k * k];
    let mut counts = vec![0; k];
    for (row, &y) in trusted.scores.iter_rows().zip(labels) {
        counts[y] += 1;
        sums[y * k + argmax(row)] += 1.0;
    }
    finish_rows(k, sums, &counts, policy)
}

/// 1-based nearest-rank position `ceil(p/100 · n)`, clamped to `[1, n]`.
pub fn nearest_rank(percentile: f64, n: usize) -> usize {
    // the epsilon keeps exact products like 97/100·100 from rounding up
    let r = (percentile / 100.0 * n as f64 - 1e-9).ceil();
    (r.max(1.0) as usize).min(n)
}

/// For each class `i`, copies the score row of the example whose class-`i`
/// score sits at the given nearest-rank percentile. `percentile = 100` picks
/// the argmax example.
pub fn estimate_forward(untrusted: &ClassScores, percentile: f64) -> Result<ProbMatrix> {
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::invalid(format!("percentile {percentile} is not in (0, 100]")));
    }
    let n = untrusted.n();
    if n == 0 {
        return Err(Error::invalid("forward estimate needs at least one scored example"));
    }
    let k = untrusted.k();
    let rank = nearest_rank(percentile, n);
    let mut entries = Vec::with_capacity(k * k);
    let mut order: Vec<usize> = (0..n).collect();
    for class in 0..k {
        // stable: ties keep ascending example order
        order.sort_by(|&a, &b| untrusted.scores.get(a, class).total_cmp(&untrusted.scores.get(b, class)));
        entries.extend_from_slice(untrusted.scores.row(order[rank - 1]));
    }
    Ok(ProbMatrix::from_rows_normalized(k, entries)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(rows: &[Vec<f64>], labels: Option<Vec<usize>>) -> ClassScores {
        ClassScores::new(DenseMatrix::from_rows(rows).unwrap(), labels, None).unwrap()
    }

    #[test]
    fn glc_is_the_class_mean() {
        let s = scores(&[vec![0.8, 0.2], vec![0.6, 0.4], vec![0.1, 0.9]], Some(vec![0, 0, 1]));
        let est = estimate_glc(&s, MissingClassPolicy::Error).unwrap();
        assert!((est.matrix.get(0, 0) - 0.7).abs() < 1e-15);
        assert!((est.matrix.get(0, 1) - 0.3).abs() < 1e-15);
        assert_eq!(est.matrix.row(1), &[0.1, 0.9]);
        assert!(est.warnings.is_empty());
    }

    #[test]
    fn missing_class_policies() {
        let s = scores(&[vec![0.8, 0.1, 0.1]], Some(vec![0]));
        assert!(matches!(estimate_glc(&s, MissingClassPolicy::Error), Err(Error::MissingClass { class: 1 })));
        let est = estimate_glc(&s, MissingClassPolicy::IdentityFallback).unwrap();
        assert_eq!(est.matrix.row(2), &[0.0, 0.0, 1.0]);
        assert_eq!(est.warnings.len(), 2);
        assert!(matches!(estimate_confusion(&s, MissingClassPolicy::Error), Err(Error::MissingClass { .. })));
        let no_labels = scores(&[vec![1.0, 0.0]], None);
        assert!(estimate_glc(&no_labels, MissingClassPolicy::Error).is_err());
    }

    #[test]
    fn confusion_counts_argmaxes() {
        let rows = vec![vec![0.9, 0.1, 0.0], vec![0.6, 0.4, 0.0], vec![0.4, 0.6, 0.0], vec![0.3, 0.7, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let s = scores(&rows, Some(vec![0, 0, 0, 0, 1, 2]));
        let est = estimate_confusion(&s, MissingClassPolicy::Error).unwrap();
        assert_eq!(est.matrix.row(0), &[0.5, 0.5, 0.0]);
        assert!(est.matrix.row(1) == [0.0, 1.0, 0.0] && est.matrix.row(2) == [0.0, 0.0, 1.0]);
        // a tie goes to the lower class
        let tie = scores(&[vec![0.5, 0.5], vec![0.0, 1.0]], Some(vec![0, 1]));
        assert_eq!(estimate_confusion(&tie, MissingClassPolicy::Error).unwrap().matrix.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn confusion_equals_glc_on_one_hot_scores() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let mut r = vec![0.0; 4];
                r[(i * 7 + i / 3) % 4] = 1.0;
                r
            })
            .collect();
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let s = scores(&rows, Some(labels));
        let a = estimate_glc(&s, MissingClassPolicy::Error).unwrap().matrix;
        let b = estimate_confusion(&s, MissingClassPolicy::Error).unwrap().matrix;
        assert_eq!(a, b);
    }

    #[test]
    fn forward_examples() {
        let single = scores(&[vec![0.7, 0.3]], None);
        let f = estimate_forward(&single, 97.0).unwrap();
        assert_eq!(f.row(0), &[0.7, 0.3]);
        assert_eq!(f.row(1), &[0.7, 0.3]);

        let s = scores(&[vec![0.6, 0.4], vec![1.0, 0.0], vec![0.2, 0.8]], None);
        let f = estimate_forward(&s, 100.0).unwrap();
        assert_eq!(f.row(0), &[1.0, 0.0]);
        assert_eq!(f.row(1), &[0.2, 0.8]);

        assert!(estimate_forward(&s, 0.0).is_err());
        assert!(estimate_forward(&s, 100.5).is_err());
        let empty = ClassScores::new(DenseMatrix::zeros(0, 2), None, None).unwrap();
        assert!(estimate_forward(&empty, 50.0).is_err());
    }

    #[test]
    fn forward_uses_nearest_rank() {
        // class-0 scores 0.01..1.00 in shuffled order
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|i| {
                let s = ((i * 37) % 100 + 1) as f64 / 100.0;
                vec![s, 1.0 - s]
            })
            .collect();
        let f = estimate_forward(&scores(&rows, None), 97.0).unwrap();
        assert!((f.get(0, 0) - 0.97).abs() < 1e-12);
        assert_eq!(nearest_rank(97.0, 100), 97);
        assert_eq!(nearest_rank(50.0, 3), 2);
        assert_eq!(nearest_rank(0.1, 3), 1);
        assert_eq!(nearest_rank(100.0, 7), 7);
    }
}
