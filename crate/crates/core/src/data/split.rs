use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::corruption::{self, ProbMatrix};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Simple random sample of the whole set.
    #[default]
    Uniform,
    /// The same fraction sampled within each class (at least one per class
    /// that has two or more examples).
    Stratified,
}

/// A training set partitioned into a clean trusted part and an untrusted part.
///
/// `untrusted` starts with clean labels; [`TrustedSplit::corrupt_untrusted`]
/// replaces them and keeps the originals in `untrusted_true_labels`.
#[derive(Debug, Clone)]
pub struct TrustedSplit {
    pub trusted: Dataset,
    pub untrusted: Dataset,
    pub trusted_fraction: f64,
    pub trusted_indices: Vec<usize>,
    pub untrusted_indices: Vec<usize>,
    pub untrusted_true_labels: Vec<usize>,
}

impl TrustedSplit {
    pub fn k(&self) -> usize {
        self.trusted.k()
    }

    /// Redraws untrusted labels from `c` applied to their true labels.
    pub fn corrupt_untrusted(&mut self, c: &ProbMatrix, seed: u64) -> Result<()> {
        let noisy = corruption::corrupt_labels(&self.untrusted_true_labels, c, seed)?;
        self.set_untrusted_labels(noisy)
    }

    pub fn set_untrusted_labels(&mut self, labels: Vec<usize>) -> Result<()> {
        if labels.len() != self.untrusted.len() {
            return Err(Error::invalid("replacement labels do not match the untrusted set size"));
        }
        self.untrusted = self.untrusted.with_labels(labels)?;
        Ok(())
    }
}

pub fn split_trusted(dataset: &Dataset, trusted_fraction: f64, seed: u64) -> Result<TrustedSplit> {
    split_trusted_with(dataset, trusted_fraction, seed, SplitMode::Uniform)
}

pub fn split_trusted_with(dataset: &Dataset, trusted_fraction: f64, seed: u64, mode: SplitMode) -> Result<TrustedSplit> {
    if !(trusted_fraction > 0.0 && trusted_fraction < 1.0) {
        return Err(Error::invalid(format!("trusted fraction {trusted_fraction} is not in (0, 1)")));
    }
    let n = dataset.len();
    let mut rng = rng::stream(seed, "trusted-split");
    let mut trusted = match mode {
        SplitMode::Uniform => {
            let t = (trusted_fraction * n as f64).round() as usize;
            if t == 0 || t >= n {
                return Err(Error::invalid(format!(
                    "trusted fraction {trusted_fraction} of {n} examples leaves an empty side"
                )));
            }
            rand::seq::index::sample(&mut rng, n, t).into_vec()
        }
        SplitMode::Stratified => {
            let mut picked = Vec::new();
            for class in 0..dataset.k() {
                let members: Vec<usize> = (0..n).filter(|&i| dataset.labels()[i] == class).collect();
                let m = members.len();
                let mut t = (trusted_fraction * m as f64).round() as usize;
                if m >= 2 {
                    t = t.clamp(1, m - 1);
                }
                picked.extend(rand::seq::index::sample(&mut rng, m, t.min(m)).into_iter().map(|j| members[j]));
            }
            if picked.is_empty() || picked.len() >= n {
                return Err(Error::invalid(format!(
                    "trusted fraction {trusted_fraction} of {n} examples leaves an empty side"
                )));
            }
            picked
        }
    };
    trusted.sort_unstable();
    let mut in_trusted = vec![false; n];
    trusted.iter().for_each(|&i| in_trusted[i] = true);
    let untrusted: Vec<usize> = (0..n).filter(|&i| !in_trusted[i]).collect();

    let trusted_set = dataset.subset(&trusted)?;
    let untrusted_set = dataset.subset(&untrusted)?;
    Ok(TrustedSplit {
        trusted_fraction: trusted.len() as f64 / n as f64,
        untrusted_true_labels: untrusted_set.labels().to_vec(),
        trusted: trusted_set,
        untrusted: untrusted_set,
        trusted_indices: trusted,
        untrusted_indices: untrusted,
    })
}
