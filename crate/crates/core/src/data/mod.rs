//! Datasets: loading, synthesis, and trusted/untrusted splitting.

mod csv_file;
mod idx;
mod manifest;
mod split;
mod synthetic;

use serde::{Deserialize, Serialize};

pub use csv_file::load_csv;
pub use idx::{load_idx, load_mnist, MNIST_FILES, parse_idx_images, parse_idx_labels, write_idx, write_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use manifest::{DatasetManifest, SourceFile};
pub use split::{split_trusted, split_trusted_with, SplitMode, TrustedSplit};
pub use synthetic::{blob_centers, generate_gaussian_blobs};

use crate::error::{Error, Result};
use crate::numcore::DenseMatrix;
use crate::rng;

/// Feature rows with one class id each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    features: DenseMatrix,
    labels: Vec<usize>,
    k: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: DenseMatrix, labels: Vec<usize>, k: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if k == 0 {
            return Err(Error::invalid("class count must be positive"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::Index { index: bad, bound: k });
        }
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            k,
        })
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Same features with replacement labels.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Dataset::new(self.name.clone(), self.features.clone(), labels, self.k)
    }

    /// Widens the class count (e.g. a test file missing a rare class).
    pub fn with_k(mut self, k: usize) -> Result<Self> {
        if k < self.k {
            return Err(Error::invalid(format!("cannot shrink class count from {} to {k}", self.k)));
        }
        self.k = k;
        Ok(self)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Index { index: bad, bound: self.len() });
        }
        Ok(Dataset {
            name: self.name.clone(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
        })
    }

    /// Uniform random subset of `n` rows (kept in source order).
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Self> {
        if n >= self.len() {
            return Ok(self.clone());
        }
        let mut rng = rng::stream(seed, "subsample");
        let mut idx = rand::seq::index::sample(&mut rng, self.len(), n).into_vec();
        idx.sort_unstable();
        let mut out = self.subset(&idx)?;
        out.name = format!("{}[{n}]", self.name);
        Ok(out)
    }

    /// Number of examples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k];
        self.labels.iter().for_each(|&y| counts[y] += 1);
        counts
    }
}
