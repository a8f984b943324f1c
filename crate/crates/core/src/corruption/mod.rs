//! Corruption matrices and label corruption.
//!
//! Three families of matrices are built here, all parameterized by a
//! strength `m ∈ [0, 1]`:
//!
//! * uniform: `(1 − m)·I + m·11ᵀ/K`
//! * flip: each class keeps `1 − m` and sends `m` to one other class
//! * hierarchical: uniform mixing restricted to a class's superclass group
//!
//! Noisy labels are then drawn row-wise from the matrix, or sampled from a
//! weak classifier's temperature-scaled softmax.

mod prob_matrix;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use prob_matrix::{ProbMatrix, CMAT_VERSION, LOAD_ROW_SUM_TOL, ROW_SUM_TOL};

use crate::error::{Error, Result};
use crate::numcore::{self, DenseMatrix, MlpModel, ModelSpec, TrainConfig};
use crate::rng;

/// Softmax temperature used for weak-classifier labels when none is given.
pub const DEFAULT_WEAK_TEMPERATURE: f64 = 5.0;

/// Below this temperature sampling is replaced by the argmax.
pub const ARGMAX_TEMPERATURE: f64 = 1e-6;

fn check_strength(strength: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(Error::invalid(format!("corruption strength {strength} is outside [0, 1]")));
    }
    Ok(())
}

fn check_k(k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 classes, got {k}")));
    }
    Ok(())
}

/// `(1 − m)·I + m·11ᵀ/K`.
pub fn make_uniform(k: usize, strength: f64) -> Result<ProbMatrix> {
    check_k(k)?;
    check_strength(strength)?;
    let off = strength / k as f64;
    let mut entries = vec![off; k * k];
    for i in 0..k {
        entries[i * k + i] = ((1.0 - strength) + off).min(1.0);
    }
    ProbMatrix::new(k, entries)
}

/// Where each class of a flip matrix sends its corrupted mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum FlipTarget {
    /// One column per row, uniform over the other `K − 1` classes.
    Random { seed: u64 },
    /// Row `i` flips to `(i + 1) mod K`.
    Cyclic,
}

impl FlipTarget {
    /// Target column of every row.
    pub fn targets(&self, k: usize) -> Vec<usize> {
        match *self {
            FlipTarget::Cyclic => (0..k).map(|i| (i + 1) % k).collect(),
            FlipTarget::Random { seed } => {
                let mut rng = rng::stream(seed, "flip-targets");
                (0..k)
                    .map(|i| {
                        let r = rng.random_range(0..k - 1);
                        if r < i {
                            r
                        } else {
                            r + 1
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Flip corruption with a seeded random target column per row.
pub fn make_flip(k: usize, strength: f64, seed: u64) -> Result<ProbMatrix> {
    make_flip_with(k, strength, FlipTarget::Random { seed })
}

pub fn make_flip_with(k: usize, strength: f64, target: FlipTarget) -> Result<ProbMatrix> {
    check_k(k)?;
    check_strength(strength)?;
    let mut entries = vec![0.0; k * k];
    for (i, j) in target.targets(k).into_iter().enumerate() {
        entries[i * k + i] = 1.0 - strength;
        entries[i * k + j] = strength;
    }
    ProbMatrix::new(k, entries)
}

/// Assignment of every class to one superclass group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SuperclassPartition {
    group_of: Vec<usize>,
    groups: usize,
}

impl TryFrom<Vec<usize>> for SuperclassPartition {
    type Error = Error;
    fn try_from(group_of: Vec<usize>) -> Result<Self> {
        SuperclassPartition::new(group_of)
    }
}

impl From<SuperclassPartition> for Vec<usize> {
    fn from(p: SuperclassPartition) -> Self {
        p.group_of
    }
}

impl SuperclassPartition {
    /// `group_of[c]` is the group id of class `c`; ids must be `0..G` with
    /// every id used.
    pub fn new(group_of: Vec<usize>) -> Result<Self> {
        if group_of.is_empty() {
            return Err(Error::invalid("partition covers no classes"));
        }
        let groups = group_of.iter().max().map_or(0, |g| g + 1);
        let mut used = vec![false; groups];
        for &g in &group_of {
            used[g] = true;
        }
        if let Some(empty) = used.iter().position(|u| !u) {
            return Err(Error::invalid(format!("superclass group {empty} is empty")));
        }
        Ok(SuperclassPartition { group_of, groups })
    }

    /// Builds from explicit class lists; each class must appear exactly once.
    pub fn from_groups(k: usize, groups: &[Vec<usize>]) -> Result<Self> {
        let mut group_of = vec![usize::MAX; k];
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::invalid(format!("superclass group {g} is empty")));
            }
            for &c in members {
                if c >= k {
                    return Err(Error::Index { index: c, bound: k });
                }
                if group_of[c] != usize::MAX {
                    return Err(Error::invalid(format!("class {c} appears in more than one group")));
                }
                group_of[c] = g;
            }
        }
        if let Some(c) = group_of.iter().position(|g| *g == usize::MAX) {
            return Err(Error::invalid(format!("class {c} is not in any group")));
        }
        SuperclassPartition::new(group_of)
    }

    /// Consecutive blocks of `size` classes (the last block may be shorter).
    pub fn contiguous(k: usize, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("group size must be positive"));
        }
        SuperclassPartition::new((0..k).map(|c| c / size).collect())
    }

    pub fn k(&self) -> usize {
        self.group_of.len()
    }

    pub fn num_groups(&self) -> usize {
        self.groups
    }

    pub fn group_of(&self, class: usize) -> usize {
        self.group_of[class]
    }

    pub fn members(&self, group: usize) -> Vec<usize> {
        (0..self.k()).filter(|&c| self.group_of[c] == group).collect()
    }
}

/// Row `i` is `(1 − m)·eᵢ + m·uniform(group of i)`.
pub fn make_hierarchical(k: usize, strength: f64, partition: &SuperclassPartition) -> Result<ProbMatrix> {
    check_k(k)?;
    check_strength(strength)?;
    if partition.k() != k {
        return Err(Error::invalid(format!(
            "partition covers {} classes but k = {k}",
            partition.k()
        )));
    }
    let mut entries = vec![0.0; k * k];
    for g in 0..partition.num_groups() {
        let members = partition.members(g);
        let share = strength / members.len() as f64;
        for &i in &members {
            for &j in &members {
                entries[i * k + j] = share;
            }
            entries[i * k + i] = ((1.0 - strength) + share).min(1.0);
        }
    }
    ProbMatrix::new(k, entries)
}

pub(crate) fn sample_categorical(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // rounding left u above the final cumulative sum
    row.iter().rposition(|p| *p > 0.0).unwrap_or(row.len() - 1)
}

/// Draws each noisy label independently from row `labels[n]` of `c`.
pub fn corrupt_labels(labels: &[usize], c: &ProbMatrix, seed: u64) -> Result<Vec<usize>> {
    let k = c.k();
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Index { index: bad, bound: k });
    }
    let mut rng = rng::stream(seed, "corrupt-labels");
    Ok(labels
        .iter()
        .map(|&y| sample_categorical(c.row(y), rng.random::<f64>()))
        .collect())
}

/// Samples one label per row from `softmax(logits / temperature)`.
pub fn weak_classifier_labels(model: &MlpModel, features: &DenseMatrix, temperature: f64, seed: u64) -> Result<Vec<usize>> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    let logits = model.logits(features)?;
    if temperature < ARGMAX_TEMPERATURE {
        return Ok(logits.iter_rows().map(numcore::argmax).collect());
    }
    let mut rng = rng::stream(seed, "weak-labels");
    let scaled: Vec<f64> = logits.values().iter().map(|z| z / temperature).collect();
    let mut out = Vec::with_capacity(logits.rows());
    for row in scaled.chunks_exact(logits.cols()) {
        let p = numcore::softmax(row)?;
        out.push(sample_categorical(&p, rng.random::<f64>()));
    }
    Ok(out)
}

/// Settings for building a deliberately weak labeler from clean data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLabeler {
    pub model: ModelSpec,
    pub train: TrainConfig,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_temperature() -> f64 {
    DEFAULT_WEAK_TEMPERATURE
}

impl Default for WeakLabeler {
    /// A single hidden layer trained for one epoch, sampled at temperature 5.
    fn default() -> Self {
        WeakLabeler {
            model: ModelSpec::new(vec![64], numcore::Activation::Relu),
            train: TrainConfig {
                epochs: 1,
                ..TrainConfig::default()
            },
            temperature: DEFAULT_WEAK_TEMPERATURE,
        }
    }
}

impl WeakLabeler {
    /// Trains the weak model on clean labels, then samples fixed noisy labels
    /// for `targets`.
    pub fn label(&self, train_x: &DenseMatrix, train_y: &[usize], k: usize, targets: &DenseMatrix, seed: u64) -> Result<Vec<usize>> {
        let model = self.model.build(train_x.cols(), k)?;
        let cfg = self.train.with_seed(rng::split(seed, "weak-model"));
        let model = numcore::train(model, train_x, train_y, None, &cfg)?;
        weak_classifier_labels(&model, targets, self.temperature, rng::split(seed, "weak-sample"))
    }
}
