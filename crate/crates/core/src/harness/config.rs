use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corruption::{make_flip_with, make_hierarchical, make_uniform, FlipTarget, ProbMatrix, SuperclassPartition};
use crate::data::{generate_gaussian_blobs, load_csv, load_idx, load_mnist, Dataset, SplitMode, MNIST_FILES};
use crate::error::{Error, Result};
use crate::numcore::{ModelSpec, TrainConfig};
use crate::training::{MethodSpec, PipelineOptions};

/// Where a sweep's train and test sets come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetRef {
    /// Directory holding the four standard MNIST IDX files.
    Mnist {
        dir: PathBuf,
        /// Train on a seeded random subset of this many examples.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subsample: Option<usize>,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
    },
    Blobs {
        k: usize,
        per_class: usize,
        test_per_class: usize,
        dim: usize,
        separation: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_label_column() -> String {
    "label".to_string()
}

impl DatasetRef {
    /// Loads `(train, test)` with a common class count.
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        let (train, test) = match self {
            DatasetRef::Mnist { dir, subsample } => {
                let (train, test) = load_mnist(dir)?;
                match subsample {
                    Some(n) => (train.subsample(*n, 0)?, test),
                    None => (train, test),
                }
            }
            DatasetRef::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => (load_idx(train_images, train_labels)?, load_idx(test_images, test_labels)?),
            DatasetRef::Csv { train, test, label_column } => (load_csv(train, label_column)?, load_csv(test, label_column)?),
            DatasetRef::Blobs {
                k,
                per_class,
                test_per_class,
                dim,
                separation,
                seed,
            } => (
                generate_gaussian_blobs(*k, *per_class, *dim, *separation, crate::rng::split(*seed, "train"))?,
                generate_gaussian_blobs(*k, *test_per_class, *dim, *separation, crate::rng::split(*seed, "test"))?,
            ),
        };
        if train.dim() != test.dim() {
            return Err(Error::invalid(format!(
                "train has {} features but test has {}",
                train.dim(),
                test.dim()
            )));
        }
        let k = train.k().max(test.k());
        Ok((train.with_k(k)?, test.with_k(k)?))
    }

    /// Files the dataset is read from, for manifests.
    pub fn source_files(&self) -> Vec<PathBuf> {
        match self {
            DatasetRef::Mnist { dir, .. } => MNIST_FILES.iter().map(|f| dir.join(f)).collect(),
            DatasetRef::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => vec![train_images.clone(), train_labels.clone(), test_images.clone(), test_labels.clone()],
            DatasetRef::Csv { train, test, .. } => vec![train.clone(), test.clone()],
            DatasetRef::Blobs { .. } => Vec::new(),
        }
    }

    /// Resolves relative paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DatasetRef::Mnist { dir, .. } => fix(dir),
            DatasetRef::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => [train_images, train_labels, test_images, test_labels].into_iter().for_each(fix),
            DatasetRef::Csv { train, test, .. } => {
                fix(train);
                fix(test);
            }
            DatasetRef::Blobs { .. } => {}
        }
    }
}

/// Corruption family swept over the strength grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorruptionSpec {
    Uniform,
    /// Random flip targets drawn from `seed`, or `(i + 1) mod K` when `cyclic`.
    Flip {
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        cyclic: bool,
    },
    /// `groups[c]` is the superclass of class `c`.
    Hierarchical { groups: SuperclassPartition },
}

impl CorruptionSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CorruptionSpec::Uniform => "uniform",
            CorruptionSpec::Flip { .. } => "flip",
            CorruptionSpec::Hierarchical { .. } => "hierarchical",
        }
    }

    pub fn matrix(&self, k: usize, strength: f64) -> Result<ProbMatrix> {
        match self {
            CorruptionSpec::Uniform => make_uniform(k, strength),
            CorruptionSpec::Flip { seed, cyclic } => {
                let target = if *cyclic { FlipTarget::Cyclic } else { FlipTarget::Random { seed: *seed } };
                make_flip_with(k, strength, target)
            }
            CorruptionSpec::Hierarchical { groups } => make_hierarchical(k, strength, groups),
        }
    }
}

/// Full description of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub dataset: DatasetRef,
    pub corruption: CorruptionSpec,
    pub fractions: Vec<f64>,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// `seed` inside is ignored; cell seeds are derived.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    #[serde(default)]
    pub pipeline: PipelineOptions,
    #[serde(default)]
    pub split_mode: SplitMode,
    pub out_dir: PathBuf,
    /// Worker threads; all available cores when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_model() -> ModelSpec {
    ModelSpec::new(vec![256, 256], Default::default())
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() || self.methods.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("fractions, methods and seeds must all be nonempty"));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return Err(Error::invalid(format!("trusted fraction {f} is not in (0, 1)")));
        }
        let mut labels: Vec<String> = self.methods.iter().map(MethodSpec::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("methods list contains duplicates"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("seeds list contains duplicates"));
        }
        if self.jobs == Some(0) {
            return Err(Error::invalid("jobs must be at least 1"));
        }
        for m in &self.methods {
            m.validate()?;
        }
        self.train.validate()
    }

    pub fn total_cells(&self) -> usize {
        self.methods.len() * self.fractions.len() * super::NUM_STRENGTHS * self.seeds.len()
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        Ok(serde_json::from_value(value)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base() -> serde_json::Value {
        json!({
            "dataset": {"type": "blobs", "k": 3, "per_class": 20, "test_per_class": 10, "dim": 2, "separation": 5.0},
            "corruption": {"type": "flip", "seed": 4},
            "fractions": [0.1],
            "methods": [{"kind": "glc"}, {"kind": "no_correction"}],
            "out_dir": "out"
        })
    }

    #[test]
    fn parses_with_defaults() {
        let c = SweepConfig::from_json(base()).unwrap();
        c.validate().unwrap();
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.model.hidden_dims, vec![256, 256]);
        assert_eq!(c.total_cells(), 2 * 11 * 3);
        let (train, test) = c.dataset.load().unwrap();
        assert_eq!((train.len(), test.len(), train.k()), (60, 30, 3));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut v = base();
        v["fractions"] = json!([1.0]);
        assert!(SweepConfig::from_json(v).unwrap().validate().is_err());
        let mut v = base();
        v["methods"] = json!([{"kind": "glc"}, {"kind": "glc"}]);
        assert!(SweepConfig::from_json(v).unwrap().validate().is_err());
        let mut v = base();
        v["surprise"] = json!(1);
        assert!(SweepConfig::from_json(v).is_err());
        let mut v = base();
        v["corruption"] = json!({"type": "hierarchical", "groups": [0, 2]});
        assert!(SweepConfig::from_json(v).is_err());
    }

    #[test]
    fn corruption_matrices() {
        let h = CorruptionSpec::Hierarchical {
            groups: SuperclassPartition::new(vec![0, 0, 1, 1]).unwrap(),
        };
        assert_eq!(h.matrix(4, 0.0).unwrap(), ProbMatrix::identity(4));
        let f = CorruptionSpec::Flip { seed: 0, cyclic: true };
        assert_eq!(f.matrix(3, 1.0).unwrap().get(2, 0), 1.0);
        assert_eq!(CorruptionSpec::Uniform.name(), "uniform");
    }
}
