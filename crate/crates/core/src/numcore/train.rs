//! Mini-batch training loop.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use super::mlp::{MlpModel, Target, Workspace};
use super::optim::{Optimizer, OptimizerKind};
use crate::corruption::ProbMatrix;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Coefficient λ of the `λ‖θ‖²` penalty over all parameters.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Adam, 10 epochs, batch 32, lr 1e-3, λ = 1e-6.
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            weight_decay: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::invalid("weight_decay must be nonnegative"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig { seed, ..self.clone() }
    }
}

/// How the loss treats one training example.
#[derive(Debug, Clone, Copy)]
pub enum Correction<'a> {
    Identity,
    Matrix(&'a ProbMatrix),
}

/// Rows drawn from one or more feature matrices, addressed as one sequence.
#[derive(Debug, Clone)]
pub struct Examples<'a> {
    parts: Vec<(&'a DenseMatrix, Option<&'a [usize]>)>,
    starts: Vec<usize>,
    len: usize,
    dim: usize,
}

impl<'a> Examples<'a> {
    pub fn new() -> Self {
        Examples {
            parts: Vec::new(),
            starts: Vec::new(),
            len: 0,
            dim: 0,
        }
    }

    fn push(mut self, m: &'a DenseMatrix, rows: Option<&'a [usize]>) -> Result<Self> {
        if self.parts.is_empty() {
            self.dim = m.cols();
        } else if m.cols() != self.dim {
            return Err(Error::invalid("stacked feature matrices differ in width"));
        }
        if let Some(r) = rows {
            if let Some(&bad) = r.iter().find(|&&i| i >= m.rows()) {
                return Err(Error::Index { index: bad, bound: m.rows() });
            }
        }
        self.starts.push(self.len);
        self.len += rows.map_or(m.rows(), <[usize]>::len);
        self.parts.push((m, rows));
        Ok(self)
    }

    /// Appends every row of `m`.
    pub fn with(self, m: &'a DenseMatrix) -> Result<Self> {
        self.push(m, None)
    }

    /// Appends the listed rows of `m`, in order.
    pub fn with_rows(self, m: &'a DenseMatrix, rows: &'a [usize]) -> Result<Self> {
        self.push(m, Some(rows))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        let p = self.starts.partition_point(|&s| s <= i) - 1;
        let (m, rows) = self.parts[p];
        let local = i - self.starts[p];
        m.row(rows.map_or(local, |r| r[local]))
    }
}

impl Default for Examples<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> From<&'a DenseMatrix> for Examples<'a> {
    fn from(m: &'a DenseMatrix) -> Self {
        Examples::new().with(m).expect("a single matrix always stacks")
    }
}

/// Per-epoch statistics of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean objective over the batches of each epoch.
    pub epoch_objective: Vec<f64>,
    /// Squared parameter norm at the end of each epoch.
    pub epoch_param_sq_norm: Vec<f64>,
}

/// Initializes `model` from `config.seed` and trains it on hard labels,
/// optionally corrected per example.
pub fn train(
    model: MlpModel,
    features: &DenseMatrix,
    labels: &[usize],
    corrections: Option<&[Correction<'_>]>,
    config: &TrainConfig,
) -> Result<MlpModel> {
    if features.rows() != labels.len() {
        return Err(Error::invalid(format!(
            "{} feature rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    if let Some(c) = corrections {
        if c.len() != labels.len() {
            return Err(Error::invalid(format!("{} corrections for {} labels", c.len(), labels.len())));
        }
    }
    let targets: Vec<Target<'_>> = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| match corrections.map(|c| c[i]) {
            Some(Correction::Matrix(m)) => Target::Corrected(y, m),
            _ => Target::Hard(y),
        })
        .collect();
    let (model, _) = train_targets(model, &Examples::from(features), &targets, config)?;
    Ok(model)
}

/// Initializes `model` from `config.seed`, then runs [`fit`].
pub fn train_targets(mut model: MlpModel, examples: &Examples<'_>, targets: &[Target<'_>], config: &TrainConfig) -> Result<(MlpModel, TrainHistory)> {
    model.initialize(config.seed);
    let history = fit(&mut model, examples, targets, config)?;
    Ok((model, history))
}

/// Trains from the model's current weights. Batches are reshuffled every
/// epoch from a stream keyed by `config.seed`; the final partial batch is kept.
pub fn fit(model: &mut MlpModel, examples: &Examples<'_>, targets: &[Target<'_>], config: &TrainConfig) -> Result<TrainHistory> {
    config.validate()?;
    if examples.len() != targets.len() {
        return Err(Error::invalid(format!("{} examples but {} targets", examples.len(), targets.len())));
    }
    if examples.is_empty() {
        return Err(Error::invalid("cannot train on an empty set"));
    }
    if examples.dim() != model.input_dim() {
        return Err(Error::invalid(format!(
            "features have {} columns but the model expects {}",
            examples.dim(),
            model.input_dim()
        )));
    }
    for t in targets {
        t.validate(model.output_dim())?;
    }

    let n = examples.len();
    let dim = examples.dim();
    let bs = config.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng::stream(config.seed, "shuffle");
    let mut optimizer = Optimizer::new(config.optimizer, model.params().len());
    let mut grad = vec![0.0; model.params().len()];
    let mut ws = Workspace::default();
    let mut batch_targets: Vec<Target<'_>> = Vec::with_capacity(bs);
    let mut history = TrainHistory::default();
    let mut batch_index = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_total = 0.0;
        let mut epoch_batches = 0;
        for chunk in order.chunks(bs) {
            ws.prepare(model, bs);
            batch_targets.clear();
            for (slot, &i) in chunk.iter().enumerate() {
                ws.acts[0][slot * dim..(slot + 1) * dim].copy_from_slice(examples.row(i));
                batch_targets.push(targets[i]);
            }
            let objective = model.batch_objective(&mut ws, &batch_targets, config.weight_decay, &mut grad);
            if !objective.is_finite() {
                return Err(Error::Divergence { batch: batch_index, epoch });
            }
            optimizer.step(model.params_mut(), &grad, config.learning_rate);
            epoch_total += objective;
            epoch_batches += 1;
            batch_index += 1;
        }
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                batch: batch_index.saturating_sub(1),
                epoch,
            });
        }
        history.epoch_objective.push(epoch_total / epoch_batches as f64);
        history.epoch_param_sq_norm.push(model.squared_norm());
    }
    Ok(history)
}

/// Softmax probabilities for each feature row.
pub fn predict_proba(model: &MlpModel, features: &DenseMatrix) -> Result<DenseMatrix> {
    model.predict_proba(features)
}
