//! Feed-forward softmax classifier with hand-written backpropagation.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::loss::{self, softmax_in_place};
use super::matrix::{gemm, DenseMatrix};
use crate::corruption::ProbMatrix;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Gelu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Gelu => "gelu",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => x * std_normal_cdf(x),
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Gelu => std_normal_cdf(x) + x * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(),
        }
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2))
}

/// Architecture of a classifier, without weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelSpec {
    pub fn new(hidden_dims: Vec<usize>, activation: Activation) -> Self {
        ModelSpec { hidden_dims, activation }
    }

    /// Zero-weight model for the given input and class counts.
    pub fn build(&self, input_dim: usize, output_dim: usize) -> Result<MlpModel> {
        MlpModel::zeros(input_dim, self.hidden_dims.clone(), output_dim, self.activation)
    }
}

/// Per-example supervision signal.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    /// Plain cross-entropy against a class id.
    Hard(usize),
    /// Cross-entropy of `Ĉᵀ·p` against a noisy class id.
    Corrected(usize, &'a ProbMatrix),
    /// Cross-entropy against a target distribution.
    Soft(&'a [f64]),
}

impl Target<'_> {
    pub(crate) fn loss_and_grad(&self, probs: &[f64], grad: &mut [f64]) -> f64 {
        match *self {
            Target::Hard(y) => loss::plain_with_grad(probs, y, grad),
            Target::Corrected(y, c) => loss::corrected_with_grad(probs, y, c, grad),
            Target::Soft(t) => loss::soft_with_grad(probs, t, grad),
        }
    }

    pub(crate) fn validate(&self, k: usize) -> Result<()> {
        match *self {
            Target::Hard(y) if y >= k => Err(Error::Index { index: y, bound: k }),
            Target::Corrected(y, _) if y >= k => Err(Error::Index { index: y, bound: k }),
            Target::Corrected(_, c) if c.k() != k => Err(Error::invalid(format!(
                "correction matrix is {0}x{0} but the model has {k} classes",
                c.k()
            ))),
            Target::Soft(t) if t.len() != k => Err(Error::invalid("soft target length differs from class count")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Offset of the weight block in the flat parameter vector; bias follows it.
    pub offset: usize,
}

impl LayerShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    fn bias(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }
}

/// Multilayer perceptron with softmax output.
///
/// Parameters live in one flat vector: for each layer, a row-major
/// `fan_in × fan_out` weight block followed by `fan_out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    hidden_dims: Vec<usize>,
    output_dim: usize,
    activation: Activation,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
}

impl MlpModel {
    pub fn zeros(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize, activation: Activation) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden_dims.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let mut dims = vec![input_dim];
        dims.extend(&hidden_dims);
        dims.push(output_dim);
        let mut offset = 0;
        let layers: Vec<LayerShape> = dims
            .windows(2)
            .map(|w| {
                let shape = LayerShape {
                    fan_in: w[0],
                    fan_out: w[1],
                    offset,
                };
                offset += w[0] * w[1] + w[1];
                shape
            })
            .collect();
        Ok(MlpModel {
            input_dim,
            hidden_dims,
            output_dim,
            activation,
            layers,
            params: vec![0.0; offset],
        })
    }

    /// Uniform Glorot initialization of weights, zero biases.
    pub fn initialize(&mut self, seed: u64) {
        let mut rng = rng::stream(seed, "init");
        for layer in &self.layers {
            let bound = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
            for w in &mut self.params[layer.weights()] {
                *w = rng.random_range(-bound..bound);
            }
            self.params[layer.bias()].iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec::new(self.hidden_dims.clone(), self.activation)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layer_weights(&self, layer: usize) -> &[f64] {
        &self.params[self.layers[layer].weights()]
    }

    pub fn layer_bias(&self, layer: usize) -> &[f64] {
        &self.params[self.layers[layer].bias()]
    }

    pub(crate) fn layer_shapes(&self) -> &[LayerShape] {
        &self.layers
    }

    /// Overwrites one layer's parameters. Used by the checkpoint loader.
    pub(crate) fn set_layer(&mut self, layer: usize, weights: &[f64], bias: &[f64]) -> Result<()> {
        let shape = self.layers[layer];
        if weights.len() != shape.fan_in * shape.fan_out || bias.len() != shape.fan_out {
            return Err(Error::invalid(format!("layer {layer} parameter sizes do not match its shape")));
        }
        if weights.iter().chain(bias).any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("layer {layer} has non-finite parameters")));
        }
        self.params[shape.weights()].copy_from_slice(weights);
        self.params[shape.bias()].copy_from_slice(bias);
        Ok(())
    }

    pub fn squared_norm(&self) -> f64 {
        self.params.iter().map(|p| p * p).sum()
    }

    /// Squared norm of the weight blocks only (biases excluded).
    pub fn weight_squared_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| self.params[l.weights()].iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    fn check_features(&self, features: &DenseMatrix) -> Result<()> {
        if features.cols() != self.input_dim {
            return Err(Error::invalid(format!(
                "features have {} columns but the model expects {}",
                features.cols(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Pre-softmax outputs for every row.
    pub fn logits(&self, features: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_features(features)?;
        let n = features.rows();
        let mut out = Vec::with_capacity(n * self.output_dim);
        let mut ws = Workspace::default();
        for start in (0..n).step_by(PREDICT_CHUNK) {
            let end = (start + PREDICT_CHUNK).min(n);
            let rows = end - start;
            ws.prepare(self, rows);
            ws.acts[0][..rows * self.input_dim].copy_from_slice(&features.values()[start * self.input_dim..end * self.input_dim]);
            self.forward(&mut ws, rows);
            out.extend_from_slice(&ws.zs[self.layers.len() - 1][..rows * self.output_dim]);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("model produced non-finite logits"));
        }
        Ok(DenseMatrix::from_vec_unchecked(n, self.output_dim, out))
    }

    /// Softmax probabilities for every row.
    pub fn predict_proba(&self, features: &DenseMatrix) -> Result<DenseMatrix> {
        let mut logits = self.logits(features)?;
        let k = self.output_dim;
        for row in logits.values_mut().chunks_exact_mut(k) {
            softmax_in_place(row);
        }
        Ok(logits)
    }

    /// Argmax class per row, ties going to the lowest index.
    pub fn predict(&self, features: &DenseMatrix) -> Result<Vec<usize>> {
        Ok(self.logits(features)?.iter_rows().map(argmax).collect())
    }

    /// Forward pass over `rows` examples already placed in `ws.acts[0]`.
    pub(crate) fn forward(&self, ws: &mut Workspace, rows: usize) {
        let last = self.layers.len() - 1;
        for (l, shape) in self.layers.iter().enumerate() {
            let (lo, hi) = ws.acts.split_at_mut(l + 1);
            let input = &lo[l][..rows * shape.fan_in];
            let z = &mut ws.zs[l][..rows * shape.fan_out];
            let bias = &self.params[shape.bias()];
            for row in z.chunks_exact_mut(shape.fan_out) {
                row.copy_from_slice(bias);
            }
            gemm(rows, shape.fan_in, shape.fan_out, input, false, &self.params[shape.weights()], false, z, 1.0);
            if l < last {
                let a = &mut hi[0][..rows * shape.fan_out];
                for (a, z) in a.iter_mut().zip(z.iter()) {
                    *a = self.activation.apply(*z);
                }
            }
        }
    }

    /// Mean loss over the batch plus `weight_decay·‖θ‖²`, accumulating the
    /// gradient into `grad` (overwritten). Expects the batch in `ws.acts[0]`.
    pub(crate) fn batch_objective(&self, ws: &mut Workspace, targets: &[Target<'_>], weight_decay: f64, grad: &mut [f64]) -> f64 {
        let rows = targets.len();
        let k = self.output_dim;
        let last = self.layers.len() - 1;
        self.forward(ws, rows);

        let inv = 1.0 / rows as f64;
        let mut total = 0.0;
        {
            let logits = &mut ws.zs[last][..rows * k];
            let delta = &mut ws.delta[..rows * k];
            for ((z, d), t) in logits.chunks_exact_mut(k).zip(delta.chunks_exact_mut(k)).zip(targets) {
                softmax_in_place(z);
                total += t.loss_and_grad(z, d);
                d.iter_mut().for_each(|v| *v *= inv);
            }
        }
        let mut objective = total * inv;

        for l in (0..self.layers.len()).rev() {
            let shape = self.layers[l];
            let input = &ws.acts[l][..rows * shape.fan_in];
            let delta = &ws.delta[..rows * shape.fan_out];
            gemm(shape.fan_in, rows, shape.fan_out, input, true, delta, false, &mut grad[shape.weights()], 0.0);
            let gb = &mut grad[shape.bias()];
            gb.iter_mut().for_each(|g| *g = 0.0);
            for row in delta.chunks_exact(shape.fan_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 {
                let back = &mut ws.back[..rows * shape.fan_in];
                gemm(rows, shape.fan_out, shape.fan_in, delta, false, &self.params[shape.weights()], true, back, 0.0);
                let z_prev = &ws.zs[l - 1][..rows * shape.fan_in];
                for (b, z) in back.iter_mut().zip(z_prev) {
                    *b *= self.activation.derivative(*z);
                }
                std::mem::swap(&mut ws.delta, &mut ws.back);
            }
        }

        if weight_decay > 0.0 {
            let mut sq = 0.0;
            for (g, p) in grad.iter_mut().zip(&self.params) {
                *g += 2.0 * weight_decay * p;
                sq += p * p;
            }
            objective += weight_decay * sq;
        }
        objective
    }

    /// Objective (mean loss + `weight_decay·‖θ‖²`) and its gradient with
    /// respect to the flat parameter vector.
    pub fn objective_and_gradient(&self, features: &DenseMatrix, targets: &[Target<'_>], weight_decay: f64) -> Result<(f64, Vec<f64>)> {
        self.check_features(features)?;
        if targets.len() != features.rows() || targets.is_empty() {
            return Err(Error::invalid("need one target per feature row"));
        }
        for t in targets {
            t.validate(self.output_dim)?;
        }
        let mut ws = Workspace::default();
        ws.prepare(self, targets.len());
        ws.acts[0].copy_from_slice(features.values());
        let mut grad = vec![0.0; self.params.len()];
        let obj = self.batch_objective(&mut ws, targets, weight_decay, &mut grad);
        Ok((obj, grad))
    }
}

const PREDICT_CHUNK: usize = 512;

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = j;
        }
    }
    best
}

/// Scratch buffers sized for one batch.
#[derive(Default)]
pub(crate) struct Workspace {
    pub acts: Vec<Vec<f64>>,
    pub zs: Vec<Vec<f64>>,
    pub delta: Vec<f64>,
    pub back: Vec<f64>,
    capacity: usize,
}

impl Workspace {
    pub fn prepare(&mut self, model: &MlpModel, rows: usize) {
        if self.capacity >= rows && self.acts.len() == model.layers.len() {
            return;
        }
        let widest = model.layers.iter().map(|l| l.fan_in.max(l.fan_out)).max().unwrap_or(0);
        self.acts = model.layers.iter().map(|l| vec![0.0; rows * l.fan_in]).collect();
        self.zs = model.layers.iter().map(|l| vec![0.0; rows * l.fan_out]).collect();
        self.delta = vec![0.0; rows * widest];
        self.back = vec![0.0; rows * widest];
        self.capacity = rows;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_is_uniform() {
        let m = MlpModel::zeros(3, vec![4], 5, Activation::Relu).unwrap();
        let x = DenseMatrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 0.0, 9.0]]).unwrap();
        let p = m.predict_proba(&x).unwrap();
        assert!(p.values().iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn batched_rows_match_single_rows() {
        let mut m = MlpModel::zeros(3, vec![6, 4], 3, Activation::Gelu).unwrap();
        m.initialize(11);
        let rows: Vec<Vec<f64>> = (0..1100).map(|i| vec![(i as f64).sin(), (i as f64 * 0.3).cos(), 0.01 * i as f64]).collect();
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let all = m.predict_proba(&x).unwrap();
        for i in [0, 511, 512, 1099] {
            let single = m.predict_proba(&x.select_rows(&[i])).unwrap();
            for (a, b) in single.row(0).iter().zip(all.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        for row in all.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = MlpModel::zeros(3, vec![], 2, Activation::Relu).unwrap();
        assert!(m.predict_proba(&DenseMatrix::zeros(1, 4)).is_err());
        assert!(MlpModel::zeros(3, vec![0], 2, Activation::Relu).is_err());
    }

    #[test]
    fn initialization_is_seeded_and_bounded() {
        let mut a = MlpModel::zeros(10, vec![20], 3, Activation::Relu).unwrap();
        let mut b = a.clone();
        a.initialize(5);
        b.initialize(5);
        assert_eq!(a, b);
        let bound = (6.0f64 / 30.0).sqrt();
        assert!(a.layer_weights(0).iter().all(|w| w.abs() <= bound));
        assert!(a.layer_bias(0).iter().all(|b| *b == 0.0));
        b.initialize(6);
        assert_ne!(a, b);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }
}
