//! Dense numerics, the softmax MLP, losses and optimizers.

mod checkpoint;
mod loss;
mod matrix;
mod mlp;
mod optim;
mod train;

pub use checkpoint::MODEL_VERSION;
pub use loss::{corrected_cross_entropy, cross_entropy, soft_cross_entropy, softmax, LOG_FLOOR};
pub use matrix::DenseMatrix;
pub use mlp::{Activation, MlpModel, ModelSpec, Target};
pub use optim::{OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, SGD_MOMENTUM};
pub use train::{fit, predict_proba, train, train_targets, Correction, Examples, TrainConfig, TrainHistory};

pub(crate) use mlp::argmax;
