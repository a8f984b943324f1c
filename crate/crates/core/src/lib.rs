//! Training softmax classifiers on noisy labels with a small trusted subset.
//!
//! The crate estimates the label corruption matrix `C` (with
//! `C[i][j] = p(noisy = j | true = i)`) from a classifier trained on the
//! untrusted data, averaging its softmax outputs over trusted examples of each
//! class, and then trains a fresh classifier whose outputs are pushed through
//! `Ĉᵀ` on untrusted examples. Baselines (forward correction, confusion
//! matrices, distillation, uncorrected training) and an experiment harness
//! that sweeps corruption strengths are included.

pub mod corruption;
pub mod estimation;
pub mod data;
pub mod error;
pub mod harness;
pub mod numcore;
pub mod rng;
pub mod training;

pub use error::{Error, ErrorKind, Result};
