//! Softmax and the three cross-entropy forms used in training.
//!
//! Each loss has a public scalar form and a crate-private form that also
//! writes the gradient with respect to the logits feeding the softmax.

use crate::corruption::ProbMatrix;
use crate::error::{Error, Result};

/// Floor applied inside every logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("softmax input contains non-finite values"));
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    let inv = 1.0 / sum;
    v.iter_mut().for_each(|x| *x *= inv);
}

fn check_label(label: usize, k: usize) -> Result<()> {
    if label >= k {
        Err(Error::Index { index: label, bound: k })
    } else {
        Ok(())
    }
}

/// `-ln(max(probs[label], LOG_FLOOR))`.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    check_label(label, probs.len())?;
    if probs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("probabilities contain non-finite values"));
    }
    Ok(-probs[label].max(LOG_FLOOR).ln())
}

/// Cross-entropy of the corrected output `Ĉᵀ·probs` against a noisy label.
pub fn corrected_cross_entropy(probs: &[f64], label: usize, c_hat: &ProbMatrix) -> Result<f64> {
    if probs.len() != c_hat.k() {
        return Err(Error::invalid(format!(
            "probability vector of length {} does not match a {}x{} correction",
            probs.len(),
            c_hat.k(),
            c_hat.k()
        )));
    }
    let corrected = c_hat.transpose_apply(probs);
    let sum: f64 = corrected.iter().sum();
    if corrected.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::invalid("corrected output is not a probability vector"));
    }
    cross_entropy(&corrected, label)
}

/// `-Σⱼ tⱼ ln(max(pⱼ, LOG_FLOOR))` for a soft target distribution `t`.
pub fn soft_cross_entropy(probs: &[f64], targets: &[f64]) -> Result<f64> {
    if probs.len() != targets.len() {
        return Err(Error::invalid("target and probability lengths differ"));
    }
    Ok(soft_loss(probs, targets))
}

fn soft_loss(probs: &[f64], targets: &[f64]) -> f64 {
    -probs
        .iter()
        .zip(targets)
        .map(|(p, t)| t * p.max(LOG_FLOOR).ln())
        .sum::<f64>()
}

// Gradient forms. `probs` is the softmax output, `grad` receives d(loss)/d(logits).
// Where the floor is active the loss is locally constant and the gradient is zero.

pub(crate) fn plain_with_grad(probs: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    let p = probs[label];
    if p >= LOG_FLOOR {
        grad.copy_from_slice(probs);
        grad[label] -= 1.0;
    } else {
        grad.iter_mut().for_each(|g| *g = 0.0);
    }
    -p.max(LOG_FLOOR).ln()
}

pub(crate) fn corrected_with_grad(probs: &[f64], label: usize, c_hat: &ProbMatrix, grad: &mut [f64]) -> f64 {
    let k = probs.len();
    let mut s = 0.0;
    for (i, p) in probs.iter().enumerate() {
        s += c_hat.get(i, label) * p;
    }
    if s >= LOG_FLOOR {
        // d/dz_i of -ln (Cᵀp)_y = p_i - p_i C_iy / (Cᵀp)_y
        for i in 0..k {
            grad[i] = probs[i] - probs[i] * c_hat.get(i, label) / s;
        }
    } else {
        grad.iter_mut().for_each(|g| *g = 0.0);
    }
    -s.max(LOG_FLOOR).ln()
}

pub(crate) fn soft_with_grad(probs: &[f64], targets: &[f64], grad: &mut [f64]) -> f64 {
    let active_mass: f64 = probs
        .iter()
        .zip(targets)
        .filter(|(p, _)| **p >= LOG_FLOOR)
        .map(|(_, t)| *t)
        .sum();
    for ((g, p), t) in grad.iter_mut().zip(probs).zip(targets) {
        *g = if *p >= LOG_FLOOR { p * active_mass - t } else { p * active_mass };
    }
    soft_loss(probs, targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let big = softmax(&[1000.0, 0.0]).unwrap();
        assert!(close(big[0], 1.0, 1e-12) && big[1] >= 0.0 && big[1] < 1e-300);
        let third = softmax(&[1f64.ln(), 2f64.ln(), 3f64.ln()]).unwrap();
        for (got, want) in third.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!(close(*got, want, 1e-15));
        }
        assert!(softmax(&[0.0, f64::INFINITY]).is_err());
        assert!(softmax(&[f64::NAN]).is_err());
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        assert!(close(cross_entropy(&[1.0, 0.0], 0).unwrap(), 0.0, 1e-15));
        assert!(close(cross_entropy(&[0.5, 0.5], 1).unwrap(), 2f64.ln(), 1e-15));
        // −ln(1e−12) = 12·ln 10
        assert!(close(cross_entropy(&[0.0, 1.0], 0).unwrap(), 12.0 * 10f64.ln(), 1e-12));
        assert!(close(12.0 * 10f64.ln(), 27.631021115928547, 1e-12));
        assert!(matches!(cross_entropy(&[0.5, 0.5], 2), Err(Error::Index { index: 2, bound: 2 })));
    }

    #[test]
    fn corrected_examples() {
        let c = ProbMatrix::from_rows(&[vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap();
        let got = corrected_cross_entropy(&[0.9, 0.1], 0, &c).unwrap();
        assert!(close(got, -(0.75f64).ln(), 1e-15));

        let p = [0.2, 0.5, 0.3];
        let id = ProbMatrix::identity(3);
        for y in 0..3 {
            assert_eq!(corrected_cross_entropy(&p, y, &id).unwrap(), cross_entropy(&p, y).unwrap());
        }

        let uniform = ProbMatrix::new(3, vec![1.0 / 3.0; 9]).unwrap();
        for y in 0..3 {
            assert!(close(corrected_cross_entropy(&p, y, &uniform).unwrap(), 3f64.ln(), 1e-12));
        }
        assert!(corrected_cross_entropy(&[0.5, 0.5], 0, &uniform).is_err());
    }

    #[test]
    fn gradient_forms_agree_with_identity_and_one_hot() {
        let p = [0.1, 0.6, 0.3];
        let id = ProbMatrix::identity(3);
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        let mut c = [0.0; 3];
        for y in 0..3 {
            let la = plain_with_grad(&p, y, &mut a);
            let lb = corrected_with_grad(&p, y, &id, &mut b);
            let mut t = [0.0; 3];
            t[y] = 1.0;
            let lc = soft_with_grad(&p, &t, &mut c);
            assert_eq!(la, lb);
            assert_eq!(la, lc);
            assert_eq!(a, b);
            assert_eq!(a, c);
        }
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(v in prop::collection::vec(-50.0f64..50.0, 1..8), c in -100.0f64..100.0) {
            let a = softmax(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = softmax(&shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(a.iter().all(|x| *x > 0.0));
        }
    }
}
