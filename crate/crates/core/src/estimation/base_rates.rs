use nalgebra::{DMatrix, DVector};

use crate::corruption::ProbMatrix;
use crate::error::{Error, Result};

/// Largest accepted ∞-norm residual of the solved KKT system.
pub const KKT_RESIDUAL_TOL: f64 = 1e-9;

/// Unconstrained-sign solution of the base-rate refinement.
///
/// Entries may be negative; [`BaseRateRefinement::to_prob_matrix`] clips and
/// renormalizes them for use in training.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseRateRefinement {
    pub k: usize,
    /// Row-major K×K solution.
    pub entries: Vec<f64>,
    pub kkt_residual: f64,
}

impl BaseRateRefinement {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.k..(i + 1) * self.k]
    }

    pub fn has_negative_entries(&self) -> bool {
        self.entries.iter().any(|v| *v < 0.0)
    }

    /// Clips negative entries to 0 and renormalizes rows. The second value is
    /// a warning when anything was clipped.
    pub fn to_prob_matrix(&self) -> Result<(ProbMatrix, Option<String>)> {
        let clipped: Vec<f64> = self.entries.iter().map(|v| v.max(0.0)).collect();
        let warning = self.has_negative_entries().then(|| {
            let msg = "refined matrix had negative entries; clipped to 0 and rows renormalized".to_string();
            log::warn!("{msg}");
            msg
        });
        let zero_row = (0..self.k).find(|&i| clipped[i * self.k..(i + 1) * self.k].iter().sum::<f64>() <= 0.0);
        if let Some(i) = zero_row {
            return Err(Error::invalid(format!("refined row {i} has no positive mass")));
        }
        Ok((ProbMatrix::from_rows_normalized(self.k, clipped)?, warning))
    }
}

/// Empirical label frequencies.
pub fn empirical_base_rates(labels: &[usize], k: usize) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(Error::invalid("base rates need at least one label"));
    }
    let mut counts = vec![0.0; k];
    for &y in labels {
        if y >= k {
            return Err(Error::Index { index: y, bound: k });
        }
        counts[y] += 1.0;
    }
    let n = labels.len() as f64;
    Ok(counts.into_iter().map(|c| c / n).collect())
}

fn check_prob_vector(name: &str, v: &[f64], k: usize) -> Result<()> {
    if v.len() != k {
        return Err(Error::invalid(format!("{name} has length {}, expected {k}", v.len())));
    }
    let sum: f64 = v.iter().sum();
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::invalid(format!("{name} is not a probability vector")));
    }
    Ok(())
}

/// Minimizes `‖Cᵀb − b̃‖² + λ‖C − C₀‖²` over K×K matrices with unit row sums.
///
/// The unknowns are `vec(C)` in row-major order followed by one multiplier
/// per row constraint. The Hessian block is `2 b bᵀ ⊗ I + 2λ I`, which is
/// singular for `λ = 0` and `K ≥ 2`. The reported residual is the ∞-norm
/// residual of the system with stationarity rows scaled to unit size.
pub fn refine_base_rates(c0: &ProbMatrix, b: &[f64], b_tilde: &[f64], lambda: f64) -> Result<BaseRateRefinement> {
    let k = c0.k();
    check_prob_vector("b", b, k)?;
    check_prob_vector("b_tilde", b_tilde, k)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda {lambda} must be a nonnegative number")));
    }
    let nv = k * k;
    let size = nv + k;
    // stationarity rows are divided by s (and multipliers rescaled by s) so
    // the residual is meaningful for any λ
    let s = 2.0 * (lambda + b.iter().map(|v| v * v).sum::<f64>());
    let mut m = DMatrix::<f64>::zeros(size, size);
    let mut rhs = DVector::<f64>::zeros(size);
    for i in 0..k {
        for j in 0..k {
            let r = i * k + j;
            for i2 in 0..k {
                m[(r, i2 * k + j)] += 2.0 * b[i] * b[i2] / s;
            }
            m[(r, r)] += 2.0 * lambda / s;
            m[(r, nv + i)] = 1.0;
            m[(nv + i, r)] = 1.0;
            rhs[r] = (2.0 * b[i] * b_tilde[j] + 2.0 * lambda * c0.get(i, j)) / s;
        }
        rhs[nv + i] = 1.0;
    }

    if lambda == 0.0 {
        let sv = m.clone().singular_values();
        let max = sv.max();
        if sv.iter().any(|s| *s <= max * 1e-12) {
            return Err(Error::RegularizationRequired { lambda });
        }
    }
    let x = m
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(Error::RegularizationRequired { lambda })?;
    let kkt_residual = (&m * &x - &rhs).amax();
    if !kkt_residual.is_finite() || kkt_residual >= KKT_RESIDUAL_TOL {
        return Err(Error::invalid(format!("KKT system solved with residual {kkt_residual:e}")));
    }
    Ok(BaseRateRefinement {
        k,
        entries: x.as_slice()[..nv].to_vec(),
        kkt_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn objective(c: &[f64], c0: &ProbMatrix, b: &[f64], bt: &[f64], lambda: f64) -> f64 {
        let k = c0.k();
        let mut total = 0.0;
        for j in 0..k {
            let s: f64 = (0..k).map(|i| b[i] * c[i * k + j]).sum();
            total += (s - bt[j]).powi(2);
        }
        total + lambda * c.iter().zip(c0.entries()).map(|(a, z)| (a - z).powi(2)).sum::<f64>()
    }

    #[test]
    fn consistent_start_is_a_fixed_point() {
        let c0 = ProbMatrix::from_rows(&[vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap();
        let b = [0.4, 0.6];
        let bt = c0.transpose_apply(&b);
        let r = refine_base_rates(&c0, &b, &bt, 0.5).unwrap();
        for (a, z) in r.entries.iter().zip(c0.entries()) {
            assert!((a - z).abs() < 1e-12);
        }
    }

    #[test]
    fn large_lambda_stays_at_start() {
        let c0 = ProbMatrix::from_rows(&[vec![0.8, 0.1, 0.1], vec![0.3, 0.7, 0.0], vec![0.2, 0.2, 0.6]]).unwrap();
        let r = refine_base_rates(&c0, &[0.2, 0.3, 0.5], &[0.5, 0.25, 0.25], 1e9).unwrap();
        for (a, z) in r.entries.iter().zip(c0.entries()) {
            assert!((a - z).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_lambda_needs_regularization() {
        let c0 = ProbMatrix::identity(2);
        assert!(matches!(
            refine_base_rates(&c0, &[0.5, 0.5], &[0.6, 0.4], 0.0),
            Err(Error::RegularizationRequired { .. })
        ));
        // a single class is fully determined by the constraint
        let one = refine_base_rates(&ProbMatrix::identity(1), &[1.0], &[1.0], 0.0).unwrap();
        assert!((one.entries[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_inputs() {
        let c0 = ProbMatrix::identity(2);
        assert!(refine_base_rates(&c0, &[0.5], &[0.6, 0.4], 1.0).is_err());
        assert!(refine_base_rates(&c0, &[0.5, 0.6], &[0.6, 0.4], 1.0).is_err());
        assert!(refine_base_rates(&c0, &[0.5, 0.5], &[0.6, 0.4], -1.0).is_err());
    }

    #[test]
    fn clipping_warns() {
        let r = BaseRateRefinement {
            k: 2,
            entries: vec![1.1, -0.1, 0.5, 0.5],
            kkt_residual: 0.0,
        };
        let (p, w) = r.to_prob_matrix().unwrap();
        assert_eq!(p.row(0), &[1.0, 0.0]);
        assert!(w.is_some());
    }

    #[test]
    fn base_rates_from_labels() {
        assert_eq!(empirical_base_rates(&[0, 1, 1, 3], 4).unwrap(), vec![0.25, 0.5, 0.0, 0.25]);
        assert!(empirical_base_rates(&[], 2).is_err());
        assert!(empirical_base_rates(&[2], 2).is_err());
    }

    fn prob_vec(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn rows_sum_to_one_and_stationary(
            (k, rows, b, bt) in (2usize..6).prop_flat_map(|k| (Just(k), prop::collection::vec(prob_vec(k), k), prob_vec(k), prob_vec(k))),
            lambda in 1e-3f64..10.0,
        ) {
            let c0 = ProbMatrix::from_rows(&rows).unwrap();
            let r = refine_base_rates(&c0, &b, &bt, lambda).unwrap();
            for i in 0..k {
                prop_assert!((r.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            prop_assert!(r.kkt_residual < KKT_RESIDUAL_TOL);
            // feasible perturbations that keep row sums never improve the objective
            let f = objective(&r.entries, &c0, &b, &bt, lambda);
            for i in 0..k {
                let mut c = r.entries.clone();
                c[i * k] += 1e-3;
                c[i * k + 1] -= 1e-3;
                prop_assert!(objective(&c, &c0, &b, &bt, lambda) >= f - 1e-12);
            }
        }
    }
}
