use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numcore::DenseMatrix;
use crate::rng;

/// Unit-norm class centers: standard basis vectors when `dim ≥ k`, points on
/// the unit circle of the first two axes when `2 ≤ dim < k`, and evenly
/// spaced points in `[-1, 1]` when `dim = 1`.
pub fn blob_centers(k: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| {
            let mut c = vec![0.0; dim];
            if dim >= k {
                c[i] = 1.0;
            } else if dim >= 2 {
                let angle = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                c[0] = angle.cos();
                c[1] = angle.sin();
            } else {
                c[0] = -1.0 + 2.0 * i as f64 / (k - 1) as f64;
            }
            c
        })
        .collect()
}

/// Isotropic unit-variance Gaussian blobs centered at `separation · centerᵢ`,
/// laid out class by class.
pub fn generate_gaussian_blobs(k: usize, per_class: usize, dim: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if k < 2 || per_class == 0 || dim == 0 {
        return Err(Error::invalid("blobs need k >= 2, per_class >= 1 and dim >= 1"));
    }
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(Error::invalid("separation must be a nonnegative number"));
    }
    let centers = blob_centers(k, dim);
    let mut rng = rng::stream(seed, "blobs");
    let mut values = Vec::with_capacity(k * per_class * dim);
    let mut labels = Vec::with_capacity(k * per_class);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            for c in center {
                let noise: f64 = StandardNormal.sample(&mut rng);
                values.push(separation * c + noise);
            }
            labels.push(class);
        }
    }
    let features = DenseMatrix::from_vec(k * per_class, dim, values)?;
    Dataset::new(format!("blobs-k{k}-d{dim}-s{separation}"), features, labels, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_are_unit_norm_and_distinct() {
        for (k, dim) in [(3, 5), (5, 2), (4, 3), (2, 1), (3, 1)] {
            let c = blob_centers(k, dim);
            for a in &c {
                if dim > 1 || k == 2 {
                    assert!((a.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
                }
            }
            for i in 0..k {
                for j in 0..i {
                    assert_ne!(c[i], c[j]);
                }
            }
        }
    }

    #[test]
    fn seeded_and_shaped() {
        let a = generate_gaussian_blobs(3, 10, 2, 4.0, 9).unwrap();
        assert_eq!(a, generate_gaussian_blobs(3, 10, 2, 4.0, 9).unwrap());
        assert_ne!(a, generate_gaussian_blobs(3, 10, 2, 4.0, 10).unwrap());
        assert_eq!((a.len(), a.dim(), a.k()), (30, 2, 3));
        assert_eq!(a.class_counts(), vec![10, 10, 10]);
        assert!(generate_gaussian_blobs(1, 10, 2, 1.0, 0).is_err());
        assert!(generate_gaussian_blobs(2, 10, 2, -1.0, 0).is_err());
    }
}
