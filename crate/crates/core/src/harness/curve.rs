use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of corruption strengths every curve is measured at.
pub const NUM_STRENGTHS: usize = 11;

/// Corruption strength at grid index `i`: `i / 10`.
pub fn strength(i: usize) -> f64 {
    i as f64 / 10.0
}

/// The fixed grid `0.0, 0.1, …, 1.0`.
pub fn strengths() -> [f64; NUM_STRENGTHS] {
    std::array::from_fn(strength)
}

/// Trapezoid-rule area under an 11-point error curve over `[0, 1]`.
pub fn auec(errors: &[f64]) -> Result<f64> {
    if errors.len() != NUM_STRENGTHS {
        return Err(Error::invalid(format!(
            "an error curve has {NUM_STRENGTHS} points, got {}",
            errors.len()
        )));
    }
    Ok(errors.windows(2).map(|w| 0.1 * (w[0] + w[1]) / 2.0).sum())
}

/// Percent errors on the fixed strength grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurve")]
pub struct ErrorCurve {
    strengths: Vec<f64>,
    errors: Vec<f64>,
    auec: f64,
}

#[derive(Deserialize)]
struct RawCurve {
    strengths: Vec<f64>,
    errors: Vec<f64>,
    auec: f64,
}

impl TryFrom<RawCurve> for ErrorCurve {
    type Error = Error;

    fn try_from(raw: RawCurve) -> Result<Self> {
        if raw.strengths != strengths() {
            return Err(Error::invalid("curve strengths are not the fixed grid"));
        }
        let curve = ErrorCurve::new(raw.errors)?;
        if (curve.auec - raw.auec).abs() > 1e-9 {
            return Err(Error::invalid(format!("stored AUEC {} disagrees with its errors ({})", raw.auec, curve.auec)));
        }
        Ok(curve)
    }
}

impl ErrorCurve {
    pub fn new(errors: Vec<f64>) -> Result<Self> {
        if let Some(e) = errors.iter().find(|e| !(0.0..=100.0).contains(*e)) {
            return Err(Error::invalid(format!("percent error {e} is outside [0, 100]")));
        }
        let auec = auec(&errors)?;
        Ok(ErrorCurve {
            strengths: strengths().to_vec(),
            errors,
            auec,
        })
    }

    pub fn strengths(&self) -> &[f64] {
        &self.strengths
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn auec(&self) -> f64 {
        self.auec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert!((auec(&[10.0; 11]).unwrap() - 10.0).abs() < 1e-12);
        let linear: Vec<f64> = (0..11).map(|i| 10.0 * i as f64).collect();
        assert!((auec(&linear).unwrap() - 50.0).abs() < 1e-12);
        let mut spike = [3.0; 11];
        spike[10] = 103.0;
        assert!((auec(&spike).unwrap() - 8.0).abs() < 1e-12);
        assert!(auec(&[1.0; 10]).is_err());
    }

    #[test]
    fn curve_validation_and_round_trip() {
        assert!(ErrorCurve::new(vec![101.0; 11]).is_err());
        assert!(ErrorCurve::new(vec![1.0; 3]).is_err());
        let c = ErrorCurve::new((0..11).map(|i| i as f64 * 1.7).collect()).unwrap();
        let back: ErrorCurve = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let mut v = serde_json::to_value(&c).unwrap();
        v["auec"] = serde_json::json!(1.0);
        assert!(serde_json::from_value::<ErrorCurve>(v).is_err());
        assert_eq!(strengths()[3], 0.3);
    }
}
