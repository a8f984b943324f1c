use crate::error::{Error, Result};
use crate::numcore::DenseMatrix;

pub const TEMPERATURE_RANGE: (f64, f64) = (0.05, 20.0);
pub const TEMPERATURE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureFit {
    pub temperature: f64,
    /// Mean NLL at the fitted temperature.
    pub nll: f64,
    pub nll_at_one: f64,
    pub warning: Option<String>,
}

/// Mean cross-entropy of `softmax(logits / T)` against `labels`.
pub fn mean_nll(logits: &DenseMatrix, labels: &[usize], temperature: f64) -> f64 {
    let mut total = 0.0;
    for (row, &y) in logits.iter_rows().zip(labels) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)) / temperature;
        let lse = max + row.iter().map(|z| (z / temperature - max).exp()).sum::<f64>().ln();
        total += lse - row[y] / temperature;
    }
    total / labels.len() as f64
}

/// Row-wise `softmax(logits / T)`.
pub fn apply_temperature(logits: &DenseMatrix, temperature: f64) -> Result<DenseMatrix> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!("temperature {temperature} must be positive")));
    }
    let mut values = Vec::with_capacity(logits.values().len());
    for row in logits.iter_rows() {
        let scaled: Vec<f64> = row.iter().map(|z| z / temperature).collect();
        values.extend(crate::numcore::softmax(&scaled)?);
    }
    DenseMatrix::from_vec(logits.rows(), logits.cols(), values)
}

/// Golden-section search for the temperature minimizing validation NLL.
pub fn calibrate_temperature(logits: &DenseMatrix, labels: &[usize]) -> Result<TemperatureFit> {
    let (n, k) = (logits.rows(), logits.cols());
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {n} logit rows", labels.len())));
    }
    if n < k || n == 0 {
        return Err(Error::InsufficientData(format!(
            "temperature calibration needs at least as many examples as classes ({n} < {k})"
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Index { index: bad, bound: k });
    }
    let nll_at_one = mean_nll(logits, labels, 1.0);
    if labels.iter().all(|&y| y == labels[0]) {
        let msg = "calibration labels contain a single class; using temperature 1".to_string();
        log::warn!("{msg}");
        return Ok(TemperatureFit {
            temperature: 1.0,
            nll: nll_at_one,
            nll_at_one,
            warning: Some(msg),
        });
    }

    let f = |t: f64| mean_nll(logits, labels, t);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = TEMPERATURE_RANGE;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > TEMPERATURE_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let t = (a + b) / 2.0;
    let nll = f(t);
    // a non-unimodal objective could leave the search worse than T = 1
    let (temperature, nll) = if nll <= nll_at_one { (t, nll) } else { (1.0, nll_at_one) };
    Ok(TemperatureFit {
        temperature,
        nll,
        nll_at_one,
        warning: None,
    })
}
