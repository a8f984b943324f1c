use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::numcore::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndependenceConfig {
    pub alpha: f64,
    /// Cells with fewer examples are not tested.
    pub min_count: usize,
}

impl Default for IndependenceConfig {
    fn default() -> Self {
        IndependenceConfig { alpha: 0.01, min_count: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: usize,
    pub n: usize,
    /// Distinct true labels seen in the cell.
    pub true_classes: usize,
    pub noisy_classes: usize,
    pub statistic: Option<f64>,
    pub dof: usize,
    pub p_value: Option<f64>,
    pub rejected: bool,
    /// Fewer than two distinct values on either side; independence holds trivially.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub alpha: f64,
    pub min_count: usize,
    pub cells: Vec<CellReport>,
    pub tested_cells: usize,
    pub degenerate_cells: usize,
    pub rejected_cells: usize,
    /// Rejected cells over tested cells, degenerate cells counting as not rejected.
    pub rejection_fraction: f64,
    /// Tested cells containing more than one true class.
    pub mixed_cells: usize,
    pub mixed_rejection_fraction: Option<f64>,
}

impl IndependenceReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

/// Assigns each row to an equal-width grid cell, `bins` per feature, spanning
/// each feature's observed range. Cell ids are mixed-radix with the first
/// feature most significant.
pub fn bin_features(features: &DenseMatrix, bins: usize) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::invalid("need at least one bin per feature"));
    }
    let d = features.cols();
    let total = (bins as f64).powi(d as i32);
    if total > usize::MAX as f64 / 2.0 {
        return Err(Error::invalid(format!("{bins}^{d} cells do not fit in a cell id")));
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in features.iter_rows() {
        for (j, v) in row.iter().enumerate() {
            lo[j] = lo[j].min(*v);
            hi[j] = hi[j].max(*v);
        }
    }
    Ok(features
        .iter_rows()
        .map(|row| {
            row.iter().enumerate().fold(0, |id, (j, v)| {
                let width = hi[j] - lo[j];
                let b = if width > 0.0 { (((v - lo[j]) / width * bins as f64) as usize).min(bins - 1) } else { 0 };
                id * bins + b
            })
        })
        .collect())
}

fn test_cell(cell: usize, y: &[usize], y_noisy: &[usize], alpha: f64) -> CellReport {
    let n = y.len();
    let mut rows: Vec<usize> = y.to_vec();
    rows.sort_unstable();
    rows.dedup();
    let mut cols: Vec<usize> = y_noisy.to_vec();
    cols.sort_unstable();
    cols.dedup();
    let (r, c) = (rows.len(), cols.len());
    let mut report = CellReport {
        cell,
        n,
        true_classes: r,
        noisy_classes: c,
        statistic: None,
        dof: 0,
        p_value: None,
        rejected: false,
        degenerate: r < 2 || c < 2,
    };
    if report.degenerate {
        return report;
    }
    let mut table = vec![0.0; r * c];
    for (a, b) in y.iter().zip(y_noisy) {
        let i = rows.binary_search(a).unwrap();
        let j = cols.binary_search(b).unwrap();
        table[i * c + j] += 1.0;
    }
    let row_sums: Vec<f64> = (0..r).map(|i| table[i * c..(i + 1) * c].iter().sum()).collect();
    let col_sums: Vec<f64> = (0..c).map(|j| (0..r).map(|i| table[i * c + j]).sum()).collect();
    let total = n as f64;
    let mut stat = 0.0;
    for i in 0..r {
        for j in 0..c {
            let expected = row_sums[i] * col_sums[j] / total;
            stat += (table[i * c + j] - expected).powi(2) / expected;
        }
    }
    let dof = (r - 1) * (c - 1);
    let p = ChiSquared::new(dof as f64).expect("positive degrees of freedom").sf(stat);
    report.statistic = Some(stat);
    report.dof = dof;
    report.p_value = Some(p);
    report.rejected = p < alpha;
    report
}

/// Chi-square test of independence between true and noisy labels within
/// each cell of a caller-supplied partition of the input space.
pub fn conditional_independence_check(y: &[usize], y_noisy: &[usize], cells: &[usize], config: &IndependenceConfig) -> Result<IndependenceReport> {
    if y.len() != y_noisy.len() || y.len() != cells.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} true labels, {} noisy labels, {} cell ids",
            y.len(),
            y_noisy.len(),
            cells.len()
        )));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {} is not in (0, 1)", config.alpha)));
    }
    let mut members: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> = Default::default();
    for ((&a, &b), &cell) in y.iter().zip(y_noisy).zip(cells) {
        let entry = members.entry(cell).or_default();
        entry.0.push(a);
        entry.1.push(b);
    }
    let reports: Vec<CellReport> = members
        .iter()
        .filter(|(_, (ys, _))| ys.len() >= config.min_count.max(1))
        .map(|(&cell, (ys, ns))| test_cell(cell, ys, ns, config.alpha))
        .collect();
    if reports.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no cell has at least {} examples",
            config.min_count
        )));
    }
    let tested = reports.len();
    let rejected = reports.iter().filter(|r| r.rejected).count();
    let mixed: Vec<&CellReport> = reports.iter().filter(|r| r.true_classes > 1).collect();
    let mixed_rejection_fraction =
        (!mixed.is_empty()).then(|| mixed.iter().filter(|r| r.rejected).count() as f64 / mixed.len() as f64);
    Ok(IndependenceReport {
        alpha: config.alpha,
        min_count: config.min_count,
        tested_cells: tested,
        degenerate_cells: reports.iter().filter(|r| r.degenerate).count(),
        rejected_cells: rejected,
        rejection_fraction: rejected as f64 / tested as f64,
        mixed_cells: mixed.len(),
        mixed_rejection_fraction,
        cells: reports,
    })
}
