use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// File-format tag for serialized matrices.
pub const CMAT_VERSION: &str = "goldcorrect-cmat/1";

/// Row-sum tolerance for matrices built in memory.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Row-sum tolerance accepted when loading from disk.
pub const LOAD_ROW_SUM_TOL: f64 = 1e-6;

/// A K×K row-stochastic matrix; entry `(i, j)` is `p(noisy = j | true = i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    k: usize,
    entries: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CmatFile {
    version: String,
    k: usize,
    rows: Vec<Vec<f64>>,
}

impl ProbMatrix {
    /// Validates entries in `[0, 1]` and row sums within [`ROW_SUM_TOL`].
    pub fn new(k: usize, entries: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(k, entries, ROW_SUM_TOL)
    }

    fn with_tolerance(k: usize, entries: Vec<f64>, tol: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("probability matrix needs k >= 1"));
        }
        if entries.len() != k * k {
            return Err(Error::invalid(format!("expected {} entries for k = {k}, got {}", k * k, entries.len())));
        }
        for (idx, &v) in entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "entry ({}, {}) = {v} is outside [0, 1]",
                    idx / k,
                    idx % k
                )));
            }
        }
        for (i, row) in entries.chunks_exact(k).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::invalid(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(ProbMatrix { k, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("probability matrix must be square"));
        }
        Self::new(k, rows.concat())
    }

    /// Divides each row by its sum. Rows must be nonnegative with positive sum.
    pub(crate) fn from_rows_normalized(k: usize, mut entries: Vec<f64>) -> Result<Self> {
        for row in entries.chunks_exact_mut(k) {
            let sum: f64 = row.iter().sum();
            if !(sum > 0.0) || !sum.is_finite() {
                return Err(Error::invalid("row with non-positive mass cannot be normalized"));
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        Self::new(k, entries)
    }

    pub fn identity(k: usize) -> Self {
        let mut entries = vec![0.0; k * k];
        for i in 0..k {
            entries[i * k + i] = 1.0;
        }
        ProbMatrix { k, entries }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.k..(i + 1) * self.k]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks_exact(self.k).map(<[f64]>::to_vec).collect()
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity(self.k)
    }

    /// `Cᵀ p`: pushes a distribution over true classes through the corruption.
    pub fn transpose_apply(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        self.transpose_apply_into(p, &mut out);
        out
    }

    pub(crate) fn transpose_apply_into(&self, p: &[f64], out: &mut [f64]) {
        debug_assert_eq!(p.len(), self.k);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (pi, row) in p.iter().zip(self.entries.chunks_exact(self.k)) {
            for (o, c) in out.iter_mut().zip(row) {
                *o += c * pi;
            }
        }
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &ProbMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest absolute row sum of the difference (the induced ∞-norm).
    pub fn max_row_abs_diff(&self, other: &ProbMatrix) -> f64 {
        (0..self.k)
            .map(|i| self.row(i).iter().zip(other.row(i)).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_distance(&self, other: &ProbMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(CmatFile {
            version: CMAT_VERSION.to_string(),
            k: self.k,
            rows: self.to_rows(),
        })
        .expect("cmat serializes")
    }

    /// Parses the `goldcorrect-cmat/1` JSON layout, accepting row sums within
    /// [`LOAD_ROW_SUM_TOL`] and renormalizing them.
    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        let file: CmatFile = serde_json::from_value(value)?;
        if file.version != CMAT_VERSION {
            return Err(Error::invalid(format!("unsupported cmat version {:?}", file.version)));
        }
        if file.rows.len() != file.k || file.rows.iter().any(|r| r.len() != file.k) {
            return Err(Error::invalid(format!("rows do not form a {0}x{0} matrix", file.k)));
        }
        let checked = Self::with_tolerance(file.k, file.rows.concat(), LOAD_ROW_SUM_TOL)?;
        Self::from_rows_normalized(checked.k, checked.entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, format!("line {}", e.line()), e.to_string()))?;
        Self::from_json(value).map_err(|e| match e {
            Error::InvalidInput(msg) | Error::Format { message: msg, .. } => Error::format(path, "document", msg),
            Error::Json(j) => Error::format(path, "document", j.to_string()),
            other => other,
        })
    }
}

impl Serialize for ProbMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CmatFile {
            version: CMAT_VERSION.to_string(),
            k: self.k,
            rows: self.to_rows(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProbMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(d)?;
        ProbMatrix::from_json(value).map_err(serde::de::Error::custom)
    }
}

impl std::fmt::Display for ProbMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.k {
            let cells: Vec<String> = self.row(i).iter().map(|v| format!("{v:.3}")).collect();
            writeln!(f, "[{}]", cells.join(" "))?;
        }
        Ok(())
    }
}
