use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numcore::DenseMatrix;

/// Reads a numeric CSV with a header row. `label_column` holds integer class
/// ids; every other column becomes a feature.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::format(path, "open", e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::format(path, "row 1", e.to_string()))?
        .clone();
    let label_idx = headers.iter().position(|h| h.trim() == label_column).ok_or_else(|| {
        let available: Vec<&str> = headers.iter().collect();
        Error::format(
            path,
            "row 1",
            format!("no column named {label_column:?}; available columns: {}", available.join(", ")),
        )
    })?;
    let width = headers.len();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is row 1
        let row_no = i + 2;
        let record = record.map_err(|e| Error::format(path, format!("row {row_no}"), e.to_string()))?;
        if record.len() != width {
            return Err(Error::format(
                path,
                format!("row {row_no}"),
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if j == label_idx {
                let y: usize = cell.parse().map_err(|_| {
                    Error::format(path, format!("row {row_no}"), format!("label {cell:?} is not a nonnegative integer"))
                })?;
                labels.push(y);
            } else {
                let v: f64 = cell
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| Error::format(path, format!("row {row_no}"), format!("cell {cell:?} in column {} is not numeric", headers[j].trim())))?;
                values.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::invalid(format!("{} has a header but no data rows", path.display())));
    }
    let features = DenseMatrix::from_vec(labels.len(), width - 1, values)?;
    let k = labels.iter().max().map_or(1, |m| m + 1);
    let name = path.file_stem().map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, features, labels, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn golden_file() {
        let (_d, p) = write("a,label,b\n0.5,1,2\n-1,0,3.25\n1e-3,2,0\n");
        let d = load_csv(&p, "label").unwrap();
        assert_eq!(d.features().values(), &[0.5, 2.0, -1.0, 3.25, 0.001, 0.0]);
        assert_eq!(d.labels(), &[1, 0, 2]);
        assert_eq!((d.k(), d.dim()), (3, 2));
    }

    #[test]
    fn errors_name_the_problem() {
        let (_d, p) = write("a,b\n1,2\n");
        let err = load_csv(&p, "label").unwrap_err().to_string();
        assert!(err.contains("available columns: a, b"), "{err}");

        let (_d, p) = write("a,label\n1,0\nx,1\n");
        let err = load_csv(&p, "label").unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");

        let (_d, p) = write("a,label\n1,0\n2\n");
        let err = load_csv(&p, "label").unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");

        let (_d, p) = write("a,label\n1,-1\n");
        assert!(load_csv(&p, "label").is_err());

        let (_d, p) = write("a,label\n");
        assert!(matches!(load_csv(&p, "label"), Err(Error::InvalidInput(_))));
    }
}
