//! IDX (MNIST) files: big-endian u32 header, unsigned-byte payload.
//!
//! Images: magic `0x00000803`, then count, rows, cols, then `count·rows·cols`
//! pixel bytes. Labels: magic `0x00000801`, then count, then `count` bytes.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numcore::DenseMatrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, format!("offset {offset}"), "file ends inside the header"))
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != expected {
        return Err(Error::format(
            path,
            "offset 0",
            format!("magic 0x{magic:08x}, expected 0x{expected:08x}"),
        ));
    }
    Ok(())
}

fn check_payload(bytes: &[u8], header: usize, payload: usize, path: &Path) -> Result<()> {
    let needed = header + payload;
    if bytes.len() < needed {
        return Err(Error::format(
            path,
            format!("offset {}", bytes.len()),
            format!("truncated payload: header declares {needed} bytes, file has {}", bytes.len()),
        ));
    }
    if bytes.len() > needed {
        log::warn!(
            "{}: ignoring {} trailing bytes after the declared payload",
            path.display(),
            bytes.len() - needed
        );
    }
    Ok(())
}

/// Parses an image file into `(rows, cols, pixels)` with one image per row.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, DenseMatrix)> {
    check_magic(bytes, IDX_IMAGES_MAGIC, path)?;
    let n = read_u32(bytes, 4, path)? as usize;
    let rows = read_u32(bytes, 8, path)? as usize;
    let cols = read_u32(bytes, 12, path)? as usize;
    let d = rows * cols;
    check_payload(bytes, 16, n * d, path)?;
    let values = bytes[16..16 + n * d].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok((rows, cols, DenseMatrix::from_vec(n, d, values)?))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS_MAGIC, path)?;
    let n = read_u32(bytes, 4, path)? as usize;
    check_payload(bytes, 8, n, path)?;
    Ok(bytes[8..8 + n].iter().map(|&b| usize::from(b)).collect())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an image/label IDX pair; pixels are scaled to `[0, 1]` and the class
/// count is one more than the largest label.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let (_, _, features) = parse_idx_images(&read(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read(labels_path)?, labels_path)?;
    if labels.len() != features.rows() {
        return Err(Error::format(
            labels_path,
            "offset 4",
            format!("{} labels for {} images in {}", labels.len(), features.rows(), images_path.display()),
        ));
    }
    let k = labels.iter().max().map_or(1, |m| m + 1);
    let name = images_path
        .file_name()
        .map_or_else(|| "idx".to_string(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, features, labels, k)
}

/// File names of the MNIST train and test pairs, as distributed.
pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

/// Loads the MNIST train and test sets from `dir`, with 10 classes.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let [tri, trl, tei, tel] = MNIST_FILES.map(|f| dir.join(f));
    let mut train = load_idx(&tri, &trl)?.with_k(10)?;
    let mut test = load_idx(&tei, &tel)?.with_k(10)?;
    train.name = "mnist-train".into();
    test.name = "mnist-test".into();
    Ok((train, test))
}

/// Writes a dataset whose features are multiples of 1/255 in `[0, 1]`.
pub fn write_idx(dataset: &Dataset, rows: usize, cols: usize, images_path: &Path, labels_path: &Path) -> Result<()> {
    if rows * cols != dataset.dim() {
        return Err(Error::invalid(format!(
            "image shape {rows}x{cols} does not match feature width {}",
            dataset.dim()
        )));
    }
    let mut out = Vec::with_capacity(16 + dataset.len() * dataset.dim());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for v in [dataset.len(), rows, cols] {
        out.extend_from_slice(&(v as u32).to_be_bytes());
    }
    for &v in dataset.features().values() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("pixel value {v} outside [0, 1]")));
        }
        out.push((v * 255.0).round() as u8);
    }
    fs::write(images_path, out).map_err(|e| Error::io(images_path, e))?;
    write_idx_labels(dataset.labels(), labels_path)
}

pub fn write_idx_labels(labels: &[usize], path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &y in labels {
        let byte = u8::try_from(y).map_err(|_| Error::invalid(format!("label {y} does not fit in one byte")))?;
        out.push(byte);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
