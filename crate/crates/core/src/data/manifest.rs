use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: PathBuf,
    pub sha256: String,
}

impl SourceFile {
    pub fn hash(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let digest = Sha256::digest(&bytes);
        let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(SourceFile {
            path: path.to_path_buf(),
            sha256,
        })
    }
}

/// Description of a loaded dataset and the files it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub sources: Vec<SourceFile>,
}

impl DatasetManifest {
    pub fn describe(dataset: &Dataset, sources: &[&Path]) -> Result<Self> {
        Ok(DatasetManifest {
            name: dataset.name.clone(),
            n: dataset.len(),
            d: dataset.dim(),
            k: dataset.k(),
            sources: sources.iter().map(|p| SourceFile::hash(p)).collect::<Result<_>>()?,
        })
    }
}
