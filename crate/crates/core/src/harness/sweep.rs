use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::SweepConfig;
use super::curve::{strength, NUM_STRENGTHS};
use super::report::SweepReport;
use crate::data::{split_trusted_with, Dataset};
use crate::error::{Error, Result};
use crate::rng;
use crate::training::{evaluate, run_method, MethodSpec, RunMetadata};

/// Bump when the meaning of a stored cell changes.
pub const CELL_VERSION: &str = "goldcorrect-cell/1";

/// One (method, fraction, strength, seed) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub version: String,
    pub fingerprint: String,
    pub method: MethodSpec,
    pub label: String,
    pub fraction: f64,
    pub strength_index: usize,
    pub strength: f64,
    pub seed: u64,
    /// Seed of the trusted split and label corruption; shared by all methods.
    pub data_seed: u64,
    /// Run seed handed to the method.
    pub cell_seed: u64,
    pub test_error: Option<f64>,
    pub error: Option<String>,
    pub metadata: Option<RunMetadata>,
    pub wall_secs: f64,
}

/// Seed of the trusted split for one sweep seed and fraction.
pub fn split_seed(seed: u64, fraction: f64) -> u64 {
    rng::split_path(seed, &["split", &fraction.to_string()])
}

/// Seed of the label corruption for one sweep seed, fraction and strength.
pub fn corruption_seed(seed: u64, fraction: f64, strength_index: usize) -> u64 {
    rng::split_path(seed, &["corrupt", &fraction.to_string(), &strength_index.to_string()])
}

/// Training seed of one cell. Depends only on the cell's own coordinates, so
/// adding methods, fractions or seeds never changes existing cells.
pub fn cell_seed(seed: u64, method: &MethodSpec, fraction: f64, strength_index: usize) -> u64 {
    rng::split_path(seed, &["cell", &method.label(), &fraction.to_string(), &strength_index.to_string()])
}

/// Hash of everything besides the cell coordinates that determines a cell.
pub fn cell_fingerprint(config: &SweepConfig, method: &MethodSpec) -> String {
    let mut train = config.train.clone();
    train.seed = 0;
    let key = serde_json::json!({
        "cell_version": CELL_VERSION,
        "stream": rng::STREAM_VERSION,
        "dataset": config.dataset,
        "corruption": config.corruption,
        "train": train,
        "model": config.model,
        "pipeline": config.pipeline,
        "split_mode": config.split_mode,
        "method": method,
    });
    let digest = Sha256::digest(key.to_string().as_bytes());
    digest.iter().take(12).map(|b| format!("{b:02x}")).collect()
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' { c } else { '_' }).collect()
}

/// Location of a cell's result file under the configured output directory.
/// Cells of different configurations live in different directories.
pub fn cell_path(config: &SweepConfig, method: &MethodSpec, fraction: f64, strength_index: usize, seed: u64) -> PathBuf {
    cell_path_with(&config.out_dir, &cell_fingerprint(config, method), method, fraction, strength_index, seed)
}

fn cell_path_with(out_dir: &Path, fingerprint: &str, method: &MethodSpec, fraction: f64, strength_index: usize, seed: u64) -> PathBuf {
    out_dir
        .join("cells")
        .join(format!("{}-{fingerprint}", sanitize(&method.label())))
        .join(format!("f{fraction}_s{strength_index:02}_seed{seed}.json"))
}

#[derive(Debug, Clone, Copy)]
struct CellCoord<'a> {
    method: &'a MethodSpec,
    fraction: f64,
    strength_index: usize,
    seed: u64,
}

fn load_cached(path: &Path, fingerprint: &str) -> Option<CellResult> {
    let text = fs::read_to_string(path).ok()?;
    let cell: CellResult = serde_json::from_str(&text).ok()?;
    (cell.version == CELL_VERSION && cell.fingerprint == fingerprint && cell.test_error.is_some()).then_some(cell)
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn compute_cell(config: &SweepConfig, data: &(Dataset, Dataset), coord: CellCoord<'_>) -> Result<(f64, RunMetadata)> {
    let (train, test) = data;
    let k = train.k();
    let s = strength(coord.strength_index);
    let c = config.corruption.matrix(k, s)?;
    let mut split = split_trusted_with(train, coord.fraction, split_seed(coord.seed, coord.fraction), config.split_mode)?;
    split.corrupt_untrusted(&c, corruption_seed(coord.seed, coord.fraction, coord.strength_index))?;
    let run_config = config.train.with_seed(cell_seed(coord.seed, coord.method, coord.fraction, coord.strength_index));
    let c_true = matches!(coord.method, MethodSpec::TrueMatrixOracle).then_some(&c);
    let out = run_method(coord.method, &split, &config.model, &run_config, c_true, &config.pipeline)?;
    let err = evaluate(&out.model, test)?;
    let mut metadata = out.metadata;
    metadata.test_error = Some(err);
    Ok((err, metadata))
}

/// Runs every cell of the sweep, reusing stored results whose fingerprint
/// matches, and writes each newly computed cell as soon as it finishes.
///
/// Cells that fail are recorded with their error and retried on the next run.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepReport> {
    run_sweep_with(config, |_| {})
}

/// [`run_sweep`] with a callback invoked after every cell (possibly from a
/// worker thread).
pub fn run_sweep_with(config: &SweepConfig, on_cell: impl Fn(&CellResult) + Sync) -> Result<SweepReport> {
    config.validate()?;
    let mut coords = Vec::with_capacity(config.total_cells());
    for &fraction in &config.fractions {
        for method in &config.methods {
            for &seed in &config.seeds {
                for strength_index in 0..NUM_STRENGTHS {
                    coords.push(CellCoord {
                        method,
                        fraction,
                        strength_index,
                        seed,
                    });
                }
            }
        }
    }

    let data: OnceLock<std::result::Result<(Dataset, Dataset), String>> = OnceLock::new();
    let get_data = || {
        data.get_or_init(|| {
            log::info!("loading dataset");
            config.dataset.load().map_err(|e| e.to_string())
        })
    };
    let fingerprints: Vec<String> = config.methods.iter().map(|m| cell_fingerprint(config, m)).collect();

    let run_one = |coord: &CellCoord<'_>| -> (CellResult, bool) {
        let m_index = config.methods.iter().position(|m| std::ptr::eq(m, coord.method)).expect("method from config");
        let fingerprint = &fingerprints[m_index];
        let path = cell_path_with(&config.out_dir, fingerprint, coord.method, coord.fraction, coord.strength_index, coord.seed);
        if let Some(cell) = load_cached(&path, fingerprint) {
            on_cell(&cell);
            return (cell, true);
        }
        let clock = Instant::now();
        let outcome = match get_data() {
            Ok(data) => compute_cell(config, data, *coord).map_err(|e| e.to_string()),
            Err(e) => Err(format!("loading dataset: {e}")),
        };
        let (test_error, metadata, error) = match outcome {
            Ok((err, meta)) => (Some(err), Some(meta), None),
            Err(e) => {
                log::warn!("cell {} f={} s={} seed={} failed: {e}", coord.method.label(), coord.fraction, coord.strength_index, coord.seed);
                (None, None, Some(e))
            }
        };
        let cell = CellResult {
            version: CELL_VERSION.to_string(),
            fingerprint: fingerprint.clone(),
            method: *coord.method,
            label: coord.method.label(),
            fraction: coord.fraction,
            strength_index: coord.strength_index,
            strength: strength(coord.strength_index),
            seed: coord.seed,
            data_seed: split_seed(coord.seed, coord.fraction),
            cell_seed: cell_seed(coord.seed, coord.method, coord.fraction, coord.strength_index),
            test_error,
            error,
            metadata,
            wall_secs: clock.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&cell).expect("cells serialize");
        if let Err(e) = write_atomic(&path, &text) {
            log::warn!("could not store cell: {e}");
        }
        on_cell(&cell);
        (cell, false)
    };

    let jobs = config.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("could not start {jobs} worker threads: {e}")))?;
    let results: Vec<(CellResult, bool)> = pool.install(|| coords.par_iter().map(run_one).collect());

    let reused = results.iter().filter(|(_, r)| *r).count();
    let cells: Vec<CellResult> = results.into_iter().map(|(c, _)| c).collect();
    let mut report = SweepReport::from_cells(config, dataset_label(config), cells)?;
    report.reused_cells = reused;
    report.computed_cells = report.cells.len() - reused;
    Ok(report)
}

/// Name of the training set, available without loading it.
pub fn dataset_label(config: &SweepConfig) -> String {
    match &config.dataset {
        super::DatasetRef::Mnist { subsample: Some(n), .. } => format!("mnist-train[{n}]"),
        super::DatasetRef::Mnist { .. } => "mnist-train".into(),
        super::DatasetRef::Idx { train_images, .. } => train_images.file_name().map_or("idx".into(), |f| f.to_string_lossy().into_owned()),
        super::DatasetRef::Csv { train, .. } => train.file_stem().map_or("csv".into(), |f| f.to_string_lossy().into_owned()),
        super::DatasetRef::Blobs { k, dim, separation, .. } => format!("blobs-k{k}-d{dim}-s{separation}"),
    }
}
