//! Sweeps over corruption strengths and trusted fractions, error curves and
//! their areas, and report rendering.

mod config;
mod curve;
mod report;
mod sweep;

pub use config::{CorruptionSpec, DatasetRef, SweepConfig};
pub use curve::{auec, strength, strengths, ErrorCurve, NUM_STRENGTHS};
pub use report::{render_report, render_reports, CurveSummary, RenderedReport, SweepReport, GAP, REPORT_VERSION};
pub use sweep::{cell_fingerprint, cell_path, cell_seed, corruption_seed, dataset_label, run_sweep, run_sweep_with, split_seed, CellResult, CELL_VERSION};
