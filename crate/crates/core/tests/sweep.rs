use std::fs;
use std::path::Path;

use goldcorrect::harness::{cell_path, render_report, run_sweep, SweepConfig, SweepReport, NUM_STRENGTHS};
use goldcorrect::training::MethodSpec;
use serde_json::json;

fn config(out: &Path, methods: serde_json::Value, seeds: serde_json::Value) -> SweepConfig {
    SweepConfig::from_json(json!({
        "dataset": {"type": "blobs", "k": 3, "per_class": 40, "test_per_class": 20, "dim": 2, "separation": 4.0, "seed": 3},
        "corruption": {"type": "uniform"},
        "fractions": [0.2],
        "methods": methods,
        "seeds": seeds,
        "train": {"epochs": 2, "batch_size": 16, "learning_rate": 0.01},
        "model": {"hidden_dims": [6]},
        "out_dir": out,
        "jobs": 2
    }))
    .unwrap()
}

#[test]
fn cell_count_curves_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), json!([{"kind": "glc"}, {"kind": "no_correction"}]), json!([5]));
    let report = run_sweep(&cfg).unwrap();
    assert_eq!(report.cells.len(), 22);
    assert_eq!(report.curves.len(), 2);
    assert_eq!((report.computed_cells, report.reused_cells, report.failed_cells), (22, 0, 0));
    for c in &report.curves {
        assert_eq!(c.complete_seeds, 1);
        assert!(c.mean.iter().all(Option::is_some));
    }

    let again = run_sweep(&cfg).unwrap();
    assert_eq!((again.computed_cells, again.reused_cells), (0, 22));
    assert_eq!(again.curves, report.curves);

    let last = cell_path(&cfg, &MethodSpec::NoCorrection, 0.2, NUM_STRENGTHS - 1, 5);
    fs::remove_file(&last).unwrap();
    let resumed = run_sweep(&cfg).unwrap();
    assert_eq!((resumed.computed_cells, resumed.reused_cells), (1, 21));
    assert_eq!(resumed.curves, report.curves);
}

#[test]
fn cells_do_not_depend_on_the_rest_of_the_grid() {
    let a_dir = tempfile::tempdir().unwrap();
    let b_dir = tempfile::tempdir().unwrap();
    let a = run_sweep(&config(a_dir.path(), json!([{"kind": "no_correction"}]), json!([1]))).unwrap();
    let b = run_sweep(&config(b_dir.path(), json!([{"kind": "trusted_only"}, {"kind": "no_correction"}]), json!([1, 9]))).unwrap();
    let a_curve = a.curve("no_correction", 0.2).unwrap();
    let b_curve = b.curve("no_correction", 0.2).unwrap();
    assert_eq!(a_curve.seed_auec[0], b_curve.seed_auec[0]);
    for cell in &a.cells {
        let twin = b
            .cells
            .iter()
            .find(|c| c.label == cell.label && c.seed == cell.seed && c.strength_index == cell.strength_index)
            .unwrap();
        assert_eq!(twin.test_error, cell.test_error);
        assert_eq!(twin.cell_seed, cell.cell_seed);
    }
}

#[test]
fn failures_are_recorded_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), json!([{"kind": "no_correction"}]), json!([0]));
    cfg.dataset = serde_json::from_value(json!({"type": "mnist", "dir": dir.path().join("missing")})).unwrap();
    let report = run_sweep(&cfg).unwrap();
    assert_eq!(report.failed_cells, 11);
    assert!(report.cells[0].error.as_ref().unwrap().contains("loading dataset"));
    let rendered = render_report(&report).unwrap();
    assert!(rendered.table.contains("--"));
    assert!(rendered.plots[0].1.contains(r#"class="gap""#));
}

#[test]
fn single_curve_rendering_and_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_sweep(&config(dir.path(), json!([{"kind": "trusted_only"}]), json!([0]))).unwrap();
    let rendered = render_report(&report).unwrap();
    let lines: Vec<&str> = rendered.table.lines().collect();
    // header, one setting row, mean row
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("uniform 20%"));
    assert_eq!(rendered.plots.len(), 1);
    let svg = &rendered.plots[0].1;
    assert_eq!(svg.matches("<polyline").count(), 1);
    let points = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
    assert_eq!(points.split_whitespace().count(), 11);

    let out = dir.path().join("rendered");
    rendered.write_to(&out).unwrap();
    let back = SweepReport::load_all(&out.join("report.json")).unwrap();
    assert_eq!(back.len(), 1);
    for (a, b) in back[0].curves.iter().zip(&report.curves) {
        assert_eq!(a.auec_mean.unwrap().to_bits(), b.auec_mean.unwrap().to_bits());
    }
    assert_eq!(back[0], report);
}

#[test]
fn golden_report_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/report_v1.json");
    let reports = SweepReport::load_all(&path).unwrap();
    assert_eq!(reports.len(), 1);
    let r = &reports[0];
    assert_eq!(r.methods, vec!["glc", "no_correction"]);
    assert_eq!(r.auec("glc", 0.1), Some(4.0));
    let rendered = render_report(r).unwrap();
    assert!(rendered.table.contains("**4.0**"));
    let mean_line = rendered.table.lines().find(|l| l.starts_with("mean")).unwrap();
    assert!(mean_line.contains("**4.0**") && mean_line.contains("30.0"));

    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    v["version"] = json!("goldcorrect-report/0");
    assert!(SweepReport::from_json_value(v).is_err());
}
