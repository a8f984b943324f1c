use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn goldcorrect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_goldcorrect")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_blob_sweep(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("sweep.json");
    let config = serde_json::json!({
        "dataset": {"type": "blobs", "k": 3, "per_class": 30, "test_per_class": 10, "dim": 2, "separation": 5.0, "seed": 1},
        "corruption": {"type": "flip", "seed": 2},
        "fractions": [0.2],
        "methods": [{"kind": "glc"}, {"kind": "no_correction"}],
        "seeds": [0, 1],
        "train": {"epochs": 1, "batch_size": 16, "learning_rate": 0.01},
        "model": {"hidden_dims": [4]},
        "out_dir": dir.join("ignored")
    });
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&goldcorrect(&["--help"])), 0);
    assert_eq!(code(&goldcorrect(&["--version"])), 0);
    assert_eq!(code(&goldcorrect(&[])), 1);
    assert_eq!(code(&goldcorrect(&["frobnicate"])), 1);
    assert_eq!(code(&goldcorrect(&["cmat", "build", "--family", "flip", "--k", "3", "--strength", "1.5"])), 1);
    assert_eq!(code(&goldcorrect(&["--jobs", "0", "cmat", "build", "--family", "uniform", "--k", "3", "--strength", "0.1"])), 1);
}

#[test]
fn cmat_build_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let a_str = a.to_str().unwrap();
    let out = goldcorrect(&["cmat", "build", "--family", "flip", "--k", "3", "--strength", "0.25", "--cyclic", "-o", a_str]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = goldcorrect(&["cmat", "build", "--family", "hierarchical", "--k", "4", "--strength", "0.5", "--groups", "0,0,1,1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let printed: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(printed["rows"][0], serde_json::json!([0.75, 0.25, 0.0, 0.0]));

    let out = goldcorrect(&["cmat", "build", "--family", "uniform", "--k", "3", "--strength", "0", "-o", b.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let out = goldcorrect(&["cmat", "inspect", a_str, "--against", b.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("max abs difference = 0.250000"), "{text}");
    assert!(text.contains("mean diagonal = 0.7500"), "{text}");

    fs::write(&b, "{ not json").unwrap();
    assert_eq!(code(&goldcorrect(&["cmat", "inspect", b.to_str().unwrap()])), 2);
    assert_eq!(code(&goldcorrect(&["cmat", "inspect", dir.path().join("missing").to_str().unwrap()])), 2);
}

#[test]
fn corrupt_csv_labels() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    let mut text = String::from("x,label\n");
    for i in 0..200 {
        text.push_str(&format!("{},{}\n", i as f64 / 10.0, i % 2));
    }
    fs::write(&csv, text).unwrap();
    let cmat = dir.path().join("c.json");
    let out = goldcorrect(&["cmat", "build", "--family", "flip", "--k", "2", "--strength", "1", "--cyclic", "-o", cmat.to_str().unwrap()]);
    assert_eq!(code(&out), 0);

    let noisy = dir.path().join("noisy.csv");
    let out = goldcorrect(&["corrupt", "--csv", csv.to_str().unwrap(), "--cmat", cmat.to_str().unwrap(), "-o", noisy.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("100.00% changed"), "{}", stderr(&out));
    let lines: Vec<String> = fs::read_to_string(&noisy).unwrap().lines().map(String::from).collect();
    assert_eq!(lines[0], "index,label");
    assert_eq!(lines[1], "0,1");
    assert_eq!(lines[2], "1,0");

    let idx = dir.path().join("noisy-labels");
    let out = goldcorrect(&["corrupt", "--csv", csv.to_str().unwrap(), "--cmat", cmat.to_str().unwrap(), "-o", idx.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let bytes = fs::read(&idx).unwrap();
    assert_eq!(&bytes[..8], &[0, 0, 8, 1, 0, 0, 0, 200]);
    assert_eq!(bytes[8], 1);

    let weak = dir.path().join("weak.csv");
    let out = goldcorrect(&["--seed", "3", "corrupt", "--csv", csv.to_str().unwrap(), "--weak", "-o", weak.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read_to_string(&weak).unwrap().lines().count(), 201);

    let missing = goldcorrect(&["corrupt", "--csv", dir.path().join("nope.csv").to_str().unwrap(), "--cmat", cmat.to_str().unwrap(), "-o", weak.to_str().unwrap()]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn train_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("train.json");
    let body = serde_json::json!({
        "dataset": {"type": "blobs", "k": 3, "per_class": 40, "test_per_class": 10, "dim": 2, "separation": 6.0, "seed": 4},
        "corruption": {"type": "uniform"},
        "strength": 0.3,
        "fraction": 0.25,
        "method": {"kind": "glc"},
        "train": {"epochs": 50, "batch_size": 16, "learning_rate": 0.01},
        "model": {"hidden_dims": [4]}
    });
    fs::write(&config, body.to_string()).unwrap();
    let out_dir = dir.path().join("run");
    let out = goldcorrect(&[
        "--out",
        out_dir.to_str().unwrap(),
        "train",
        "--config",
        config.to_str().unwrap(),
        "--train.epochs=2",
        "--method.kind=confusion",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).starts_with("confusion: test error"), "{}", stdout(&out));
    let run: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["method"]["kind"], "confusion");
    assert!(out_dir.join("model.json").exists());

    let bad_key = goldcorrect(&["train", "--config", config.to_str().unwrap(), "--train.epoch=2"]);
    assert_eq!(code(&bad_key), 1, "{}", stderr(&bad_key));
    let malformed = goldcorrect(&["train", "--config", config.to_str().unwrap(), "epochs=2"]);
    assert_eq!(code(&malformed), 1);
    fs::write(&config, "{").unwrap();
    assert_eq!(code(&goldcorrect(&["train", "--config", config.to_str().unwrap()])), 2);
}

#[test]
fn sweep_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_blob_sweep(dir.path());
    let out_dir = dir.path().join("out");
    let args = ["--out", out_dir.to_str().unwrap(), "--jobs", "2", "--seed", "7", "sweep", "--config", config.to_str().unwrap()];
    let out = goldcorrect(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stderr(&out).contains("22 cells: 22 computed, 0 reused, 0 failed"), "{}", stderr(&out));
    assert!(stdout(&out).contains("flip 20%"));
    for f in ["report.txt", "report.csv", "report.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_dir(out_dir.join("plots")).unwrap().count(), 1);
    let again = goldcorrect(&args);
    assert!(stderr(&again).contains("0 computed, 22 reused"), "{}", stderr(&again));

    let rendered = dir.path().join("rendered");
    let out = goldcorrect(&["--out", rendered.to_str().unwrap(), "report", out_dir.join("report.json").to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read_to_string(rendered.join("report.csv")).unwrap(), fs::read_to_string(out_dir.join("report.csv")).unwrap());

    let missing = goldcorrect(&["report", dir.path().join("none.json").to_str().unwrap()]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn quick_sweep_rejects_bad_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_blob_sweep(dir.path());
    let out = goldcorrect(&["sweep", "--quick", "--config", config.to_str().unwrap(), "--fractions=[1.5]"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}
