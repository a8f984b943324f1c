mod overrides;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use goldcorrect::corruption::{make_flip_with, make_hierarchical, make_uniform, FlipTarget, ProbMatrix, SuperclassPartition, WeakLabeler};
use goldcorrect::data::{load_csv, load_idx, split_trusted_with, write_idx_labels, Dataset, SplitMode};
use goldcorrect::harness::{render_reports, run_sweep_with, CorruptionSpec, DatasetRef, SweepConfig, SweepReport};
use goldcorrect::numcore::{ModelSpec, TrainConfig};
use goldcorrect::training::{evaluate, run_method, MethodSpec, PipelineOptions};
use goldcorrect::{rng, ErrorKind};
use serde::Deserialize;
use serde_json::Value;

/// Label-noise correction with trusted data: corruption matrices, training
/// runs and full corruption sweeps.
#[derive(Parser, Debug)]
#[command(name = "goldcorrect", version)]
struct Cli {
    /// Root seed (for `sweep`, replaces the configured seed list).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Global flags shared by the subcommands.
struct Globals {
    seed: Option<u64>,
    jobs: Option<usize>,
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build or inspect corruption matrices.
    Cmat {
        #[command(subcommand)]
        action: CmatAction,
    },
    /// Write noisy labels for a dataset.
    Corrupt(CorruptArgs),
    /// Train one method on one corrupted split and evaluate it.
    Train(ConfigArgs),
    /// Run every method over the strength grid and trusted fractions.
    Sweep(SweepArgs),
    /// Render stored sweep reports as a table, CSV, JSON and SVG plots.
    Report {
        /// report.json files written by `sweep`.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Family {
    Uniform,
    Flip,
    Hierarchical,
}

#[derive(Subcommand, Debug)]
enum CmatAction {
    /// Construct a matrix and print (or write) it as JSON.
    Build {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        strength: f64,
        /// Flip rows to (i + 1) mod K instead of random targets.
        #[arg(long)]
        cyclic: bool,
        /// Seed of the random flip targets.
        #[arg(long, default_value_t = 0)]
        flip_seed: u64,
        /// Superclass of each class, comma separated (hierarchical only).
        #[arg(long, value_delimiter = ',')]
        groups: Vec<usize>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Print a stored matrix, optionally with its distance to another.
    Inspect {
        path: PathBuf,
        #[arg(long)]
        against: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct CorruptArgs {
    /// IDX image file (needed for weak labels).
    #[arg(long)]
    images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long, conflicts_with = "csv")]
    labels: Option<PathBuf>,
    /// CSV dataset instead of IDX files.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    label_column: String,
    /// Corruption matrix JSON to sample noisy labels from.
    #[arg(long, conflicts_with = "weak")]
    cmat: Option<PathBuf>,
    /// Sample labels from an under-trained classifier instead.
    #[arg(long)]
    weak: bool,
    #[arg(long)]
    temperature: Option<f64>,
    /// Destination; `.csv` writes `index,label` rows, anything else IDX.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// JSON config file.
    #[arg(long, short)]
    config: PathBuf,
    /// Field overrides such as --train.epochs=3.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Train on a 10k-example subsample for 5 epochs.
    #[arg(long)]
    quick: bool,
}

/// Config of a single `train` run.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainRun {
    dataset: DatasetRef,
    corruption: CorruptionSpec,
    strength: f64,
    fraction: f64,
    method: MethodSpec,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default = "default_model")]
    model: ModelSpec,
    #[serde(default)]
    pipeline: PipelineOptions,
    #[serde(default)]
    split_mode: SplitMode,
    #[serde(default)]
    out_dir: Option<PathBuf>,
}

fn default_model() -> ModelSpec {
    ModelSpec::new(vec![256, 256], Default::default())
}

fn read_config(args: &ConfigArgs) -> Result<Value> {
    let text = fs::read_to_string(&args.config).map_err(|e| goldcorrect::Error::io(&args.config, e))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| goldcorrect::Error::format(&args.config, format!("line {}", e.line()), e.to_string()))?;
    overrides::apply(&mut value, &args.overrides).map_err(|e| goldcorrect::Error::invalid(e.to_string()))?;
    Ok(value)
}

fn parse_config<T: serde::de::DeserializeOwned>(value: Value, path: &Path) -> Result<T> {
    serde_json::from_value(value).map_err(|e| goldcorrect::Error::invalid(format!("config {}: {e}", path.display())).into())
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn cmat(action: CmatAction) -> Result<()> {
    match action {
        CmatAction::Build {
            family,
            k,
            strength,
            cyclic,
            flip_seed,
            groups,
            output,
        } => {
            let c = match family {
                Family::Uniform => make_uniform(k, strength)?,
                Family::Flip => {
                    let target = if cyclic { FlipTarget::Cyclic } else { FlipTarget::Random { seed: flip_seed } };
                    make_flip_with(k, strength, target)?
                }
                Family::Hierarchical => {
                    if groups.is_empty() {
                        return Err(goldcorrect::Error::invalid("hierarchical matrices need --groups").into());
                    }
                    make_hierarchical(k, strength, &SuperclassPartition::new(groups)?)?
                }
            };
            match output {
                Some(p) => {
                    c.save(&p)?;
                    eprintln!("wrote {}", p.display());
                }
                None => println!("{}", serde_json::to_string_pretty(&c.to_json())?),
            }
        }
        CmatAction::Inspect { path, against } => {
            let c = ProbMatrix::load(&path)?;
            println!("k = {}", c.k());
            print!("{c}");
            let diag = (0..c.k()).map(|i| c.get(i, i)).sum::<f64>() / c.k() as f64;
            println!("mean diagonal = {diag:.4}");
            if let Some(other) = against {
                let o = ProbMatrix::load(&other)?;
                if o.k() != c.k() {
                    return Err(goldcorrect::Error::invalid(format!("{} is {}x{}", other.display(), o.k(), o.k())).into());
                }
                println!("max abs difference = {:.6}", c.max_abs_diff(&o));
                println!("frobenius distance = {:.6}", c.frobenius_distance(&o));
            }
        }
    }
    Ok(())
}

fn corrupt(args: CorruptArgs, seed: u64) -> Result<()> {
    let dataset: Dataset = match (&args.csv, &args.images, &args.labels) {
        (Some(csv), _, _) => load_csv(csv, &args.label_column)?,
        (None, Some(images), Some(labels)) => load_idx(images, labels)?,
        (None, None, Some(labels)) if !args.weak => {
            let raw = fs::read(labels).map_err(|e| goldcorrect::Error::io(labels, e))?;
            let ys = goldcorrect::data::parse_idx_labels(&raw, labels)?;
            let k = ys.iter().max().map_or(1, |m| m + 1);
            let x = goldcorrect::numcore::DenseMatrix::zeros(ys.len(), 0);
            Dataset::new("labels", x, ys, k)?
        }
        _ => return Err(goldcorrect::Error::invalid("give --csv, or --labels (plus --images for weak labels)").into()),
    };
    let noisy = if args.weak {
        let mut labeler = WeakLabeler::default();
        if let Some(t) = args.temperature {
            labeler.temperature = t;
        }
        let x = dataset.features();
        labeler.label(x, dataset.labels(), dataset.k(), x, seed)?
    } else {
        let path = args.cmat.as_ref().ok_or_else(|| goldcorrect::Error::invalid("give --cmat or --weak"))?;
        let c = ProbMatrix::load(path)?;
        if c.k() < dataset.k() {
            return Err(goldcorrect::Error::invalid(format!("matrix is {0}x{0} but labels go up to {1}", c.k(), dataset.k() - 1)).into());
        }
        goldcorrect::corruption::corrupt_labels(dataset.labels(), &c, seed)?
    };
    let changed = noisy.iter().zip(dataset.labels()).filter(|(a, b)| a != b).count();
    if args.output.extension().is_some_and(|e| e == "csv") {
        let mut text = String::from("index,label\n");
        for (i, y) in noisy.iter().enumerate() {
            text.push_str(&format!("{i},{y}\n"));
        }
        fs::write(&args.output, text).map_err(|e| goldcorrect::Error::io(&args.output, e))?;
    } else {
        write_idx_labels(&noisy, &args.output)?;
    }
    eprintln!(
        "wrote {} labels to {} ({:.2}% changed)",
        noisy.len(),
        args.output.display(),
        100.0 * changed as f64 / noisy.len().max(1) as f64
    );
    Ok(())
}

fn train(args: ConfigArgs, cli: &Globals) -> Result<()> {
    let value = read_config(&args)?;
    let mut run: TrainRun = parse_config(value, &args.config)?;
    run.dataset.rebase(&config_dir(&args.config));
    let seed = cli.seed.unwrap_or(run.train.seed);
    let out_dir = cli.out.clone().or_else(|| run.out_dir.as_ref().map(|d| config_dir(&args.config).join(d)));
    let (train_set, test_set) = run.dataset.load()?;
    let c = run.corruption.matrix(train_set.k(), run.strength)?;
    let mut split = split_trusted_with(&train_set, run.fraction, rng::split_path(seed, &["split", &run.fraction.to_string()]), run.split_mode)?;
    let corrupt_seed = rng::split_path(seed, &["corrupt", &run.fraction.to_string(), &run.strength.to_string()]);
    split.corrupt_untrusted(&c, corrupt_seed)?;
    let c_true = matches!(run.method, MethodSpec::TrueMatrixOracle).then_some(&c);
    let config = run.train.with_seed(seed);
    let out = run_method(&run.method, &split, &run.model, &config, c_true, &run.pipeline)?;
    let err = evaluate(&out.model, &test_set)?;
    let mut metadata = out.metadata;
    metadata.test_error = Some(err);
    println!("{}: test error {err:.2}%", metadata.label);
    if let Some(c_hat) = &metadata.c_hat {
        println!("corruption matrix used:\n{c_hat}");
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(&dir).map_err(|e| goldcorrect::Error::io(&dir, e))?;
        let run_path = dir.join("run.json");
        fs::write(&run_path, serde_json::to_string_pretty(&metadata)?).map_err(|e| goldcorrect::Error::io(&run_path, e))?;
        out.model.save(&dir.join("model.json"))?;
        eprintln!("wrote {} and model.json", run_path.display());
    }
    Ok(())
}

fn sweep(args: SweepArgs, cli: &Globals) -> Result<()> {
    let mut value = read_config(&args.config)?;
    if let Some(out) = &cli.out {
        value["out_dir"] = Value::String(out.to_string_lossy().into_owned());
    }
    if let Some(jobs) = cli.jobs {
        value["jobs"] = jobs.into();
    }
    if let Some(seed) = cli.seed {
        value["seeds"] = serde_json::json!([seed]);
    }
    let mut config: SweepConfig = parse_config(value, &args.config.config)?;
    let base = config_dir(&args.config.config);
    config.dataset.rebase(&base);
    if cli.out.is_none() {
        config.out_dir = base.join(&config.out_dir);
    }
    if args.quick {
        apply_quick(&mut config);
    }
    let total = config.total_cells();
    let done = AtomicUsize::new(0);
    let report = run_sweep_with(&config, |cell| {
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        match (&cell.test_error, &cell.error) {
            (Some(e), _) => log::info!(
                "[{n}/{total}] {} f={} s={:.1} seed={}: {e:.2}% ({:.1}s)",
                cell.label,
                cell.fraction,
                cell.strength,
                cell.seed,
                cell.wall_secs
            ),
            (None, Some(e)) => log::warn!("[{n}/{total}] {} f={} s={:.1} seed={} failed: {e}", cell.label, cell.fraction, cell.strength, cell.seed),
            _ => {}
        }
    })?;
    let rendered = render_reports(std::slice::from_ref(&report))?;
    rendered.write_to(&config.out_dir)?;
    print!("{}", rendered.table);
    eprintln!(
        "{} cells: {} computed, {} reused, {} failed; results in {}",
        report.cells.len(),
        report.computed_cells,
        report.reused_cells,
        report.failed_cells,
        config.out_dir.display()
    );
    Ok(())
}

/// 10k-example training subsample (for MNIST) and at most 5 epochs.
fn apply_quick(config: &mut SweepConfig) {
    if let DatasetRef::Mnist { subsample, .. } = &mut config.dataset {
        *subsample = Some(subsample.map_or(10_000, |n| n.min(10_000)));
    }
    config.train.epochs = config.train.epochs.min(5);
}

fn report(paths: &[PathBuf], cli: &Globals) -> Result<()> {
    let mut reports: Vec<SweepReport> = Vec::new();
    for p in paths {
        reports.extend(SweepReport::load_all(p)?);
    }
    let rendered = render_reports(&reports)?;
    print!("{}", rendered.table);
    let dir = cli.out.clone().unwrap_or_else(|| config_dir(&paths[0]).join("rendered"));
    rendered.write_to(&dir)?;
    eprintln!("wrote report files to {}", dir.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<goldcorrect::Error>().map(goldcorrect::Error::kind) {
        Some(ErrorKind::Data) => 2,
        Some(ErrorKind::Numerical) => 3,
        Some(ErrorKind::Usage) | None => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    let Cli {
        seed,
        jobs,
        out,
        command,
        ..
    } = cli;
    let globals = Globals { seed, jobs, out };
    match command {
        Command::Cmat { action } => cmat(action),
        Command::Corrupt(args) => corrupt(args, seed.unwrap_or(0)),
        Command::Train(args) => train(args, &globals),
        Command::Sweep(args) => sweep(args, &globals),
        Command::Report { reports } => report(&reports, &globals),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if cli.jobs == Some(0) {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

