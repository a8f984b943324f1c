//! End-to-end correction pipelines.
//!
//! Every method trains its final model from a fresh initialization. Seeds
//! are derived from the run seed (`TrainConfig::seed`) with fixed labels:
//! `"stage1"` for the auxiliary model (the noisy-label classifier, or the
//! trusted-only teacher for distillation) and `"stage2"` for the final model.
//! Methods that see the same final training problem therefore produce the
//! same weights.

mod method;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use method::{GlcOptions, MethodSpec, DEFAULT_DISTILLATION_LAMBDA, DEFAULT_FORWARD_PERCENTILE};

use crate::corruption::ProbMatrix;
use crate::data::{Dataset, TrustedSplit};
use crate::error::{Error, Result};
use crate::estimation::{
    apply_temperature, calibrate_temperature, empirical_base_rates, estimate_confusion, estimate_forward, estimate_glc,
    refine_base_rates, ClassScores, MissingClassPolicy,
};
use crate::numcore::{train_targets, Examples, MlpModel, ModelSpec, Target, TrainConfig};
use crate::rng;

/// Share of the untrusted set held out for temperature calibration.
pub const CALIBRATION_HOLDOUT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    /// Each trusted example appears this many times in final training.
    pub trusted_upsample: usize,
    /// Also train the stage-1 noisy-label classifier on the trusted
    /// examples (with their clean labels).
    pub stage1_includes_trusted: bool,
    pub missing_class: MissingClassPolicy,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            trusted_upsample: 1,
            stage1_includes_trusted: false,
            missing_class: MissingClassPolicy::Error,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub stage1_secs: Option<f64>,
    pub estimate_secs: Option<f64>,
    pub stage2_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub method: MethodSpec,
    pub label: String,
    /// Matrix used in the corrected loss, if any.
    pub c_hat: Option<ProbMatrix>,
    pub run_seed: u64,
    pub stage1_seed: Option<u64>,
    pub stage2_seed: u64,
    pub stream_version: String,
    pub temperature: Option<f64>,
    pub timings: StageTimings,
    pub warnings: Vec<String>,
    /// Percent test error, filled in by the caller after evaluation.
    pub test_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub model: MlpModel,
    pub metadata: RunMetadata,
}

/// Percent of rows whose argmax prediction differs from the label.
pub fn evaluate(model: &MlpModel, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty test set"));
    }
    let predicted = model.predict(test.features())?;
    let wrong = predicted.iter().zip(test.labels()).filter(|(p, y)| p != y).count();
    Ok(100.0 * wrong as f64 / test.len() as f64)
}

/// Per-example loss treatment of the untrusted and trusted parts of the
/// final training set.
enum Stage2<'a> {
    Plain,
    Corrected { c_hat: &'a ProbMatrix, on_trusted: bool },
    Soft { untrusted_targets: &'a [f64], k: usize },
}

fn train_final(
    split: &TrustedSplit,
    include_untrusted: bool,
    treatment: Stage2<'_>,
    model: MlpModel,
    config: &TrainConfig,
    upsample: usize,
) -> Result<MlpModel> {
    let t = split.trusted.len();
    let trusted_rows: Vec<usize> = (0..upsample).flat_map(|_| 0..t).collect();
    let mut examples = Examples::new().with_rows(split.trusted.features(), &trusted_rows)?;
    let trusted_labels = split.trusted.labels();
    let mut targets: Vec<Target<'_>> = trusted_rows
        .iter()
        .map(|&i| match treatment {
            Stage2::Corrected { c_hat, on_trusted: true } => Target::Corrected(trusted_labels[i], c_hat),
            _ => Target::Hard(trusted_labels[i]),
        })
        .collect();
    if include_untrusted {
        examples = examples.with(split.untrusted.features())?;
        let noisy = split.untrusted.labels();
        match treatment {
            Stage2::Plain => targets.extend(noisy.iter().map(|&y| Target::Hard(y))),
            Stage2::Corrected { c_hat, .. } => targets.extend(noisy.iter().map(|&y| Target::Corrected(y, c_hat))),
            Stage2::Soft { untrusted_targets, k } => targets.extend(untrusted_targets.chunks_exact(k).map(Target::Soft)),
        }
    }
    let (model, _) = train_targets(model, &examples, &targets, config)?;
    Ok(model)
}

struct NoisyClassifier {
    model: MlpModel,
    temperature: Option<f64>,
    warnings: Vec<String>,
}

/// Trains f on the untrusted labels (optionally holding out a calibration
/// slice and optionally adding the trusted examples).
fn train_noisy_classifier(
    split: &TrustedSplit,
    template: MlpModel,
    config: &TrainConfig,
    calibrate: bool,
    options: &PipelineOptions,
) -> Result<NoisyClassifier> {
    let u = split.untrusted.len();
    let k = split.k();
    let mut warnings = Vec::new();
    let (fit_rows, holdout): (Vec<usize>, Vec<usize>) = if calibrate {
        let h = ((CALIBRATION_HOLDOUT * u as f64).round() as usize).max(k);
        if h >= u {
            return Err(Error::InsufficientData(format!(
                "untrusted set of {u} examples is too small to hold out {h} for calibration"
            )));
        }
        let mut r = rng::stream(config.seed, "calibration-holdout");
        let mut held = rand::seq::index::sample(&mut r, u, h).into_vec();
        held.sort_unstable();
        let mut is_held = vec![false; u];
        held.iter().for_each(|&i| is_held[i] = true);
        ((0..u).filter(|&i| !is_held[i]).collect(), held)
    } else {
        ((0..u).collect(), Vec::new())
    };

    let mut examples = Examples::new();
    let mut targets = Vec::new();
    if options.stage1_includes_trusted {
        examples = examples.with(split.trusted.features())?;
        targets.extend(split.trusted.labels().iter().map(|&y| Target::Hard(y)));
    }
    examples = examples.with_rows(split.untrusted.features(), &fit_rows)?;
    let noisy = split.untrusted.labels();
    targets.extend(fit_rows.iter().map(|&i| Target::Hard(noisy[i])));
    let stage1 = config.with_seed(rng::split(config.seed, "stage1"));
    let (model, _) = train_targets(template, &examples, &targets, &stage1)?;

    let temperature = if calibrate {
        let held_x = split.untrusted.features().select_rows(&holdout);
        let held_y: Vec<usize> = holdout.iter().map(|&i| noisy[i]).collect();
        let fit = calibrate_temperature(&model.logits(&held_x)?, &held_y)?;
        warnings.extend(fit.warning);
        Some(fit.temperature)
    } else {
        None
    };
    Ok(NoisyClassifier {
        model,
        temperature,
        warnings,
    })
}

fn scores_on(classifier: &NoisyClassifier, dataset: &Dataset, trusted: bool) -> Result<ClassScores> {
    let probs = match classifier.temperature {
        Some(t) => apply_temperature(&classifier.model.logits(dataset.features())?, t)?,
        None => classifier.model.predict_proba(dataset.features())?,
    };
    let labels = Some(dataset.labels().to_vec());
    if trusted {
        ClassScores::new(probs, labels, None)
    } else {
        ClassScores::new(probs, None, labels)
    }
}

/// Trains the final model of `spec` on `split`.
///
/// `c_true` must be given exactly when the method is the true-matrix oracle.
pub fn run_method(
    spec: &MethodSpec,
    split: &TrustedSplit,
    model_spec: &ModelSpec,
    config: &TrainConfig,
    c_true: Option<&ProbMatrix>,
    options: &PipelineOptions,
) -> Result<RunOutput> {
    run_method_inner(spec, split, model_spec, config, c_true, options).map_err(|e| e.context(format!("method {}", spec.label())))
}

fn run_method_inner(
    spec: &MethodSpec,
    split: &TrustedSplit,
    model_spec: &ModelSpec,
    config: &TrainConfig,
    c_true: Option<&ProbMatrix>,
    options: &PipelineOptions,
) -> Result<RunOutput> {
    spec.validate()?;
    config.validate()?;
    let k = split.k();
    if split.trusted.is_empty() || split.untrusted.is_empty() {
        return Err(Error::invalid("both the trusted and the untrusted set must be nonempty"));
    }
    if split.untrusted.k() != k || split.trusted.dim() != split.untrusted.dim() {
        return Err(Error::invalid("trusted and untrusted sets disagree on classes or feature width"));
    }
    if options.trusted_upsample == 0 {
        return Err(Error::invalid("trusted_upsample must be at least 1"));
    }
    match (spec, c_true) {
        (MethodSpec::TrueMatrixOracle, None) => return Err(Error::invalid("the oracle method needs the true corruption matrix")),
        (MethodSpec::TrueMatrixOracle, Some(c)) if c.k() != k => {
            return Err(Error::invalid(format!("true matrix is {0}×{0} but the data has {k} classes", c.k())))
        }
        (MethodSpec::TrueMatrixOracle, _) => {}
        (_, Some(_)) => return Err(Error::invalid(format!("method {} does not take a true matrix", spec.kind()))),
        _ => {}
    }

    let template = model_spec.build(split.trusted.dim(), k)?;
    let stage1_seed = rng::split(config.seed, "stage1");
    let stage2_seed = rng::split(config.seed, "stage2");
    let stage2 = config.with_seed(stage2_seed);
    let up = options.trusted_upsample;
    let mut warnings = Vec::new();
    let mut timings = StageTimings::default();
    let mut temperature = None;
    let mut used_stage1 = false;

    let clock = Instant::now();
    let c_hat: Option<ProbMatrix> = match *spec {
        MethodSpec::Glc(opts) => {
            let f = train_noisy_classifier(split, template.clone(), config, opts.calibrate, options)?;
            used_stage1 = true;
            timings.stage1_secs = Some(clock.elapsed().as_secs_f64());
            let est_clock = Instant::now();
            temperature = f.temperature;
            warnings.extend(f.warnings.iter().cloned());
            let est = estimate_glc(&scores_on(&f, &split.trusted, true)?, options.missing_class)?;
            warnings.extend(est.warnings);
            let mut c = est.matrix;
            if let Some(lambda) = opts.base_rate_lambda {
                let b = empirical_base_rates(split.trusted.labels(), k)?;
                let b_tilde = empirical_base_rates(split.untrusted.labels(), k)?;
                let (refined, warning) = refine_base_rates(&c, &b, &b_tilde, lambda)?.to_prob_matrix()?;
                warnings.extend(warning);
                c = refined;
            }
            timings.estimate_secs = Some(est_clock.elapsed().as_secs_f64());
            Some(c)
        }
        MethodSpec::Confusion => {
            let f = train_noisy_classifier(split, template.clone(), config, false, options)?;
            used_stage1 = true;
            timings.stage1_secs = Some(clock.elapsed().as_secs_f64());
            let est_clock = Instant::now();
            let est = estimate_confusion(&scores_on(&f, &split.trusted, true)?, options.missing_class)?;
            warnings.extend(est.warnings);
            timings.estimate_secs = Some(est_clock.elapsed().as_secs_f64());
            Some(est.matrix)
        }
        MethodSpec::Forward { percentile } | MethodSpec::ForwardGold { percentile } => {
            let f = train_noisy_classifier(split, template.clone(), config, false, options)?;
            used_stage1 = true;
            timings.stage1_secs = Some(clock.elapsed().as_secs_f64());
            let est_clock = Instant::now();
            let c = estimate_forward(&scores_on(&f, &split.untrusted, false)?, percentile)?;
            timings.estimate_secs = Some(est_clock.elapsed().as_secs_f64());
            Some(c)
        }
        MethodSpec::TrueMatrixOracle => c_true.cloned(),
        _ => None,
    };

    let stage2_clock = Instant::now();
    let model = match *spec {
        MethodSpec::Glc(_) | MethodSpec::Confusion | MethodSpec::TrueMatrixOracle | MethodSpec::ForwardGold { .. } => {
            let c = c_hat.as_ref().expect("matrix methods produce a matrix");
            train_final(split, true, Stage2::Corrected { c_hat: c, on_trusted: false }, template, &stage2, up)?
        }
        MethodSpec::Forward { .. } => {
            let c = c_hat.as_ref().expect("matrix methods produce a matrix");
            train_final(split, true, Stage2::Corrected { c_hat: c, on_trusted: true }, template, &stage2, up)?
        }
        MethodSpec::NoCorrection => train_final(split, true, Stage2::Plain, template, &stage2, up)?,
        MethodSpec::TrustedOnly => train_final(split, false, Stage2::Plain, template, &stage2, up)?,
        MethodSpec::Distillation { lambda } => {
            let teacher_config = config.with_seed(stage1_seed);
            let teacher_targets: Vec<Target<'_>> = split.trusted.labels().iter().map(|&y| Target::Hard(y)).collect();
            let (teacher, _) = train_targets(template.clone(), &Examples::from(split.trusted.features()), &teacher_targets, &teacher_config)?;
            used_stage1 = true;
            let teacher_secs = stage2_clock.elapsed().as_secs_f64();
            timings.stage1_secs = Some(teacher_secs);
            let soft = teacher.predict_proba(split.untrusted.features())?;
            let mut mixed = soft.into_values();
            for (row, &y) in mixed.chunks_exact_mut(k).zip(split.untrusted.labels()) {
                for (j, v) in row.iter_mut().enumerate() {
                    let hard = if j == y { 1.0 } else { 0.0 };
                    *v = lambda * *v + (1.0 - lambda) * hard;
                }
            }
            let model = train_final(split, true, Stage2::Soft { untrusted_targets: &mixed, k }, template, &stage2, up)?;
            timings.stage2_secs = stage2_clock.elapsed().as_secs_f64() - teacher_secs;
            model
        }
    };
    if !matches!(spec, MethodSpec::Distillation { .. }) {
        timings.stage2_secs = stage2_clock.elapsed().as_secs_f64();
    }
    for w in &warnings {
        log::warn!("{}: {w}", spec.label());
    }
    Ok(RunOutput {
        model,
        metadata: RunMetadata {
            method: *spec,
            label: spec.label(),
            c_hat,
            run_seed: config.seed,
            stage1_seed: used_stage1.then_some(stage1_seed),
            stage2_seed,
            stream_version: rng::STREAM_VERSION.to_string(),
            temperature,
            timings,
            warnings,
            test_error: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corruption::make_uniform;
    use crate::data::{generate_gaussian_blobs, split_trusted_with, SplitMode};
    use crate::numcore::Activation;

    fn setup(strength: f64) -> (TrustedSplit, Dataset, ProbMatrix) {
        let data = generate_gaussian_blobs(3, 80, 3, 4.0, 5).unwrap();
        let test = generate_gaussian_blobs(3, 50, 3, 4.0, 6).unwrap();
        let mut split = split_trusted_with(&data, 0.25, 7, SplitMode::Stratified).unwrap();
        let c = make_uniform(3, strength).unwrap();
        split.corrupt_untrusted(&c, 8).unwrap();
        (split, test, c)
    }

    fn config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 16,
            learning_rate: 1e-2,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    fn spec() -> ModelSpec {
        ModelSpec::new(vec![8], Activation::Relu)
    }

    #[test]
    fn every_method_runs_and_records_metadata() {
        let (split, test, c) = setup(0.3);
        for kind in MethodSpec::KINDS {
            let m = MethodSpec::from_kind(kind).unwrap();
            let c_true = matches!(m, MethodSpec::TrueMatrixOracle).then_some(&c);
            let out = run_method(&m, &split, &spec(), &config(), c_true, &PipelineOptions::default()).unwrap();
            let err = evaluate(&out.model, &test).unwrap();
            assert!((0.0..=100.0).contains(&err));
            assert_eq!(out.metadata.label, kind);
            assert_eq!(out.metadata.c_hat.is_some(), m.uses_noisy_classifier() || kind == "true_matrix_oracle");
            let json = serde_json::to_value(&out.metadata).unwrap();
            assert_eq!(json["method"]["kind"], kind);
        }
    }

    #[test]
    fn oracle_matrix_is_required_exactly_for_the_oracle() {
        let (split, _, c) = setup(0.3);
        let opts = PipelineOptions::default();
        assert!(run_method(&MethodSpec::TrueMatrixOracle, &split, &spec(), &config(), None, &opts).is_err());
        let err = run_method(&MethodSpec::glc(), &split, &spec(), &config(), Some(&c), &opts).unwrap_err();
        assert!(err.to_string().starts_with("method glc"), "{err}");
    }

    #[test]
    fn identity_oracle_matches_no_correction() {
        let (split, test, _) = setup(0.0);
        let opts = PipelineOptions::default();
        let id = ProbMatrix::identity(3);
        let a = run_method(&MethodSpec::TrueMatrixOracle, &split, &spec(), &config(), Some(&id), &opts).unwrap();
        let b = run_method(&MethodSpec::NoCorrection, &split, &spec(), &config(), None, &opts).unwrap();
        assert_eq!(a.model.params(), b.model.params());
        assert_eq!(evaluate(&a.model, &test).unwrap(), evaluate(&b.model, &test).unwrap());
    }

    #[test]
    fn zero_lambda_distillation_matches_no_correction() {
        let (split, _, _) = setup(0.4);
        let opts = PipelineOptions::default();
        let a = run_method(&MethodSpec::Distillation { lambda: 0.0 }, &split, &spec(), &config(), None, &opts).unwrap();
        let b = run_method(&MethodSpec::NoCorrection, &split, &spec(), &config(), None, &opts).unwrap();
        assert_eq!(a.model.params(), b.model.params());
    }

    #[test]
    fn calibration_and_base_rates_options() {
        let (split, _, _) = setup(0.3);
        let m = MethodSpec::Glc(GlcOptions {
            calibrate: true,
            base_rate_lambda: Some(1.0),
        });
        let out = run_method(&m, &split, &spec(), &config(), None, &PipelineOptions::default()).unwrap();
        assert!(out.metadata.temperature.unwrap() > 0.0);
        assert_eq!(out.metadata.c_hat.unwrap().k(), 3);
    }

    #[test]
    fn evaluate_counts_mistakes() {
        let m = MlpModel::zeros(3, vec![2], 4, Activation::Relu).unwrap();
        let x = crate::numcore::DenseMatrix::zeros(8, 3);
        let d = Dataset::new("t", x, (0..8).map(|i| i % 4).collect(), 4).unwrap();
        // constant prediction 0 on a balanced set
        assert_eq!(evaluate(&m, &d).unwrap(), 75.0);
        let empty = Dataset::new("e", crate::numcore::DenseMatrix::zeros(0, 3), vec![], 4).unwrap();
        assert!(evaluate(&m, &empty).is_err());
    }
}
