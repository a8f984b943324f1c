use goldcorrect::corruption::{make_uniform, ProbMatrix};
use goldcorrect::data::generate_gaussian_blobs;
use goldcorrect::numcore::{train, train_targets, Activation, Examples, ModelSpec, OptimizerKind, Target, TrainConfig};
use goldcorrect::training::evaluate;

fn config(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 32,
        learning_rate: 0.01,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_a_function_of_inputs_and_seed() {
    let d = generate_gaussian_blobs(3, 50, 4, 2.0, 1).unwrap();
    let spec = ModelSpec::new(vec![8, 8], Activation::Gelu);
    let run = |seed| train(spec.build(4, 3).unwrap(), d.features(), d.labels(), None, &config(3, seed)).unwrap();
    assert_eq!(run(5).params(), run(5).params());
    assert_ne!(run(5).params(), run(6).params());
}

#[test]
fn weight_decay_alone_shrinks_the_weights_every_epoch() {
    let d = generate_gaussian_blobs(4, 20, 3, 3.0, 2).unwrap();
    // the loss against Ĉ = 11ᵀ/K is ln K whatever the model outputs
    let flat = make_uniform(4, 1.0).unwrap();
    let targets: Vec<Target> = d.labels().iter().map(|&y| Target::Corrected(y, &flat)).collect();
    let cfg = TrainConfig {
        epochs: 6,
        batch_size: 16,
        learning_rate: 0.05,
        optimizer: OptimizerKind::SgdMomentum,
        weight_decay: 1e-2,
        seed: 3,
    };
    let model = ModelSpec::new(vec![6], Activation::Relu).build(3, 4).unwrap();
    let (model, history) = train_targets(model, &Examples::from(d.features()), &targets, &cfg).unwrap();
    let norms = &history.epoch_param_sq_norm;
    assert_eq!(norms.len(), 6);
    assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
    for obj in &history.epoch_objective {
        assert!(*obj >= 4f64.ln() - 1e-9);
    }
    assert!(model.squared_norm() < norms[0]);
}

#[test]
fn separable_blobs_are_learned() {
    let d = generate_gaussian_blobs(2, 200, 2, 8.0, 3).unwrap();
    let m = train(ModelSpec::new(vec![16], Activation::Relu).build(2, 2).unwrap(), d.features(), d.labels(), None, &config(10, 4)).unwrap();
    assert!(evaluate(&m, &d).unwrap() < 2.0);

    let train_set = generate_gaussian_blobs(3, 300, 2, 10.0, 5).unwrap();
    let test_set = generate_gaussian_blobs(3, 300, 2, 10.0, 6).unwrap();
    let m = train(ModelSpec::new(vec![16], Activation::Relu).build(2, 3).unwrap(), train_set.features(), train_set.labels(), None, &config(10, 7)).unwrap();
    assert!(evaluate(&m, &test_set).unwrap() < 1.0);
}

#[test]
fn indistinguishable_classes_stay_at_chance() {
    let k = 4;
    let train_set = generate_gaussian_blobs(k, 300, 2, 0.0, 8).unwrap();
    let test_set = generate_gaussian_blobs(k, 1000, 2, 0.0, 9).unwrap();
    let m = train(ModelSpec::new(vec![16], Activation::Relu).build(2, k).unwrap(), train_set.features(), train_set.labels(), None, &config(5, 10)).unwrap();
    let err = evaluate(&m, &test_set).unwrap();
    assert!((err - 75.0).abs() <= 3.0, "{err}");
}

#[test]
fn identity_correction_changes_nothing() {
    let d = generate_gaussian_blobs(3, 40, 2, 3.0, 11).unwrap();
    let id = ProbMatrix::identity(3);
    let spec = ModelSpec::new(vec![5], Activation::Relu);
    let plain = train(spec.build(2, 3).unwrap(), d.features(), d.labels(), None, &config(4, 12)).unwrap();
    let corrections = vec![goldcorrect::numcore::Correction::Matrix(&id); d.len()];
    let corrected = train(spec.build(2, 3).unwrap(), d.features(), d.labels(), Some(&corrections), &config(4, 12)).unwrap();
    assert_eq!(plain.params(), corrected.params());
}
