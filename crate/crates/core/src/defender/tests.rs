use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use super::*;
use crate::data::generate_blobs;
use crate::seeding::rng_from_seed;

fn logistic_config() -> TrainerConfig {
    TrainerConfig::new(Algorithm::LogisticGd {
        learning_rate: 0.5,
        epochs: 80,
        l2: 0.0,
    })
}

fn perceptron_config(shuffle: bool) -> TrainerConfig {
    TrainerConfig::new(Algorithm::PerceptronSgd {
        learning_rate: 0.1,
        epochs: 12,
    })
    .with_shuffle(shuffle)
}

fn mlp_config(hidden: usize, epochs: usize) -> TrainerConfig {
    TrainerConfig::new(Algorithm::MlpSgd {
        hidden,
        learning_rate: 0.1,
        epochs,
        l2: 0.0,
    })
    .with_shuffle(true)
}

fn permuted(ds: &LabeledDataset<f64>, seed: u64) -> LabeledDataset<f64> {
    let mut samples = ds.samples().to_vec();
    samples.shuffle(&mut rng_from_seed(seed));
    LabeledDataset::new(samples, ds.num_classes()).unwrap()
}

fn param_bits(model: &DefenderModel<f64>) -> Vec<u64> {
    model
        .parameter_vector()
        .iter()
        .map(|v| v.to_bits())
        .collect()
}

fn holdout_accuracy(model: &DefenderModel<f64>, ds: &LabeledDataset<f64>) -> f64 {
    let correct = ds
        .iter()
        .filter(|s| model.predict(&s.features).unwrap() == s.label)
        .count();
    correct as f64 / ds.len() as f64
}

#[test]
fn logistic_is_invariant_to_reversed_data() {
    let ds = generate_blobs::<f64>(3, 4, 20, 4.0, 1.0, 11).unwrap();
    let mut reversed_samples = ds.samples().to_vec();
    reversed_samples.reverse();
    let reversed = LabeledDataset::new(reversed_samples, ds.num_classes()).unwrap();

    let m1 = train(&logistic_config(), &ds, 0).unwrap();
    let m2 = train(&logistic_config(), &reversed, 12345).unwrap();
    assert_eq!(param_bits(&m1), param_bits(&m2));
}

#[test]
fn capability_truthfulness_for_order_invariant_trainers() {
    let ds = generate_blobs::<f64>(2, 3, 12, 4.0, 1.2, 21).unwrap();
    for config in [logistic_config(), TrainerConfig::new(Algorithm::GaussianNb)] {
        let caps = config.capabilities();
        assert!(caps.deterministic && caps.order_invariant);
        let reference = train(&config, &ds, 0).unwrap();
        let reference_bits = param_bits(&reference);
        let mut rng = rng_from_seed(99);
        for _ in 0..50 {
            let shuffled = permuted(&ds, rng.gen());
            let model = train(&config, &shuffled, rng.gen()).unwrap();
            assert_eq!(
                param_bits(&model),
                reference_bits,
                "{}",
                config.algorithm.name()
            );
        }
    }
}

#[test]
fn perceptron_with_shuffle_depends_on_the_seed() {
    let ds = generate_blobs::<f64>(2, 3, 30, 2.0, 1.5, 31).unwrap();
    let config = perceptron_config(true);
    assert!(!config.capabilities().deterministic);
    assert!(!config.capabilities().order_invariant);

    let m1 = train(&config, &ds, 1).unwrap();
    let m2 = train(&config, &ds, 2).unwrap();
    assert_ne!(param_bits(&m1), param_bits(&m2));
}

#[test]
fn fixed_seed_policy_makes_stochastic_trainers_deterministic() {
    let ds = generate_blobs::<f64>(2, 3, 20, 3.0, 1.0, 41).unwrap();
    let config = mlp_config(8, 5).with_seed_policy(InitSeedPolicy::Fixed { seed: 7 });
    assert!(config.capabilities().deterministic);

    let m1 = train(&config, &ds, 111).unwrap();
    let m2 = train(&config, &ds, 222).unwrap();
    assert_eq!(param_bits(&m1), param_bits(&m2));
}

#[test]
fn gaussian_nb_separates_well_separated_blobs() {
    let source = generate_blobs::<f64>(2, 4, 200, 10.0, 1.0, 51).unwrap();
    let (train_set, holdout) = crate::data::split_source(&source, 0.5, 3).unwrap();
    let model = train(&TrainerConfig::new(Algorithm::GaussianNb), &train_set, 0).unwrap();
    assert!(holdout_accuracy(&model, &holdout) > 0.99);
}

#[test]
fn logistic_reaches_high_holdout_accuracy_on_separated_blobs() {
    let source = generate_blobs::<f64>(3, 4, 100, 5.0, 1.0, 61).unwrap();
    let (train_set, holdout) = crate::data::split_source(&source, 0.5, 5).unwrap();
    let model = train(&logistic_config(), &train_set, 0).unwrap();
    assert!(holdout_accuracy(&model, &holdout) > 0.95);
}

#[test]
fn nb_probability_peaks_at_a_class_center() {
    let ds = generate_blobs::<f64>(2, 2, 100, 10.0, 0.5, 71).unwrap();
    let model = train(&TrainerConfig::new(Algorithm::GaussianNb), &ds, 0).unwrap();
    // Class-0 center is at the origin plus separation on axis 0.
    let proba = model.predict_proba(&[10.0, 0.0]).unwrap();
    assert!(proba[0].to_f64_lossy() < 0.01 || proba[1].to_f64_lossy() < 0.01);
    let p_max = proba.iter().cloned().fold(f64::MIN, f64::max);
    assert!(p_max > 0.99);
}

#[test]
fn zero_weight_logistic_predicts_uniformly() {
    let ds = generate_blobs::<f64>(4, 3, 5, 5.0, 1.0, 81).unwrap();
    let config = TrainerConfig::new(Algorithm::LogisticGd {
        learning_rate: 0.1,
        epochs: 1,
        l2: 0.0,
    });
    let trained = train(&config, &ds, 0).unwrap();
    let zeros = vec![0.0; trained.parameter_vector().len()];
    let model = trained.with_parameter_vector(&zeros).unwrap();
    let proba = model.predict_proba(&[0.3, -1.0, 2.0]).unwrap();
    for p in &proba {
        assert!((p - 0.25).abs() < 1e-12);
    }
}

#[test]
fn losses_follow_their_definitions() {
    let ds = generate_blobs::<f64>(2, 2, 50, 8.0, 0.5, 91).unwrap();
    let model = train(&logistic_config(), &ds, 0).unwrap();
    let sample = ds.get(0);
    assert_eq!(model.predict(&sample.features).unwrap(), sample.label);
    assert_eq!(model.loss(sample, LossKind::ZeroOne).unwrap(), 0.0);

    let proba = model.predict_proba(&sample.features).unwrap();
    let expected = 1.0 - proba[sample.label];
    let btc = model.loss(sample, LossKind::BoundedTrueClass).unwrap();
    assert!((btc - expected).abs() < 1e-15);
}

#[test]
fn bounded_loss_of_point_seven_probability_is_point_three() {
    // Two classes, weights chosen so p(true class) = 0.7 at x = (1).
    let ds = LabeledDataset::new(
        vec![
            crate::data::Sample::new(vec![0.0f64], 0),
            crate::data::Sample::new(vec![1.0f64], 1),
        ],
        2,
    )
    .unwrap();
    let trained = train(
        &TrainerConfig::new(Algorithm::LogisticGd {
            learning_rate: 0.1,
            epochs: 1,
            l2: 0.0,
        }),
        &ds,
        0,
    )
    .unwrap();
    // logit difference ln(0.7/0.3) in class 1's favor at x = 1.
    let logit = (0.7f64 / 0.3).ln();
    let model = trained
        .with_parameter_vector(&[0.0, 0.0, logit, 0.0])
        .unwrap();
    let sample = crate::data::Sample::new(vec![1.0f64], 1);
    let loss = model.loss(&sample, LossKind::BoundedTrueClass).unwrap();
    assert!((loss - 0.3).abs() < 1e-12, "loss = {loss}");
}

#[test]
fn training_losses_do_not_exceed_holdout_losses_on_average() {
    // Noisy labels force a generalization gap once the model fits its
    // training set: e_D stays below e_R.
    let source = generate_blobs::<f64>(2, 4, 30, 3.0, 1.0, 101).unwrap();
    let noisy = crate::data::flip_labels(&source, 0.15, 2).unwrap();
    let (defender, reserved) = crate::data::split_source(&noisy, 0.5, 7).unwrap();
    let model = train(&mlp_config(16, 300), &defender, 5).unwrap();
    let mean_loss = |ds: &LabeledDataset<f64>| {
        ds.iter()
            .map(|s| model.loss(s, LossKind::BoundedTrueClass).unwrap())
            .sum::<f64>()
            / ds.len() as f64
    };
    assert!(mean_loss(&defender) < mean_loss(&reserved));
}

#[test]
fn param_distance_is_zero_only_for_identical_models() {
    let ds = generate_blobs::<f64>(2, 3, 25, 4.0, 1.0, 111).unwrap();
    let m1 = train(&logistic_config(), &ds, 0).unwrap();
    assert_eq!(param_distance(&m1, &m1).unwrap(), 0.0);

    let m2 = train(&logistic_config(), &ds, 999).unwrap();
    assert_eq!(param_distance(&m1, &m2).unwrap(), 0.0);

    // Substitute one training sample.
    let mut samples = ds.samples().to_vec();
    samples[0] = crate::data::Sample::new(vec![0.5, -0.25, 0.75], 1);
    let altered = LabeledDataset::new(samples, ds.num_classes()).unwrap();
    let m3 = train(&logistic_config(), &altered, 0).unwrap();
    assert!(param_distance(&m1, &m3).unwrap() > 0.0);
}

#[test]
fn param_distance_rejects_mismatched_models() {
    let ds = generate_blobs::<f64>(2, 3, 10, 4.0, 1.0, 121).unwrap();
    let logistic = train(&logistic_config(), &ds, 0).unwrap();
    let nb = train(&TrainerConfig::new(Algorithm::GaussianNb), &ds, 0).unwrap();
    assert!(matches!(
        param_distance(&logistic, &nb).unwrap_err(),
        Error::ShapeMismatch(_)
    ));

    let knn = train(&TrainerConfig::new(Algorithm::Knn { k: 3 }), &ds, 0).unwrap();
    assert!(matches!(
        param_distance(&knn, &knn).unwrap_err(),
        Error::Capability(_)
    ));
}

#[test]
fn non_differentiable_models_refuse_gradients() {
    let ds = generate_blobs::<f64>(2, 3, 10, 4.0, 1.0, 131).unwrap();
    let nb = train(&TrainerConfig::new(Algorithm::GaussianNb), &ds, 0).unwrap();
    assert!(matches!(
        nb.gradient(ds.get(0), LossKind::BoundedTrueClass)
            .unwrap_err(),
        Error::Capability(_)
    ));

    let logistic = train(&logistic_config(), &ds, 0).unwrap();
    assert!(matches!(
        logistic.gradient(ds.get(0), LossKind::ZeroOne).unwrap_err(),
        Error::Capability(_)
    ));
}

fn finite_difference_gradient(
    model: &DefenderModel<f64>,
    sample: &crate::data::Sample<f64>,
    objective: GradientObjective,
) -> Vec<f64> {
    let params = model.parameter_vector();
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let step = 1e-5 * (1.0 + params[i].abs());
        let mut plus = params.clone();
        let mut minus = params.clone();
        plus[i] += step;
        minus[i] -= step;
        let loss_plus = model
            .with_parameter_vector(&plus)
            .unwrap()
            .smooth_loss(sample, objective)
            .unwrap();
        let loss_minus = model
            .with_parameter_vector(&minus)
            .unwrap()
            .smooth_loss(sample, objective)
            .unwrap();
        grad[i] = (loss_plus - loss_minus) / (2.0 * step);
    }
    grad
}

fn relative_gradient_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let denom = norm(analytic).max(norm(numeric));
    if denom < 1e-9 {
        return 0.0;
    }
    norm(&diff) / denom
}

#[test]
fn gradients_match_finite_differences_for_all_differentiable_trainers() {
    let ds = generate_blobs::<f64>(3, 3, 10, 3.0, 1.0, 141).unwrap();
    let configs = [
        logistic_config(),
        perceptron_config(false),
        TrainerConfig::new(Algorithm::LinearSvcSgd {
            learning_rate: 0.05,
            epochs: 5,
            l2: 0.01,
        }),
        mlp_config(6, 3),
    ];
    let mut rng = rng_from_seed(4242);
    for config in configs {
        let trained = train(&config, &ds, 17).unwrap();
        // Randomize the parameters so the check is not tied to fitted points.
        for _ in 0..5 {
            let params: Vec<f64> = trained
                .parameter_vector()
                .iter()
                .map(|_| rng.gen_range(-1.5..1.5))
                .collect();
            let model = trained.with_parameter_vector(&params).unwrap();
            let sample = ds.get(rng.gen_range(0..ds.len()));
            for objective in [
                GradientObjective::BoundedTrueClass,
                GradientObjective::TrainingCrossEntropy,
            ] {
                let analytic = model.gradient_of(sample, objective).unwrap();
                let numeric = finite_difference_gradient(&model, sample, objective);
                let err = relative_gradient_error(&analytic, &numeric);
                assert!(
                    err < 1e-4,
                    "{} / {}: relative error {err}",
                    config.algorithm.name(),
                    objective.name()
                );
            }
        }
    }
}

#[test]
fn zero_weight_logistic_has_zero_feature_gradient_at_the_origin() {
    let ds = generate_blobs::<f64>(2, 3, 5, 4.0, 1.0, 151).unwrap();
    let trained = train(&logistic_config(), &ds, 0).unwrap();
    let zeros = vec![0.0; trained.parameter_vector().len()];
    let model = trained.with_parameter_vector(&zeros).unwrap();
    let origin = crate::data::Sample::new(vec![0.0, 0.0, 0.0], 0);
    let grad = model.gradient(&origin, LossKind::BoundedTrueClass).unwrap();
    // Feature coordinates vanish by symmetry; the bias column carries the
    // class-prior gradient.
    let width = ds.dim() + 1;
    for (i, g) in grad.iter().enumerate() {
        if i % width != ds.dim() {
            assert_eq!(*g, 0.0, "coordinate {i}");
        }
    }
}

#[test]
fn overfit_training_points_have_smaller_gradients_on_average() {
    let source = generate_blobs::<f64>(2, 4, 40, 2.5, 1.0, 161).unwrap();
    let flipped = crate::data::flip_labels(&source, 0.2, 5).unwrap();
    let (defender, reserved) = crate::data::split_source(&flipped, 0.5, 9).unwrap();
    let model = train(&mlp_config(24, 600), &defender, 3).unwrap();

    let mean_norm = |ds: &LabeledDataset<f64>| {
        ds.iter()
            .map(|s| {
                model
                    .gradient_norm(s, GradientObjective::TrainingCrossEntropy)
                    .unwrap()
            })
            .sum::<f64>()
            / ds.len() as f64
    };
    assert!(mean_norm(&defender) < mean_norm(&reserved));
}

#[test]
fn model_blob_round_trips_every_algorithm() {
    let ds = generate_blobs::<f64>(2, 3, 15, 4.0, 1.0, 171).unwrap();
    let configs = [
        logistic_config(),
        TrainerConfig::new(Algorithm::GaussianNb),
        TrainerConfig::new(Algorithm::Knn { k: 3 }),
        perceptron_config(true),
        mlp_config(4, 2),
    ];
    for config in configs {
        let model = train(&config, &ds, 23).unwrap();
        let blob = model.to_blob();
        let restored = DefenderModel::<f64>::from_blob(&blob).unwrap();
        assert_eq!(restored, model);
        // Restored models predict identically.
        let proba_a = model.predict_proba(&ds.get(0).features).unwrap();
        let proba_b = restored.predict_proba(&ds.get(0).features).unwrap();
        assert_eq!(proba_a, proba_b);
    }
}

#[test]
fn blob_with_wrong_version_is_rejected() {
    let ds = generate_blobs::<f64>(2, 2, 5, 4.0, 1.0, 181).unwrap();
    let model = train(&TrainerConfig::new(Algorithm::GaussianNb), &ds, 0).unwrap();
    let blob = model
        .to_blob()
        .replace("\"format_version\":1", "\"format_version\":99");
    assert!(matches!(
        DefenderModel::<f64>::from_blob(&blob).unwrap_err(),
        Error::ModelBlob(_)
    ));
}

#[test]
fn f32_models_train_and_predict() {
    let ds = generate_blobs::<f32>(2, 3, 20, 6.0, 1.0, 191).unwrap();
    let model = train(&logistic_config(), &ds, 0).unwrap();
    let proba = model.predict_proba(&ds.get(0).features).unwrap();
    let total: f32 = proba.iter().sum();
    assert!((total - 1.0).abs() < 1e-5);
}

#[test]
fn invalid_hyperparameters_are_rejected() {
    let bad = [
        Algorithm::LogisticGd {
            learning_rate: 0.0,
            epochs: 10,
            l2: 0.0,
        },
        Algorithm::LogisticGd {
            learning_rate: 0.1,
            epochs: 0,
            l2: 0.0,
        },
        Algorithm::Knn { k: 0 },
        Algorithm::MlpSgd {
            hidden: 0,
            learning_rate: 0.1,
            epochs: 1,
            l2: 0.0,
        },
        Algorithm::MlpSgd {
            hidden: 65,
            learning_rate: 0.1,
            epochs: 1,
            l2: 0.0,
        },
        Algorithm::LinearSvcSgd {
            learning_rate: 0.1,
            epochs: 1,
            l2: -1.0,
        },
    ];
    for algorithm in bad {
        assert!(TrainerConfig::new(algorithm).validate().is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn predict_proba_is_a_distribution_for_random_inputs(
        x in prop::collection::vec(-50.0f64..50.0, 3),
        algorithm_pick in 0usize..4,
    ) {
        let ds = generate_blobs::<f64>(3, 3, 8, 4.0, 1.0, 201).unwrap();
        let config = match algorithm_pick {
            0 => logistic_config(),
            1 => TrainerConfig::new(Algorithm::GaussianNb),
            2 => TrainerConfig::new(Algorithm::Knn { k: 3 }),
            _ => mlp_config(4, 2),
        };
        let model = train(&config, &ds, 7).unwrap();
        let proba = model.predict_proba(&x).unwrap();
        prop_assert_eq!(proba.len(), 3);
        for p in &proba {
            prop_assert!(*p >= 0.0);
        }
        let total: f64 = proba.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn losses_stay_in_the_unit_interval(
        x in prop::collection::vec(-20.0f64..20.0, 3),
        label in 0usize..3,
        kind in prop_oneof![Just(LossKind::ZeroOne), Just(LossKind::BoundedTrueClass)],
    ) {
        let ds = generate_blobs::<f64>(3, 3, 8, 4.0, 1.0, 211).unwrap();
        let model = train(&logistic_config(), &ds, 7).unwrap();
        let sample = crate::data::Sample::new(x, label);
        let loss = model.loss(&sample, kind).unwrap();
        prop_assert!((0.0..=1.0).contains(&loss));
    }
}
