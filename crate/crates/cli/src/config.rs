//! Flat key-value experiment configuration.
//!
//! Configs are TOML files with only top-level keys; every key has a
//! default, command-line flags override file keys, and the fully resolved
//! config (all defaults materialized, the seed made explicit) is echoed
//! into the report and written back as `resolved_config.toml`, so any run
//! can be replayed exactly from its own outputs.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ltu_core::attacker::{AttackerSpec, Discriminant, RetrainSeedMode};
use ltu_core::data::{generate_blobs, load_csv};
use ltu_core::defender::{Algorithm, GradientObjective, InitSeedPolicy, LossKind, TrainerConfig};
use ltu_core::seeding::{derive_seed, Stream};
use ltu_core::Dataset64;
use serde::{Deserialize, Serialize};

/// One experiment: data source, defender, attacker, protocol, outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    // Data source: "synthetic" blobs or a "csv" file.
    pub dataset: String,
    pub csv_path: String,
    pub num_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub class_separation: f64,
    pub noise_scale: f64,
    pub split_fraction: f64,
    pub label_flip_fraction: f64,

    // Defender trainer and randomness regime.
    pub trainer: String,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub knn_k: usize,
    pub hidden_width: usize,
    pub regime: String,

    // Attacker.
    pub attacker: String,
    pub attack_loss: String,
    pub gap_discriminant: String,
    pub gradient_objective: String,
    pub retrain_seed_mode: String,
    pub fixed_wrong_seed: u64,
    pub attack_features: String,
    pub attack_raw_features: bool,
    pub attack_trainer: String,

    // Protocol.
    pub rounds: usize,
    pub trials: usize,
    pub seed: Option<u64>,

    // Individual privacy scoring.
    pub individual_scores: bool,
    pub individual_rounds: usize,
    pub histogram_bins: usize,

    // Outputs.
    pub out_dir: String,
    pub run_label: String,

    // Grid and comparison sweeps.
    pub grid_trainers: String,
    pub grid_regimes: String,
    pub compare_attackers: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: "synthetic".into(),
            csv_path: String::new(),
            num_classes: 2,
            dim: 4,
            per_class: 200,
            class_separation: 4.0,
            noise_scale: 1.0,
            split_fraction: 0.5,
            label_flip_fraction: 0.0,

            trainer: "logistic_gd".into(),
            learning_rate: 0.1,
            epochs: 100,
            l2: 0.0,
            knn_k: 5,
            hidden_width: 16,
            regime: "orig-order-seeded".into(),

            attacker: "gap".into(),
            attack_loss: "bounded_true_class".into(),
            gap_discriminant: "loss".into(),
            gradient_objective: "training_cross_entropy".into(),
            retrain_seed_mode: "shared".into(),
            fixed_wrong_seed: 1,
            attack_features: "loss,one_minus_top_prob,entropy".into(),
            attack_raw_features: false,
            attack_trainer: "logistic_gd".into(),

            rounds: 100,
            trials: 1,
            seed: None,

            individual_scores: false,
            individual_rounds: 50,
            histogram_bins: 10,

            out_dir: "runs".into(),
            run_label: "run".into(),

            grid_trainers: "logistic_gd,gaussian_nb,knn,perceptron_sgd,linear_svc_sgd,mlp_sgd"
                .into(),
            grid_regimes: "orig-order-seeded,rand-order-seeded,not-seeded".into(),
            compare_attackers: "gap,blf".into(),
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rounds: Option<usize>,
    pub trials: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .with_context(|| format!("reading config {}", path.as_ref().display()))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).context("parsing config")?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies overrides, draws the seed if absent, and validates every
    /// key by constructing the runtime objects once.
    pub fn resolve(mut self, overrides: Overrides, out_dir: Option<&str>) -> Result<Self> {
        if let Some(seed) = overrides.seed {
            self.seed = Some(seed);
        }
        if let Some(rounds) = overrides.rounds {
            self.rounds = rounds;
        }
        if let Some(trials) = overrides.trials {
            self.trials = trials;
        }
        if let Some(dir) = out_dir {
            self.out_dir = dir.to_string();
        }
        if self.seed.is_none() {
            // Drawn once and recorded; everything downstream derives from it.
            self.seed = Some(rand::random());
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            bail!("rounds: must be at least 1");
        }
        if self.trials == 0 {
            bail!("trials: must be at least 1");
        }
        match self.dataset.as_str() {
            "synthetic" | "csv" => {}
            other => bail!("dataset: unknown source {other:?} (synthetic|csv)"),
        }
        if self.dataset == "csv" && self.csv_path.is_empty() {
            bail!("csv_path: required when dataset = \"csv\"");
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            bail!("split_fraction: must be in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.label_flip_fraction) {
            bail!("label_flip_fraction: must be in [0, 1]");
        }
        self.trainer_config()
            .context("trainer configuration invalid")?;
        self.attacker_spec()
            .context("attacker configuration invalid")?;
        for name in self.grid_trainer_names() {
            self.trainer_config_for(&name)
                .with_context(|| format!("grid_trainers entry {name:?}"))?;
        }
        for regime in self.grid_regime_names() {
            parse_regime(&regime).with_context(|| format!("grid_regimes entry {regime:?}"))?;
        }
        for name in self.compare_attacker_names() {
            self.attacker_spec_for(&name)
                .with_context(|| format!("compare_attackers entry {name:?}"))?;
        }
        Ok(())
    }

    /// The resolved master seed; only valid after [`Self::resolve`].
    pub fn master_seed(&self) -> u64 {
        self.seed.expect("seed resolved at startup")
    }

    pub fn grid_trainer_names(&self) -> Vec<String> {
        split_list(&self.grid_trainers)
    }

    pub fn grid_regime_names(&self) -> Vec<String> {
        split_list(&self.grid_regimes)
    }

    pub fn compare_attacker_names(&self) -> Vec<String> {
        split_list(&self.compare_attackers)
    }

    /// Loads or generates the source dataset.
    pub fn load_source(&self) -> Result<Dataset64> {
        match self.dataset.as_str() {
            "synthetic" => generate_blobs(
                self.num_classes,
                self.dim,
                self.per_class,
                self.class_separation,
                self.noise_scale,
                self.master_seed(),
            )
            .context("generating synthetic blobs"),
            "csv" => load_csv(&self.csv_path)
                .with_context(|| format!("loading dataset {}", self.csv_path)),
            other => bail!("dataset: unknown source {other:?}"),
        }
    }

    pub fn trainer_config(&self) -> Result<TrainerConfig> {
        self.trainer_config_for(&self.trainer)
    }

    /// Builds a trainer config by algorithm name, applying the configured
    /// hyperparameters and randomness regime.
    pub fn trainer_config_for(&self, trainer: &str) -> Result<TrainerConfig> {
        let algorithm = match trainer {
            "logistic_gd" => Algorithm::LogisticGd {
                learning_rate: self.learning_rate,
                epochs: self.epochs,
                l2: self.l2,
            },
            "gaussian_nb" => Algorithm::GaussianNb,
            "knn" => Algorithm::Knn { k: self.knn_k },
            "perceptron_sgd" => Algorithm::PerceptronSgd {
                learning_rate: self.learning_rate,
                epochs: self.epochs,
            },
            "linear_svc_sgd" => Algorithm::LinearSvcSgd {
                learning_rate: self.learning_rate,
                epochs: self.epochs,
                l2: self.l2,
            },
            "mlp_sgd" => Algorithm::MlpSgd {
                hidden: self.hidden_width,
                learning_rate: self.learning_rate,
                epochs: self.epochs,
                l2: self.l2,
            },
            other => bail!(
                "trainer: unknown algorithm {other:?} \
                 (logistic_gd|gaussian_nb|knn|perceptron_sgd|linear_svc_sgd|mlp_sgd)"
            ),
        };
        let regime = parse_regime(&self.regime)?;
        let config = TrainerConfig::new(algorithm)
            .with_shuffle(regime.shuffle)
            .with_seed_policy(if regime.seeded {
                // The fixed seed is public: it derives from the recorded
                // master seed, so retraining with the config reproduces it.
                InitSeedPolicy::Fixed {
                    seed: derive_seed(self.master_seed_or_zero(), Stream::Train, 0),
                }
            } else {
                InitSeedPolicy::FromEvaluator
            });
        config
            .validate()
            .map_err(|e| anyhow::anyhow!(e.to_string()))?;
        Ok(config)
    }

    /// Trainer config under an explicit regime name (grid sweeps).
    pub fn trainer_config_with_regime(&self, trainer: &str, regime: &str) -> Result<TrainerConfig> {
        let mut with_regime = self.clone();
        with_regime.regime = regime.to_string();
        with_regime.trainer_config_for(trainer)
    }

    fn master_seed_or_zero(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn loss_kind(&self) -> Result<LossKind> {
        parse_loss_kind(&self.attack_loss)
    }

    pub fn attacker_spec(&self) -> Result<AttackerSpec<f64>> {
        self.attacker_spec_for(&self.attacker)
    }

    pub fn attacker_spec_for(&self, attacker: &str) -> Result<AttackerSpec<f64>> {
        Ok(match attacker {
            "coin_flip" => AttackerSpec::CoinFlip,
            "gap" => AttackerSpec::Gap {
                discriminant: self.gap_discriminant()?,
            },
            "blf" => AttackerSpec::Blf {
                kind: self.loss_kind()?,
            },
            "retrain" => AttackerSpec::Retrain {
                seed_mode: match self.retrain_seed_mode.as_str() {
                    "shared" => RetrainSeedMode::Shared,
                    "fixed_wrong" => RetrainSeedMode::Fixed {
                        seed: self.fixed_wrong_seed,
                    },
                    "fresh" => RetrainSeedMode::Fresh,
                    other => bail!(
                        "retrain_seed_mode: unknown mode {other:?} (shared|fixed_wrong|fresh)"
                    ),
                },
            },
            "gradient" => AttackerSpec::Gradient {
                objective: parse_gradient_objective(&self.gradient_objective)?,
            },
            "trained_model" => AttackerSpec::TrainedModel {
                attack_trainer: self.attack_trainer_config()?,
                features: self.attack_feature_list()?,
                include_raw_features: self.attack_raw_features,
            },
            other => bail!(
                "attacker: unknown attacker {other:?} \
                 (coin_flip|gap|blf|retrain|gradient|trained_model)"
            ),
        })
    }

    pub fn gap_discriminant(&self) -> Result<Discriminant<f64>> {
        parse_discriminant(
            &self.gap_discriminant,
            self.loss_kind()?,
            parse_gradient_objective(&self.gradient_objective)?,
        )
    }

    fn attack_trainer_config(&self) -> Result<TrainerConfig> {
        // The membership classifier uses its own defaults; hidden width and
        // l2 are shared knobs, the epoch count is kept modest.
        let algorithm = match self.attack_trainer.as_str() {
            "logistic_gd" => Algorithm::LogisticGd {
                learning_rate: 0.3,
                epochs: 80,
                l2: self.l2,
            },
            "mlp_sgd" => Algorithm::MlpSgd {
                hidden: self.hidden_width,
                learning_rate: 0.1,
                epochs: 40,
                l2: self.l2,
            },
            other => bail!("attack_trainer: unknown algorithm {other:?} (logistic_gd|mlp_sgd)"),
        };
        Ok(TrainerConfig::new(algorithm).with_shuffle(false))
    }

    fn attack_feature_list(&self) -> Result<Vec<Discriminant<f64>>> {
        let kind = self.loss_kind()?;
        let objective = parse_gradient_objective(&self.gradient_objective)?;
        let names = split_list(&self.attack_features);
        if names.is_empty() {
            bail!("attack_features: need at least one feature");
        }
        names
            .iter()
            .map(|name| parse_discriminant(name, kind, objective))
            .collect()
    }
}

struct Regime {
    shuffle: bool,
    seeded: bool,
}

fn parse_regime(name: &str) -> Result<Regime> {
    Ok(match name {
        "orig-order-seeded" => Regime {
            shuffle: false,
            seeded: true,
        },
        "rand-order-seeded" => Regime {
            shuffle: true,
            seeded: true,
        },
        "not-seeded" => Regime {
            shuffle: true,
            seeded: false,
        },
        other => bail!(
            "regime: unknown regime {other:?} (orig-order-seeded|rand-order-seeded|not-seeded)"
        ),
    })
}

fn parse_loss_kind(name: &str) -> Result<LossKind> {
    Ok(match name {
        "zero_one" => LossKind::ZeroOne,
        "bounded_true_class" => LossKind::BoundedTrueClass,
        other => bail!("attack_loss: unknown loss {other:?} (zero_one|bounded_true_class)"),
    })
}

fn parse_gradient_objective(name: &str) -> Result<GradientObjective> {
    Ok(match name {
        "bounded_true_class" => GradientObjective::BoundedTrueClass,
        "training_cross_entropy" => GradientObjective::TrainingCrossEntropy,
        other => bail!(
            "gradient_objective: unknown objective {other:?} \
             (bounded_true_class|training_cross_entropy)"
        ),
    })
}

fn parse_discriminant(
    name: &str,
    kind: LossKind,
    objective: GradientObjective,
) -> Result<Discriminant<f64>> {
    Ok(match name {
        "loss" => Discriminant::Loss(kind),
        "gradient_norm" => Discriminant::GradientNorm(objective),
        "entropy" => Discriminant::Entropy,
        "one_minus_top_prob" => Discriminant::OneMinusTopProb,
        other => {
            bail!("unknown discriminant {other:?} (loss|gradient_norm|entropy|one_minus_top_prob)")
        }
    })
}

fn split_list(text: &str) -> Vec<String> {
    text.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}
