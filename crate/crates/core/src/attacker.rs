//! Attack strategies: functions from an LTU round (plus the released
//! model, and optionally its trainer) to a membership claim.
//!
//! Attackers are constructed fresh per round and never see which unlabeled
//! slot holds the member; they receive a per-round RNG stream so rounds
//! stay independent and replayable.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, LtuRound, Sample, UnlabeledSlot};
use crate::defender::{
    param_distance, train, DefenderModel, GradientObjective, LossKind, TrainerConfig,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// An attacker's assignment of the unlabeled pair.
///
/// The claim is always exactly one Defender slot; the paired sample is
/// implicitly claimed Reserved. `confidence` is descriptive metadata in
/// [0.5, 1] (0.5 marks a coin flip); scoring uses only the hard claim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipPrediction {
    pub claimed_defender: UnlabeledSlot,
    pub confidence: f64,
    pub strategy: String,
}

impl MembershipPrediction {
    fn new(claimed_defender: UnlabeledSlot, confidence: f64, strategy: impl Into<String>) -> Self {
        Self {
            claimed_defender,
            confidence: confidence.clamp(0.5, 1.0),
            strategy: strategy.into(),
        }
    }
}

/// A named real-valued function of (model, sample), finite on every input.
///
/// All built-in discriminants are oriented to be larger on
/// Reserved-looking samples, which is the direction the pairwise rule
/// assumes.
#[derive(Clone)]
pub enum Discriminant<S: Scalar> {
    /// A bounded loss.
    Loss(LossKind),
    /// L2 norm of an objective's parameter gradient.
    GradientNorm(GradientObjective),
    /// Entropy of the predicted distribution, in nats.
    Entropy,
    /// One minus the top predicted probability.
    OneMinusTopProb,
    /// Caller-supplied function, mostly for tests and exploration.
    Custom { name: String, f: DiscriminantFn<S> },
}

/// Shared handle to a caller-supplied discriminant function.
pub type DiscriminantFn<S> = Arc<dyn Fn(&DefenderModel<S>, &Sample<S>) -> f64 + Send + Sync>;

impl<S: Scalar> fmt::Debug for Discriminant<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Discriminant({})", self.name())
    }
}

impl<S: Scalar> Discriminant<S> {
    pub fn name(&self) -> String {
        match self {
            Discriminant::Loss(kind) => format!("loss[{}]", kind.name()),
            Discriminant::GradientNorm(objective) => {
                format!("gradient_norm[{}]", objective.name())
            }
            Discriminant::Entropy => "entropy".into(),
            Discriminant::OneMinusTopProb => "one_minus_top_prob".into(),
            Discriminant::Custom { name, .. } => format!("custom[{name}]"),
        }
    }

    /// Evaluates the function, rejecting non-finite outputs.
    pub fn evaluate(&self, model: &DefenderModel<S>, sample: &Sample<S>) -> Result<f64> {
        let value = match self {
            Discriminant::Loss(kind) => model.loss(sample, *kind)?,
            Discriminant::GradientNorm(objective) => model.gradient_norm(sample, *objective)?,
            Discriminant::Entropy => {
                let proba = model.predict_proba(&sample.features)?;
                proba
                    .iter()
                    .map(|&p| {
                        let p = p.to_f64_lossy();
                        if p > 0.0 {
                            -p * p.ln()
                        } else {
                            0.0
                        }
                    })
                    .sum()
            }
            Discriminant::OneMinusTopProb => {
                let proba = model.predict_proba(&sample.features)?;
                1.0 - proba
                    .iter()
                    .map(|p| p.to_f64_lossy())
                    .fold(f64::NEG_INFINITY, f64::max)
            }
            Discriminant::Custom { f, .. } => f(model, sample),
        };
        if !value.is_finite() {
            return Err(Error::Discriminant(format!(
                "{} returned {value}",
                self.name()
            )));
        }
        Ok(value)
    }
}

/// Uninformed baseline: a fair coin.
pub fn coin_flip_attack(rng: &mut impl Rng) -> MembershipPrediction {
    let slot = if rng.gen::<bool>() {
        UnlabeledSlot::First
    } else {
        UnlabeledSlot::Second
    };
    MembershipPrediction::new(slot, 0.5, "coin_flip")
}

/// Pairwise rule: the unlabeled sample with the smaller discriminant value
/// is claimed as the member; exact ties fall to a fair coin.
pub fn gap_attack<S: Scalar>(
    round: &LtuRound<S>,
    model: &DefenderModel<S>,
    f: &Discriminant<S>,
    rng: &mut impl Rng,
) -> Result<MembershipPrediction> {
    let (u1, u2) = round.unlabeled();
    let f1 = f.evaluate(model, u1)?;
    let f2 = f.evaluate(model, u2)?;
    let strategy = format!("gap[{}]", f.name());
    let prediction = if f1 < f2 {
        MembershipPrediction::new(UnlabeledSlot::First, 1.0, strategy)
    } else if f2 < f1 {
        MembershipPrediction::new(UnlabeledSlot::Second, 1.0, strategy)
    } else if rng.gen::<bool>() {
        MembershipPrediction::new(UnlabeledSlot::First, 0.5, strategy)
    } else {
        MembershipPrediction::new(UnlabeledSlot::Second, 0.5, strategy)
    };
    Ok(prediction)
}

/// Randomized bounded-loss rule: draw `z ~ U(0,1)` and claim the first
/// unlabeled sample as Reserved when `z < loss(u1)`, as the member
/// otherwise.
pub fn blf_attack<S: Scalar>(
    round: &LtuRound<S>,
    model: &DefenderModel<S>,
    kind: LossKind,
    rng: &mut impl Rng,
) -> Result<MembershipPrediction> {
    let (u1, _) = round.unlabeled();
    let loss = model.loss(u1, kind)?;
    let z: f64 = rng.gen();
    let claimed = if z < loss {
        UnlabeledSlot::Second
    } else {
        UnlabeledSlot::First
    };
    Ok(MembershipPrediction::new(
        claimed,
        loss.max(1.0 - loss),
        format!("blf[{}]", kind.name()),
    ))
}

/// How the retrain attacker seeds its mock trainings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RetrainSeedMode {
    /// Use the seed recorded in the target's fingerprint (the "seeded"
    /// regimes, where the Defender's seed is public).
    Shared,
    /// Use a fixed seed that is not the Defender's.
    Fixed { seed: u64 },
    /// Draw a fresh seed per round (the "not seeded" regime).
    Fresh,
}

/// Retrains the Defender's own trainer on the pool plus each unlabeled
/// candidate and claims the candidate whose model lands closer in
/// parameter space; an exact match decides immediately.
///
/// Both candidate trainings use the same seed, so any difference between
/// them comes from the data.
pub fn retrain_attack<S: Scalar>(
    round: &LtuRound<S>,
    trainer: &TrainerConfig,
    target: &DefenderModel<S>,
    seed_mode: RetrainSeedMode,
    rng: &mut impl Rng,
) -> Result<MembershipPrediction> {
    let seed = match seed_mode {
        RetrainSeedMode::Shared => target.fingerprint().seed,
        RetrainSeedMode::Fixed { seed } => seed,
        RetrainSeedMode::Fresh => rng.gen(),
    };
    let candidate_1 = round.candidate_defender_set(UnlabeledSlot::First)?;
    let candidate_2 = round.candidate_defender_set(UnlabeledSlot::Second)?;
    let model_1 = train(trainer, &candidate_1, seed)?;
    let model_2 = train(trainer, &candidate_2, seed)?;
    let dist_1 = param_distance(&model_1, target)?;
    let dist_2 = param_distance(&model_2, target)?;

    let strategy = "retrain".to_string();
    let prediction = if dist_1 < dist_2 {
        MembershipPrediction::new(
            UnlabeledSlot::First,
            margin_confidence(dist_1, dist_2),
            strategy,
        )
    } else if dist_2 < dist_1 {
        MembershipPrediction::new(
            UnlabeledSlot::Second,
            margin_confidence(dist_2, dist_1),
            strategy,
        )
    } else if rng.gen::<bool>() {
        // Equal distances (both zero means the trainer is not injective on
        // this pair); surfaced as a coin-flip confidence of 0.5.
        MembershipPrediction::new(UnlabeledSlot::First, 0.5, strategy)
    } else {
        MembershipPrediction::new(UnlabeledSlot::Second, 0.5, strategy)
    };
    Ok(prediction)
}

/// Maps a distance pair with `smaller < larger` onto (0.5, 1]; an exact
/// parameter match (distance zero) gives full confidence.
fn margin_confidence(smaller: f64, larger: f64) -> f64 {
    0.5 + 0.5 * (larger - smaller) / (larger + smaller)
}

/// White-box rule: the unlabeled sample with the smaller gradient norm at
/// the released model is claimed as the member (training points sit
/// closer to stationarity of the training objective). Exact ties resolve
/// to the first slot; slot order is already randomized per round.
pub fn gradient_attack<S: Scalar>(
    round: &LtuRound<S>,
    model: &DefenderModel<S>,
    objective: GradientObjective,
) -> Result<MembershipPrediction> {
    let (u1, u2) = round.unlabeled();
    let g1 = model.gradient_norm(u1, objective)?;
    let g2 = model.gradient_norm(u2, objective)?;
    let claimed = if g1 <= g2 {
        UnlabeledSlot::First
    } else {
        UnlabeledSlot::Second
    };
    Ok(MembershipPrediction::new(
        claimed,
        if g1 == g2 { 0.5 } else { 1.0 },
        format!("gradient[{}]", objective.name()),
    ))
}

/// Learned rule: featurize every pool sample through the released model,
/// train a binary membership classifier on those features, and claim the
/// unlabeled sample with the higher predicted membership probability.
///
/// Membership classes: Reserved = 0, Defender = 1. With
/// `include_raw_features` the raw input vector is appended to the
/// model-derived features.
pub fn trained_model_attack<S: Scalar>(
    round: &LtuRound<S>,
    model: &DefenderModel<S>,
    attack_trainer: &TrainerConfig,
    features: &[Discriminant<S>],
    include_raw_features: bool,
    rng: &mut impl Rng,
) -> Result<MembershipPrediction> {
    if features.is_empty() && !include_raw_features {
        return Err(Error::InvalidArgument(
            "trained-model attack needs at least one feature".into(),
        ));
    }
    if round.attack_defender().is_empty() || round.attack_reserved().is_empty() {
        return Err(Error::Protocol(
            "trained-model attack needs both membership classes in the pools".into(),
        ));
    }

    let featurize = |sample: &Sample<S>| -> Result<Vec<S>> {
        let mut row = Vec::with_capacity(features.len());
        for f in features {
            row.push(S::from_f64_lossy(f.evaluate(model, sample)?));
        }
        if include_raw_features {
            row.extend_from_slice(&sample.features);
        }
        Ok(row)
    };

    let mut attack_samples =
        Vec::with_capacity(round.attack_defender().len() + round.attack_reserved().len());
    for sample in round.attack_reserved() {
        attack_samples.push(Sample::new(featurize(sample)?, 0));
    }
    for sample in round.attack_defender() {
        attack_samples.push(Sample::new(featurize(sample)?, 1));
    }
    let attack_data = LabeledDataset::new(attack_samples, 2)?;
    let attack_model = train(attack_trainer, &attack_data, rng.gen())?;

    let (u1, u2) = round.unlabeled();
    let p1 = attack_model.predict_proba(&featurize(u1)?)?[1].to_f64_lossy();
    let p2 = attack_model.predict_proba(&featurize(u2)?)?[1].to_f64_lossy();

    let strategy = "trained_model".to_string();
    let prediction = if p1 > p2 {
        MembershipPrediction::new(UnlabeledSlot::First, 0.5 + 0.5 * (p1 - p2), strategy)
    } else if p2 > p1 {
        MembershipPrediction::new(UnlabeledSlot::Second, 0.5 + 0.5 * (p2 - p1), strategy)
    } else if rng.gen::<bool>() {
        MembershipPrediction::new(UnlabeledSlot::First, 0.5, strategy)
    } else {
        MembershipPrediction::new(UnlabeledSlot::Second, 0.5, strategy)
    };
    Ok(prediction)
}

/// A complete, dispatchable attacker choice.
#[derive(Clone, Debug)]
pub enum AttackerSpec<S: Scalar> {
    /// Fair-coin baseline.
    CoinFlip,
    /// Pairwise discriminant rule.
    Gap { discriminant: Discriminant<S> },
    /// Randomized bounded-loss rule.
    Blf { kind: LossKind },
    /// Mock-model retraining with the Defender's trainer.
    Retrain { seed_mode: RetrainSeedMode },
    /// Gradient-norm comparison at the released model.
    Gradient { objective: GradientObjective },
    /// Membership classifier trained on model-derived features.
    TrainedModel {
        attack_trainer: TrainerConfig,
        features: Vec<Discriminant<S>>,
        include_raw_features: bool,
    },
}

impl<S: Scalar> AttackerSpec<S> {
    /// Tag recorded in results and reports.
    pub fn name(&self) -> String {
        match self {
            AttackerSpec::CoinFlip => "coin_flip".into(),
            AttackerSpec::Gap { discriminant } => format!("gap[{}]", discriminant.name()),
            AttackerSpec::Blf { kind } => format!("blf[{}]", kind.name()),
            AttackerSpec::Retrain { seed_mode } => match seed_mode {
                RetrainSeedMode::Shared => "retrain[shared]".into(),
                RetrainSeedMode::Fixed { seed } => format!("retrain[fixed:{seed}]"),
                RetrainSeedMode::Fresh => "retrain[fresh]".into(),
            },
            AttackerSpec::Gradient { objective } => format!("gradient[{}]", objective.name()),
            AttackerSpec::TrainedModel { .. } => "trained_model".into(),
        }
    }

    /// Runs the attack for one round. The Defender's trainer is read from
    /// the released model's fingerprint.
    pub fn attack(
        &self,
        round: &LtuRound<S>,
        model: &DefenderModel<S>,
        rng: &mut impl Rng,
    ) -> Result<MembershipPrediction> {
        match self {
            AttackerSpec::CoinFlip => Ok(coin_flip_attack(rng)),
            AttackerSpec::Gap { discriminant } => gap_attack(round, model, discriminant, rng),
            AttackerSpec::Blf { kind } => blf_attack(round, model, *kind, rng),
            AttackerSpec::Retrain { seed_mode } => {
                retrain_attack(round, &model.fingerprint().config, model, *seed_mode, rng)
            }
            AttackerSpec::Gradient { objective } => gradient_attack(round, model, *objective),
            AttackerSpec::TrainedModel {
                attack_trainer,
                features,
                include_raw_features,
            } => trained_model_attack(
                round,
                model,
                attack_trainer,
                features,
                *include_raw_features,
                rng,
            ),
        }
    }
}
