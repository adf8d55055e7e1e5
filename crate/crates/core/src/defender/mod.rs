//! The Defender trainer/model zoo.
//!
//! Each trainer declares its capabilities up front: whether the fitted
//! model is independent of the seed (`deterministic`), independent of the
//! sample order (`order_invariant`), whether it stores training examples
//! verbatim (`example_based`), and whether per-sample parameter gradients
//! are available (`differentiable`). The declarations are load-bearing:
//! retrain attacks achieve exact parameter matches precisely when
//! `deterministic && order_invariant` hold, and the harness reports
//! `example_based` storage as a leak regardless of attack outcomes.
//!
//! Order invariance is exact, not approximate: order-invariant trainers
//! sort their input canonically before fitting, so the floating-point
//! summation order cannot depend on how the caller arranged the data.

mod knn;
mod linear;
mod mlp;
mod naive_bayes;

use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Sample};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Training algorithm with its hyperparameters.
///
/// Hyperparameters are plain f64 regardless of the model scalar type; they
/// are converted at training time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Algorithm {
    /// Full-batch softmax regression, zero init, fixed epoch count.
    LogisticGd {
        learning_rate: f64,
        epochs: usize,
        l2: f64,
    },
    /// Closed-form Gaussian naive Bayes.
    GaussianNb,
    /// k-nearest neighbors; stores its training set verbatim.
    Knn { k: usize },
    /// Multiclass perceptron updated one sample at a time, zero init.
    PerceptronSgd { learning_rate: f64, epochs: usize },
    /// Multiclass hinge-loss SGD, zero init.
    LinearSvcSgd {
        learning_rate: f64,
        epochs: usize,
        l2: f64,
    },
    /// One-hidden-layer tanh network trained by per-sample SGD.
    MlpSgd {
        hidden: usize,
        learning_rate: f64,
        epochs: usize,
        l2: f64,
    },
}

impl Algorithm {
    /// Stable identifier used in blobs, reports, and config files.
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::LogisticGd { .. } => "logistic_gd",
            Algorithm::GaussianNb => "gaussian_nb",
            Algorithm::Knn { .. } => "knn",
            Algorithm::PerceptronSgd { .. } => "perceptron_sgd",
            Algorithm::LinearSvcSgd { .. } => "linear_svc_sgd",
            Algorithm::MlpSgd { .. } => "mlp_sgd",
        }
    }

    fn validate(&self) -> Result<()> {
        let check_lr = |lr: f64| -> Result<()> {
            if lr > 0.0 && lr.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "learning rate must be positive, got {lr}"
                )))
            }
        };
        let check_epochs = |e: usize| -> Result<()> {
            if e >= 1 {
                Ok(())
            } else {
                Err(Error::InvalidArgument("epochs must be at least 1".into()))
            }
        };
        let check_l2 = |l2: f64| -> Result<()> {
            if l2 >= 0.0 && l2.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "l2 must be non-negative, got {l2}"
                )))
            }
        };
        match *self {
            Algorithm::LogisticGd {
                learning_rate,
                epochs,
                l2,
            } => {
                check_lr(learning_rate)?;
                check_epochs(epochs)?;
                check_l2(l2)
            }
            Algorithm::GaussianNb => Ok(()),
            Algorithm::Knn { k } => {
                if k >= 1 {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument("k must be at least 1".into()))
                }
            }
            Algorithm::PerceptronSgd {
                learning_rate,
                epochs,
            } => {
                check_lr(learning_rate)?;
                check_epochs(epochs)
            }
            Algorithm::LinearSvcSgd {
                learning_rate,
                epochs,
                l2,
            } => {
                check_lr(learning_rate)?;
                check_epochs(epochs)?;
                check_l2(l2)
            }
            Algorithm::MlpSgd {
                hidden,
                learning_rate,
                epochs,
                l2,
            } => {
                if hidden == 0 || hidden > 64 {
                    return Err(Error::InvalidArgument(format!(
                        "hidden width must be in 1..=64, got {hidden}"
                    )));
                }
                check_lr(learning_rate)?;
                check_epochs(epochs)?;
                check_l2(l2)
            }
        }
    }
}

/// Where the trainer's seed comes from.
///
/// `Fixed` bakes the seed into the (public) configuration, so anyone
/// retraining with the same config reproduces the randomness. With
/// `FromEvaluator` the seed is supplied per `train` call and is not part
/// of the released configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum InitSeedPolicy {
    Fixed { seed: u64 },
    FromEvaluator,
}

/// Complete, releasable description of how the Defender model is trained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub algorithm: Algorithm,
    pub shuffle_each_epoch: bool,
    pub init_seed_policy: InitSeedPolicy,
}

impl TrainerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            shuffle_each_epoch: false,
            init_seed_policy: InitSeedPolicy::FromEvaluator,
        }
    }

    pub fn with_shuffle(mut self, shuffle: bool) -> Self {
        self.shuffle_each_epoch = shuffle;
        self
    }

    pub fn with_seed_policy(mut self, policy: InitSeedPolicy) -> Self {
        self.init_seed_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.algorithm.validate()
    }

    /// Capability flags implied by the algorithm and seed policy.
    pub fn capabilities(&self) -> TrainerCapabilities {
        let (order_invariant, example_based, differentiable, random_init) = match self.algorithm {
            Algorithm::LogisticGd { .. } => (true, false, true, false),
            Algorithm::GaussianNb => (true, false, false, false),
            Algorithm::Knn { .. } => (true, true, false, false),
            Algorithm::PerceptronSgd { .. } => (false, false, true, false),
            Algorithm::LinearSvcSgd { .. } => (false, false, true, false),
            Algorithm::MlpSgd { .. } => (false, false, true, true),
        };
        // Order-invariant trainers fit canonically sorted data, so an epoch
        // shuffle would be a no-op; they never consume randomness.
        let consumes_rng = !order_invariant && (random_init || self.shuffle_each_epoch);
        let deterministic =
            !consumes_rng || matches!(self.init_seed_policy, InitSeedPolicy::Fixed { .. });
        TrainerCapabilities {
            deterministic,
            order_invariant,
            example_based,
            differentiable,
        }
    }

    /// The seed actually used for training under this config.
    pub fn effective_seed(&self, evaluator_seed: u64) -> u64 {
        match self.init_seed_policy {
            InitSeedPolicy::Fixed { seed } => seed,
            InitSeedPolicy::FromEvaluator => evaluator_seed,
        }
    }
}

/// Declared behavioral properties of a trainer configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainerCapabilities {
    /// The fitted model does not depend on the evaluator-supplied seed.
    pub deterministic: bool,
    /// The fitted model does not depend on the sample order.
    pub order_invariant: bool,
    /// The model stores training samples verbatim.
    pub example_based: bool,
    /// Per-sample parameter gradients are available.
    pub differentiable: bool,
}

/// Loss functions bounded in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// 1 if the argmax prediction is wrong, else 0.
    ZeroOne,
    /// 1 minus the predicted probability of the true class.
    BoundedTrueClass,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::ZeroOne => "zero_one",
            LossKind::BoundedTrueClass => "bounded_true_class",
        }
    }
}

/// Differentiable objectives for white-box gradient access.
///
/// The bounded evaluation loss saturates on confidently wrong points (its
/// gradient carries a `p(true)` factor), so gradient attacks default to
/// the trainer's own smooth objective instead.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientObjective {
    /// `1 - p(true class)`, the bounded evaluation loss.
    BoundedTrueClass,
    /// Cross-entropy through the model's (surrogate) probabilities; the
    /// smooth loss the gradient-trained models descend.
    TrainingCrossEntropy,
}

impl GradientObjective {
    pub fn name(self) -> &'static str {
        match self {
            GradientObjective::BoundedTrueClass => "bounded_true_class",
            GradientObjective::TrainingCrossEntropy => "training_cross_entropy",
        }
    }
}

/// What the model was trained with: the full config plus the resolved seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingFingerprint {
    pub config: TrainerConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "S: Scalar")]
pub(crate) enum ModelKind<S: Scalar> {
    Linear(linear::LinearModel<S>),
    NaiveBayes(naive_bayes::NbModel<S>),
    Knn(knn::KnnModel<S>),
    Mlp(mlp::MlpModel<S>),
}

/// A trained Defender model with white-box access: predictions, bounded
/// losses, a flat parameter vector, and per-sample parameter gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct DefenderModel<S: Scalar> {
    kind: ModelKind<S>,
    num_classes: usize,
    dim: usize,
    fingerprint: TrainingFingerprint,
}

/// Trains a Defender model.
///
/// `seed` is consumed only when the config's seed policy is
/// `FromEvaluator` and the algorithm actually uses randomness; the
/// resolved seed is recorded in the model fingerprint either way.
pub fn train<S: Scalar>(
    config: &TrainerConfig,
    data: &LabeledDataset<S>,
    seed: u64,
) -> Result<DefenderModel<S>> {
    config.validate()?;
    if data.num_classes() < 2 {
        return Err(Error::InvalidArgument(
            "training needs at least 2 classes".into(),
        ));
    }
    let effective_seed = config.effective_seed(seed);
    let caps = config.capabilities();

    let fit_data;
    let data_ref = if caps.order_invariant {
        fit_data = data.canonical_sorted();
        &fit_data
    } else {
        data
    };

    let kind = match config.algorithm {
        Algorithm::LogisticGd {
            learning_rate,
            epochs,
            l2,
        } => ModelKind::Linear(linear::fit_logistic_gd(data_ref, learning_rate, epochs, l2)),
        Algorithm::GaussianNb => ModelKind::NaiveBayes(naive_bayes::fit(data_ref)),
        Algorithm::Knn { k } => ModelKind::Knn(knn::fit(data_ref, k)),
        Algorithm::PerceptronSgd {
            learning_rate,
            epochs,
        } => ModelKind::Linear(linear::fit_perceptron_sgd(
            data_ref,
            learning_rate,
            epochs,
            config.shuffle_each_epoch,
            effective_seed,
        )),
        Algorithm::LinearSvcSgd {
            learning_rate,
            epochs,
            l2,
        } => ModelKind::Linear(linear::fit_linear_svc_sgd(
            data_ref,
            learning_rate,
            epochs,
            l2,
            config.shuffle_each_epoch,
            effective_seed,
        )),
        Algorithm::MlpSgd {
            hidden,
            learning_rate,
            epochs,
            l2,
        } => ModelKind::Mlp(mlp::fit(
            data_ref,
            hidden,
            learning_rate,
            epochs,
            l2,
            config.shuffle_each_epoch,
            effective_seed,
        )),
    };

    let model = DefenderModel {
        kind,
        num_classes: data.num_classes(),
        dim: data.dim(),
        fingerprint: TrainingFingerprint {
            config: config.clone(),
            seed: effective_seed,
        },
    };
    if model.parameter_vector().iter().any(|v| !v.is_finite()) {
        return Err(Error::Training(format!(
            "{} produced non-finite parameters (diverged)",
            config.algorithm.name()
        )));
    }
    Ok(model)
}

impl<S: Scalar> DefenderModel<S> {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fingerprint(&self) -> &TrainingFingerprint {
        &self.fingerprint
    }

    pub fn algorithm(&self) -> &Algorithm {
        &self.fingerprint.config.algorithm
    }

    pub fn capabilities(&self) -> TrainerCapabilities {
        self.fingerprint.config.capabilities()
    }

    /// Flat parameter vector. Empty for the example-based KNN model, which
    /// has no parametric form.
    pub fn parameter_vector(&self) -> Vec<S> {
        match &self.kind {
            ModelKind::Linear(m) => m.parameter_vector(),
            ModelKind::NaiveBayes(m) => m.parameter_vector(),
            ModelKind::Knn(_) => Vec::new(),
            ModelKind::Mlp(m) => m.parameter_vector(),
        }
    }

    /// Copy of the model with its parameters replaced by `params`
    /// (same shape). Used by finite-difference checks and blob loading.
    pub fn with_parameter_vector(&self, params: &[S]) -> Result<Self> {
        let expected = self.parameter_vector().len();
        if params.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} parameters, got {}",
                params.len()
            )));
        }
        let kind = match &self.kind {
            ModelKind::Linear(m) => ModelKind::Linear(m.with_parameters(params)),
            ModelKind::NaiveBayes(m) => ModelKind::NaiveBayes(m.with_parameters(params)),
            ModelKind::Knn(_) => {
                return Err(Error::Capability(
                    "knn stores samples, not parameters".into(),
                ))
            }
            ModelKind::Mlp(m) => ModelKind::Mlp(m.with_parameters(params)),
        };
        Ok(Self {
            kind,
            num_classes: self.num_classes,
            dim: self.dim,
            fingerprint: self.fingerprint.clone(),
        })
    }

    fn check_dim(&self, features: &[S]) -> Result<()> {
        if features.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "model expects dimension {}, got {}",
                self.dim,
                features.len()
            )));
        }
        Ok(())
    }

    /// Class probability vector: non-negative, sums to one.
    pub fn predict_proba(&self, features: &[S]) -> Result<Vec<S>> {
        self.check_dim(features)?;
        let proba = match &self.kind {
            ModelKind::Linear(m) => m.predict_proba(features),
            ModelKind::NaiveBayes(m) => m.predict_proba(features),
            ModelKind::Knn(m) => m.predict_proba(features, self.num_classes),
            ModelKind::Mlp(m) => m.predict_proba(features),
        };
        Ok(proba)
    }

    /// Argmax class; ties resolve to the lowest class index.
    pub fn predict(&self, features: &[S]) -> Result<usize> {
        let proba = self.predict_proba(features)?;
        Ok(argmax(&proba))
    }

    /// Bounded per-sample loss in [0, 1].
    pub fn loss(&self, sample: &Sample<S>, kind: LossKind) -> Result<f64> {
        match kind {
            LossKind::ZeroOne => {
                let predicted = self.predict(&sample.features)?;
                Ok(if predicted == sample.label { 0.0 } else { 1.0 })
            }
            LossKind::BoundedTrueClass => {
                let proba = self.predict_proba(&sample.features)?;
                if sample.label >= proba.len() {
                    return Err(Error::InvalidArgument(format!(
                        "label {} out of range for {} classes",
                        sample.label,
                        proba.len()
                    )));
                }
                let p_true = proba[sample.label].to_f64_lossy();
                // Clamp away sub-epsilon normalization dust.
                Ok((1.0 - p_true).clamp(0.0, 1.0))
            }
        }
    }

    /// Gradient of a bounded loss with respect to the flat parameter
    /// vector; only the bounded true-class loss is differentiable.
    pub fn gradient(&self, sample: &Sample<S>, kind: LossKind) -> Result<Vec<S>> {
        match kind {
            LossKind::ZeroOne => Err(Error::Capability(
                "the 0-1 loss is not differentiable".into(),
            )),
            LossKind::BoundedTrueClass => {
                self.gradient_of(sample, GradientObjective::BoundedTrueClass)
            }
        }
    }

    /// Value of a differentiable objective at `sample`. The cross-entropy
    /// value is unbounded above, unlike the [`LossKind`] losses.
    pub fn smooth_loss(&self, sample: &Sample<S>, objective: GradientObjective) -> Result<f64> {
        let proba = self.predict_proba(&sample.features)?;
        if sample.label >= proba.len() {
            return Err(Error::InvalidArgument(format!(
                "label {} out of range for {} classes",
                sample.label,
                proba.len()
            )));
        }
        let p_true = proba[sample.label].to_f64_lossy();
        Ok(match objective {
            GradientObjective::BoundedTrueClass => (1.0 - p_true).clamp(0.0, 1.0),
            GradientObjective::TrainingCrossEntropy => -p_true.max(f64::MIN_POSITIVE).ln(),
        })
    }

    /// Gradient of a differentiable objective with respect to the flat
    /// parameter vector.
    pub fn gradient_of(&self, sample: &Sample<S>, objective: GradientObjective) -> Result<Vec<S>> {
        if !self.capabilities().differentiable {
            return Err(Error::Capability(format!(
                "{} has no parameter gradients",
                self.algorithm().name()
            )));
        }
        self.check_dim(&sample.features)?;
        let grad = match &self.kind {
            ModelKind::Linear(m) => m.gradient(sample, objective),
            ModelKind::Mlp(m) => m.gradient(sample, objective),
            _ => unreachable!("differentiable flag covers linear and mlp only"),
        };
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training("gradient is non-finite".into()));
        }
        Ok(grad)
    }

    /// L2 norm of an objective gradient.
    pub fn gradient_norm(&self, sample: &Sample<S>, objective: GradientObjective) -> Result<f64> {
        let grad = self.gradient_of(sample, objective)?;
        Ok(grad
            .iter()
            .map(|g| {
                let g = g.to_f64_lossy();
                g * g
            })
            .sum::<f64>()
            .sqrt())
    }

    /// Versioned, self-describing text blob: algorithm tag, shapes,
    /// parameters, and the training fingerprint.
    pub fn to_blob(&self) -> String {
        let blob = ModelBlob {
            format_version: BLOB_FORMAT_VERSION,
            num_classes: self.num_classes,
            dim: self.dim,
            fingerprint: self.fingerprint.clone(),
            model: self.kind.clone(),
        };
        serde_json::to_string(&blob).expect("model serializes")
    }

    /// Parses a blob produced by [`DefenderModel::to_blob`].
    pub fn from_blob(blob: &str) -> Result<Self> {
        let blob: ModelBlob<S> =
            serde_json::from_str(blob).map_err(|e| Error::ModelBlob(e.to_string()))?;
        if blob.format_version != BLOB_FORMAT_VERSION {
            return Err(Error::ModelBlob(format!(
                "unsupported format version {} (expected {BLOB_FORMAT_VERSION})",
                blob.format_version
            )));
        }
        Ok(Self {
            kind: blob.model,
            num_classes: blob.num_classes,
            dim: blob.dim,
            fingerprint: blob.fingerprint,
        })
    }
}

const BLOB_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct ModelBlob<S: Scalar> {
    format_version: u32,
    num_classes: usize,
    dim: usize,
    fingerprint: TrainingFingerprint,
    model: ModelKind<S>,
}

/// L2 distance between the parameter vectors of two models of the same
/// algorithm and shape. Zero exactly when the parameters are identical.
pub fn param_distance<S: Scalar>(a: &DefenderModel<S>, b: &DefenderModel<S>) -> Result<f64> {
    if a.algorithm().name() != b.algorithm().name() {
        return Err(Error::ShapeMismatch(format!(
            "cannot compare {} with {}",
            a.algorithm().name(),
            b.algorithm().name()
        )));
    }
    if matches!(a.kind, ModelKind::Knn(_)) {
        return Err(Error::Capability(
            "knn has no parameter vector to compare".into(),
        ));
    }
    let pa = a.parameter_vector();
    let pb = b.parameter_vector();
    if pa.len() != pb.len() {
        return Err(Error::ShapeMismatch(format!(
            "parameter vectors have lengths {} and {}",
            pa.len(),
            pb.len()
        )));
    }
    Ok(pa
        .iter()
        .zip(&pb)
        .map(|(x, y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum::<f64>()
        .sqrt())
}

pub(crate) fn argmax<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0usize;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Appends the constant bias feature.
pub(crate) fn with_bias<S: Scalar>(features: &[S]) -> Vec<S> {
    let mut x = Vec::with_capacity(features.len() + 1);
    x.extend_from_slice(features);
    x.push(S::one());
    x
}

/// Numerically stable softmax. Degenerate score vectors (all negative
/// infinity, as log-posteriors far outside the data range can be) fall
/// back to the uniform distribution instead of poisoning the output.
pub(crate) fn softmax<S: Scalar>(scores: &[S]) -> Vec<S> {
    let max = scores
        .iter()
        .cloned()
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    if !max.is_finite() {
        let uniform = S::one() / S::from_f64_lossy(scores.len() as f64);
        return vec![uniform; scores.len()];
    }
    let exps: Vec<S> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: S = exps.iter().cloned().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests;
