//! Linear models over an appended bias feature: full-batch softmax
//! regression, the multiclass perceptron, and hinge-loss SGD.
//!
//! All three share the weight layout `[class][feature..., bias]` and
//! produce probabilities through a softmax over their class scores; for
//! the perceptron and the SVC this is the smooth surrogate that makes the
//! models attackable by gradient methods.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Sample};
use crate::scalar::Scalar;
use crate::seeding::rng_from_seed;

use super::{argmax, softmax, with_bias, GradientObjective};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub(crate) struct LinearModel<S: Scalar> {
    /// Row-major `[num_classes][dim + 1]` weights, bias last.
    pub weights: Vec<S>,
    pub num_classes: usize,
    pub dim: usize,
}

impl<S: Scalar> LinearModel<S> {
    fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            weights: vec![S::zero(); num_classes * (dim + 1)],
            num_classes,
            dim,
        }
    }

    fn row(&self, class: usize) -> &[S] {
        let w = self.dim + 1;
        &self.weights[class * w..(class + 1) * w]
    }

    fn scores(&self, x: &[S]) -> Vec<S> {
        (0..self.num_classes)
            .map(|c| self.row(c).iter().zip(x).map(|(&w, &v)| w * v).sum::<S>())
            .collect()
    }

    pub fn predict_proba(&self, features: &[S]) -> Vec<S> {
        softmax(&self.scores(&with_bias(features)))
    }

    pub fn parameter_vector(&self) -> Vec<S> {
        self.weights.clone()
    }

    pub fn with_parameters(&self, params: &[S]) -> Self {
        Self {
            weights: params.to_vec(),
            num_classes: self.num_classes,
            dim: self.dim,
        }
    }

    /// Objective gradient with respect to the weights. Row j of the
    /// cross-entropy gradient is `(p_j - [j == t]) * x`; the bounded loss
    /// carries an extra `p_t` factor.
    pub fn gradient(&self, sample: &Sample<S>, objective: GradientObjective) -> Vec<S> {
        let x = with_bias(&sample.features);
        let p = softmax(&self.scores(&x));
        let scale = match objective {
            GradientObjective::BoundedTrueClass => p[sample.label],
            GradientObjective::TrainingCrossEntropy => S::one(),
        };
        let mut grad = Vec::with_capacity(self.weights.len());
        for (class, &p_class) in p.iter().enumerate() {
            let indicator = if class == sample.label {
                S::one()
            } else {
                S::zero()
            };
            let coef = scale * (p_class - indicator);
            grad.extend(x.iter().map(|&v| coef * v));
        }
        grad
    }
}

/// Full-batch softmax regression from zero init: per epoch,
/// `W -= lr * (mean cross-entropy gradient + l2 * W)`.
pub(crate) fn fit_logistic_gd<S: Scalar>(
    data: &LabeledDataset<S>,
    learning_rate: f64,
    epochs: usize,
    l2: f64,
) -> LinearModel<S> {
    let c = data.num_classes();
    let k = data.dim();
    let mut model = LinearModel::zeros(c, k);
    let lr = S::from_f64_lossy(learning_rate);
    let l2 = S::from_f64_lossy(l2);
    let inv_n = S::one() / S::from_f64_lossy(data.len() as f64);
    let width = k + 1;

    let inputs: Vec<Vec<S>> = data.iter().map(|s| with_bias(&s.features)).collect();
    for _ in 0..epochs {
        let mut grad = vec![S::zero(); model.weights.len()];
        for (x, sample) in inputs.iter().zip(data.iter()) {
            let p = softmax(&model.scores(x));
            for (class, &p_class) in p.iter().enumerate() {
                let indicator = if class == sample.label {
                    S::one()
                } else {
                    S::zero()
                };
                let coef = p_class - indicator;
                let row = &mut grad[class * width..(class + 1) * width];
                for (g, &v) in row.iter_mut().zip(x) {
                    *g += coef * v;
                }
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w = *w - lr * (*g * inv_n + l2 * *w);
        }
    }
    model
}

/// Classic multiclass perceptron: on a mistake, add the input to the true
/// class row and subtract it from the predicted row.
pub(crate) fn fit_perceptron_sgd<S: Scalar>(
    data: &LabeledDataset<S>,
    learning_rate: f64,
    epochs: usize,
    shuffle_each_epoch: bool,
    seed: u64,
) -> LinearModel<S> {
    let mut model = LinearModel::zeros(data.num_classes(), data.dim());
    let lr = S::from_f64_lossy(learning_rate);
    let width = data.dim() + 1;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = rng_from_seed(seed);

    for _ in 0..epochs {
        if shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        for &i in &order {
            let sample = data.get(i);
            let x = with_bias(&sample.features);
            let predicted = argmax(&model.scores(&x));
            if predicted != sample.label {
                for (j, &v) in x.iter().enumerate() {
                    model.weights[sample.label * width + j] += lr * v;
                    model.weights[predicted * width + j] -= lr * v;
                }
            }
        }
    }
    model
}

/// Multiclass hinge-loss SGD with multiplicative L2 shrinkage: update when
/// the true-class margin over the best competitor falls below 1.
pub(crate) fn fit_linear_svc_sgd<S: Scalar>(
    data: &LabeledDataset<S>,
    learning_rate: f64,
    epochs: usize,
    l2: f64,
    shuffle_each_epoch: bool,
    seed: u64,
) -> LinearModel<S> {
    let mut model = LinearModel::zeros(data.num_classes(), data.dim());
    let lr = S::from_f64_lossy(learning_rate);
    let shrink = S::one() - lr * S::from_f64_lossy(l2);
    let width = data.dim() + 1;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = rng_from_seed(seed);

    for _ in 0..epochs {
        if shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        for &i in &order {
            let sample = data.get(i);
            let x = with_bias(&sample.features);
            let scores = model.scores(&x);

            let mut competitor = usize::from(sample.label == 0);
            for class in 0..scores.len() {
                if class != sample.label && scores[class] > scores[competitor] {
                    competitor = class;
                }
            }

            if l2 > 0.0 {
                for w in model.weights.iter_mut() {
                    *w *= shrink;
                }
            }
            if scores[sample.label] - scores[competitor] < S::one() {
                for (j, &v) in x.iter().enumerate() {
                    model.weights[sample.label * width + j] += lr * v;
                    model.weights[competitor * width + j] -= lr * v;
                }
            }
        }
    }
    model
}
