//! One-hidden-layer tanh network trained by per-sample SGD on the
//! cross-entropy loss. Small by design: wide enough to overfit a few
//! hundred corrupted labels, cheap enough to retrain inside attack loops.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Sample};
use crate::scalar::Scalar;
use crate::seeding::rng_from_seed;

use super::{softmax, with_bias, GradientObjective};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub(crate) struct MlpModel<S: Scalar> {
    /// Row-major `[hidden][dim + 1]` input weights, bias last.
    pub w1: Vec<S>,
    /// Row-major `[num_classes][hidden + 1]` output weights, bias last.
    pub w2: Vec<S>,
    pub hidden: usize,
    pub num_classes: usize,
    pub dim: usize,
}

struct Forward<S: Scalar> {
    input: Vec<S>,
    activation: Vec<S>,
    proba: Vec<S>,
}

impl<S: Scalar> MlpModel<S> {
    fn init(hidden: usize, num_classes: usize, dim: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let bound1 = 1.0 / ((dim + 1) as f64).sqrt();
        let bound2 = 1.0 / ((hidden + 1) as f64).sqrt();
        // Draw in f64 so f32 and f64 models share one stream.
        let w1 = (0..hidden * (dim + 1))
            .map(|_| S::from_f64_lossy(rng.gen_range(-bound1..bound1)))
            .collect();
        let w2 = (0..num_classes * (hidden + 1))
            .map(|_| S::from_f64_lossy(rng.gen_range(-bound2..bound2)))
            .collect();
        Self {
            w1,
            w2,
            hidden,
            num_classes,
            dim,
        }
    }

    fn forward(&self, features: &[S]) -> Forward<S> {
        let input = with_bias(features);
        let in_w = self.dim + 1;
        let mut activation = Vec::with_capacity(self.hidden + 1);
        for h in 0..self.hidden {
            let z: S = self.w1[h * in_w..(h + 1) * in_w]
                .iter()
                .zip(&input)
                .map(|(&w, &v)| w * v)
                .sum();
            activation.push(z.tanh());
        }
        activation.push(S::one());

        let hid_w = self.hidden + 1;
        let scores: Vec<S> = (0..self.num_classes)
            .map(|c| {
                self.w2[c * hid_w..(c + 1) * hid_w]
                    .iter()
                    .zip(&activation)
                    .map(|(&w, &a)| w * a)
                    .sum()
            })
            .collect();
        Forward {
            input,
            activation,
            proba: softmax(&scores),
        }
    }

    pub fn predict_proba(&self, features: &[S]) -> Vec<S> {
        self.forward(features).proba
    }

    /// Backpropagates output deltas into flat `[w1, w2]` gradients.
    fn backprop(&self, fwd: &Forward<S>, delta_out: &[S]) -> Vec<S> {
        let in_w = self.dim + 1;
        let hid_w = self.hidden + 1;

        let mut grad = vec![S::zero(); self.w1.len() + self.w2.len()];
        let (g1, g2) = grad.split_at_mut(self.w1.len());

        for (c, &d) in delta_out.iter().enumerate() {
            for (j, &a) in fwd.activation.iter().enumerate() {
                g2[c * hid_w + j] = d * a;
            }
        }
        for h in 0..self.hidden {
            let mut upstream = S::zero();
            for (c, &d) in delta_out.iter().enumerate() {
                upstream += d * self.w2[c * hid_w + h];
            }
            let a = fwd.activation[h];
            let dtanh = S::one() - a * a;
            let dh = upstream * dtanh;
            for (j, &v) in fwd.input.iter().enumerate() {
                g1[h * in_w + j] = dh * v;
            }
        }
        grad
    }

    /// Objective gradient. Output delta is `p - e_t` for cross-entropy
    /// and `p_t (p - e_t)` for the bounded loss.
    pub fn gradient(&self, sample: &Sample<S>, objective: GradientObjective) -> Vec<S> {
        let fwd = self.forward(&sample.features);
        let scale = match objective {
            GradientObjective::BoundedTrueClass => fwd.proba[sample.label],
            GradientObjective::TrainingCrossEntropy => S::one(),
        };
        let delta: Vec<S> = fwd
            .proba
            .iter()
            .enumerate()
            .map(|(c, &p)| {
                let indicator = if c == sample.label {
                    S::one()
                } else {
                    S::zero()
                };
                scale * (p - indicator)
            })
            .collect();
        self.backprop(&fwd, &delta)
    }

    pub fn parameter_vector(&self) -> Vec<S> {
        let mut params = Vec::with_capacity(self.w1.len() + self.w2.len());
        params.extend_from_slice(&self.w1);
        params.extend_from_slice(&self.w2);
        params
    }

    pub fn with_parameters(&self, params: &[S]) -> Self {
        Self {
            w1: params[..self.w1.len()].to_vec(),
            w2: params[self.w1.len()..].to_vec(),
            ..self.clone()
        }
    }
}

pub(crate) fn fit<S: Scalar>(
    data: &LabeledDataset<S>,
    hidden: usize,
    learning_rate: f64,
    epochs: usize,
    l2: f64,
    shuffle_each_epoch: bool,
    seed: u64,
) -> MlpModel<S> {
    let mut model = MlpModel::init(hidden, data.num_classes(), data.dim(), seed);
    let lr = S::from_f64_lossy(learning_rate);
    let l2 = S::from_f64_lossy(l2);

    let mut order: Vec<usize> = (0..data.len()).collect();
    // The init above consumed from its own stream; training draws continue
    // from a child stream of the same seed.
    let mut rng = rng_from_seed(seed.wrapping_add(1));

    for _ in 0..epochs {
        if shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        for &i in &order {
            let sample = data.get(i);
            let fwd = model.forward(&sample.features);
            // Cross-entropy delta.
            let delta: Vec<S> = fwd
                .proba
                .iter()
                .enumerate()
                .map(|(c, &p)| {
                    let indicator = if c == sample.label {
                        S::one()
                    } else {
                        S::zero()
                    };
                    p - indicator
                })
                .collect();
            let grad = model.backprop(&fwd, &delta);
            let (gw1, gw2) = grad.split_at(model.w1.len());
            for (w, &g) in model.w1.iter_mut().zip(gw1) {
                *w = *w - lr * (g + l2 * *w);
            }
            for (w, &g) in model.w2.iter_mut().zip(gw2) {
                *w = *w - lr * (g + l2 * *w);
            }
        }
    }
    model
}
