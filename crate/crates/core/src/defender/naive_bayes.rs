//! Gaussian naive Bayes, fit in closed form.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::scalar::Scalar;

use super::softmax;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub(crate) struct NbModel<S: Scalar> {
    /// Per-class prior probabilities, length `num_classes`.
    pub priors: Vec<S>,
    /// Row-major `[num_classes][dim]` feature means.
    pub means: Vec<S>,
    /// Row-major `[num_classes][dim]` smoothed feature variances.
    pub variances: Vec<S>,
    pub num_classes: usize,
    pub dim: usize,
}

/// Per-class priors, means, and population variances, with the usual
/// variance smoothing of 1e-9 times the largest overall feature variance.
pub(crate) fn fit<S: Scalar>(data: &LabeledDataset<S>) -> NbModel<S> {
    let c = data.num_classes();
    let k = data.dim();
    let n = data.len();

    let mut counts = vec![0usize; c];
    let mut means = vec![S::zero(); c * k];
    for sample in data.iter() {
        counts[sample.label] += 1;
        for (j, &v) in sample.features.iter().enumerate() {
            means[sample.label * k + j] += v;
        }
    }
    for class in 0..c {
        if counts[class] > 0 {
            let inv = S::one() / S::from_f64_lossy(counts[class] as f64);
            for j in 0..k {
                means[class * k + j] *= inv;
            }
        }
    }

    let mut variances = vec![S::zero(); c * k];
    for sample in data.iter() {
        for (j, &v) in sample.features.iter().enumerate() {
            let d = v - means[sample.label * k + j];
            variances[sample.label * k + j] += d * d;
        }
    }

    // Smoothing floor from the pooled per-feature variance.
    let inv_n = S::one() / S::from_f64_lossy(n as f64);
    let mut grand_mean = vec![S::zero(); k];
    for sample in data.iter() {
        for (j, &v) in sample.features.iter().enumerate() {
            grand_mean[j] += v * inv_n;
        }
    }
    let mut max_var = S::zero();
    for (j, &mean_j) in grand_mean.iter().enumerate() {
        let mut var_j = S::zero();
        for sample in data.iter() {
            let d = sample.features[j] - mean_j;
            var_j += d * d * inv_n;
        }
        if var_j > max_var {
            max_var = var_j;
        }
    }
    let eps = S::from_f64_lossy(1e-9) * max_var + S::from_f64_lossy(1e-12);

    for class in 0..c {
        let inv = if counts[class] > 0 {
            S::one() / S::from_f64_lossy(counts[class] as f64)
        } else {
            S::zero()
        };
        for j in 0..k {
            variances[class * k + j] = variances[class * k + j] * inv + eps;
        }
    }

    let priors = counts
        .iter()
        .map(|&cnt| S::from_f64_lossy(cnt as f64 / n as f64))
        .collect();

    NbModel {
        priors,
        means,
        variances,
        num_classes: c,
        dim: k,
    }
}

impl<S: Scalar> NbModel<S> {
    pub fn predict_proba(&self, features: &[S]) -> Vec<S> {
        let half = S::from_f64_lossy(0.5);
        let two_pi = S::from_f64_lossy(std::f64::consts::TAU);
        let log_posteriors: Vec<S> = (0..self.num_classes)
            .map(|class| {
                let mut log_p = if self.priors[class] > S::zero() {
                    self.priors[class].ln()
                } else {
                    S::neg_infinity()
                };
                for (j, &x) in features.iter().enumerate() {
                    let mean = self.means[class * self.dim + j];
                    let var = self.variances[class * self.dim + j];
                    let d = x - mean;
                    log_p -= half * ((two_pi * var).ln() + d * d / var);
                }
                log_p
            })
            .collect();
        softmax(&log_posteriors)
    }

    /// Flat layout: priors, then means, then variances.
    pub fn parameter_vector(&self) -> Vec<S> {
        let mut params =
            Vec::with_capacity(self.priors.len() + self.means.len() + self.variances.len());
        params.extend_from_slice(&self.priors);
        params.extend_from_slice(&self.means);
        params.extend_from_slice(&self.variances);
        params
    }

    pub fn with_parameters(&self, params: &[S]) -> Self {
        let c = self.num_classes;
        let ck = c * self.dim;
        Self {
            priors: params[..c].to_vec(),
            means: params[c..c + ck].to_vec(),
            variances: params[c + ck..].to_vec(),
            num_classes: c,
            dim: self.dim,
        }
    }
}
