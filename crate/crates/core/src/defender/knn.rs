//! k-nearest neighbors. Stores its training set verbatim, which is itself
//! a membership leak the harness reports independently of attack results.

use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, Sample};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub(crate) struct KnnModel<S: Scalar> {
    pub k: usize,
    /// Training samples in canonical order, so distance ties break the
    /// same way regardless of the caller's sample order.
    pub train: Vec<Sample<S>>,
}

pub(crate) fn fit<S: Scalar>(data: &LabeledDataset<S>, k: usize) -> KnnModel<S> {
    KnnModel {
        k: k.min(data.len()),
        train: data.samples().to_vec(),
    }
}

impl<S: Scalar> KnnModel<S> {
    /// Vote fractions among the k nearest stored samples.
    pub fn predict_proba(&self, features: &[S], num_classes: usize) -> Vec<S> {
        let mut dist_idx: Vec<(f64, usize)> = self
            .train
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let d2: f64 = s
                    .features
                    .iter()
                    .zip(features)
                    .map(|(&a, &b)| {
                        let d = a.to_f64_lossy() - b.to_f64_lossy();
                        d * d
                    })
                    .sum();
                (d2, i)
            })
            .collect();
        dist_idx.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));

        let mut votes = vec![0usize; num_classes];
        for &(_, i) in dist_idx.iter().take(self.k) {
            votes[self.train[i].label] += 1;
        }
        let k = S::from_f64_lossy(self.k as f64);
        votes
            .into_iter()
            .map(|v| S::from_f64_lossy(v as f64) / k)
            .collect()
    }
}
