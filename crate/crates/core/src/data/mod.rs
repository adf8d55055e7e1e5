//! Dataset representation, synthetic generation, splitting, label
//! corruption, and LTU round construction.

mod csv_io;

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, rng_from_seed, Stream};

pub use csv_io::{load_csv, save_csv};

/// One feature vector with its class label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Sample<S: Scalar> {
    pub features: Vec<S>,
    pub label: usize,
}

impl<S: Scalar> Sample<S> {
    pub fn new(features: Vec<S>, label: usize) -> Self {
        Self { features, label }
    }

    /// Hashable identity key; distinct finite feature vectors map to
    /// distinct keys (negative zero is normalized).
    pub(crate) fn identity_key(&self) -> (usize, Vec<u64>) {
        let bits = self
            .features
            .iter()
            .map(|v| {
                let v = v.to_f64_lossy();
                if v == 0.0 { 0.0f64 } else { v }.to_bits()
            })
            .collect();
        (self.label, bits)
    }
}

/// Canonical total order on samples: lexicographic on features, then label.
///
/// Order-invariant trainers sort their input with this comparison before
/// fitting, which makes their floating-point summation order, and hence
/// their parameters, independent of how the caller ordered the data.
pub(crate) fn canonical_cmp<S: Scalar>(a: &Sample<S>, b: &Sample<S>) -> Ordering {
    for (x, y) in a.features.iter().zip(&b.features) {
        match x.partial_cmp(y).expect("dataset features are finite") {
            Ordering::Equal => continue,
            ord => return ord,
        }
    }
    a.label.cmp(&b.label)
}

/// An ordered, validated collection of samples.
///
/// Sample order is significant: order-sensitive trainers consume it as
/// given, and the evaluation deliberately probes that sensitivity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct LabeledDataset<S: Scalar> {
    samples: Vec<Sample<S>>,
    num_classes: usize,
    dim: usize,
}

impl<S: Scalar> LabeledDataset<S> {
    /// Validates and wraps samples: non-empty, consistent dimension,
    /// finite features, every label below `num_classes`.
    pub fn new(samples: Vec<Sample<S>>, num_classes: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("dataset must be non-empty".into()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidArgument(
                "num_classes must be positive".into(),
            ));
        }
        let dim = samples[0].features.len();
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "feature dimension must be positive".into(),
            ));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "sample {i} has dimension {} but the dataset has dimension {dim}",
                    s.features.len()
                )));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "sample {i} has a non-finite feature"
                )));
            }
            if s.label >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "sample {i} has label {} but num_classes is {num_classes}",
                    s.label
                )));
            }
        }
        Ok(Self {
            samples,
            num_classes,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false: construction rejects empty datasets.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn samples(&self) -> &[Sample<S>] {
        &self.samples
    }

    pub fn get(&self, index: usize) -> &Sample<S> {
        &self.samples[index]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample<S>> {
        self.samples.iter()
    }

    /// Copy with the sample at `index` removed; the remainder keeps its
    /// order. May be empty, so it returns raw samples.
    pub(crate) fn without_index(&self, index: usize) -> Vec<Sample<S>> {
        let mut rest = Vec::with_capacity(self.samples.len() - 1);
        rest.extend_from_slice(&self.samples[..index]);
        rest.extend_from_slice(&self.samples[index + 1..]);
        rest
    }

    /// Copy sorted with [`canonical_cmp`].
    pub(crate) fn canonical_sorted(&self) -> Self {
        let mut samples = self.samples.clone();
        samples.sort_by(canonical_cmp);
        Self {
            samples,
            num_classes: self.num_classes,
            dim: self.dim,
        }
    }

    pub(crate) fn identity_keys(&self) -> HashSet<(usize, Vec<u64>)> {
        self.samples.iter().map(Sample::identity_key).collect()
    }
}

/// Membership label of a sample within an evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MembershipLabel {
    Defender,
    Reserved,
}

impl MembershipLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            MembershipLabel::Defender => "defender",
            MembershipLabel::Reserved => "reserved",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "defender" => Some(MembershipLabel::Defender),
            "reserved" => Some(MembershipLabel::Reserved),
            _ => None,
        }
    }
}

/// Position of a sample in the unlabeled pair of a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnlabeledSlot {
    First,
    Second,
}

impl UnlabeledSlot {
    pub fn other(self) -> Self {
        match self {
            UnlabeledSlot::First => UnlabeledSlot::Second,
            UnlabeledSlot::Second => UnlabeledSlot::First,
        }
    }
}

/// One evaluation round: the attack pools with membership labels, and the
/// unlabeled pair in randomized order.
///
/// The ground truth (which slot holds the Defender member) is private to
/// the crate; attackers only see the pools and the pair, the evaluator
/// scores claims against the truth.
#[derive(Clone, Debug)]
pub struct LtuRound<S: Scalar> {
    attack_defender: Vec<Sample<S>>,
    attack_reserved: Vec<Sample<S>>,
    unlabeled: (Sample<S>, Sample<S>),
    truth: UnlabeledSlot,
    num_classes: usize,
    dim: usize,
    round_seed: u64,
}

impl<S: Scalar> LtuRound<S> {
    /// Defender pool minus the held-out member.
    pub fn attack_defender(&self) -> &[Sample<S>] {
        &self.attack_defender
    }

    /// Reserved pool minus the held-out non-member.
    pub fn attack_reserved(&self) -> &[Sample<S>] {
        &self.attack_reserved
    }

    /// The two membership-unlabeled samples, in randomized order.
    pub fn unlabeled(&self) -> (&Sample<S>, &Sample<S>) {
        (&self.unlabeled.0, &self.unlabeled.1)
    }

    pub fn unlabeled_at(&self, slot: UnlabeledSlot) -> &Sample<S> {
        match slot {
            UnlabeledSlot::First => &self.unlabeled.0,
            UnlabeledSlot::Second => &self.unlabeled.1,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn round_seed(&self) -> u64 {
        self.round_seed
    }

    /// Which slot holds the Defender member. Evaluator-side only.
    pub(crate) fn truth(&self) -> UnlabeledSlot {
        self.truth
    }

    /// Defender candidate dataset for a retrain attack: the Defender pool
    /// with the sample from `slot` appended.
    pub fn candidate_defender_set(&self, slot: UnlabeledSlot) -> Result<LabeledDataset<S>> {
        let mut samples = self.attack_defender.clone();
        samples.push(self.unlabeled_at(slot).clone());
        LabeledDataset::new(samples, self.num_classes)
    }
}

/// Synthetic Gaussian blobs: `per_class` points per class around
/// deterministic centers whose pairwise distance is at least
/// `class_separation`.
///
/// Centers sit on scaled coordinate axes, so no randomness is spent on
/// them; samples add `noise_scale`-scaled standard normal noise. The noise
/// stream is drawn in f64 regardless of `S`, so f32 and f64 datasets agree.
pub fn generate_blobs<S: Scalar>(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    class_separation: f64,
    noise_scale: f64,
    seed: u64,
) -> Result<LabeledDataset<S>> {
    if num_classes < 2 {
        return Err(Error::InvalidArgument(
            "blobs need at least 2 classes".into(),
        ));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "blobs need a positive dimension".into(),
        ));
    }
    if per_class == 0 {
        return Err(Error::InvalidArgument(
            "blobs need at least 1 sample per class".into(),
        ));
    }
    if noise_scale <= 0.0 || !noise_scale.is_finite() {
        return Err(Error::InvalidArgument(
            "noise_scale must be positive and finite".into(),
        ));
    }
    if !class_separation.is_finite() || class_separation < 0.0 {
        return Err(Error::InvalidArgument(
            "class_separation must be non-negative".into(),
        ));
    }

    let mut rng = rng_from_seed(derive_seed(seed, Stream::Blobs, 0));
    let normal = Normal::new(0.0f64, 1.0).expect("unit normal");

    let mut samples = Vec::with_capacity(num_classes * per_class);
    for class in 0..num_classes {
        let mut center = vec![0.0f64; dim];
        center[class % dim] = class_separation * (1.0 + (class / dim) as f64);
        for _ in 0..per_class {
            let features = center
                .iter()
                .map(|&c| S::from_f64_lossy(c + noise_scale * normal.sample(&mut rng)))
                .collect();
            samples.push(Sample::new(features, class));
        }
    }
    LabeledDataset::new(samples, num_classes)
}

/// Splits a source dataset into a Defender part of size
/// `round(defender_fraction * n)` and a Reserved remainder, by uniform
/// shuffle under `seed`. The parts are disjoint by index and keep the
/// shuffled order.
pub fn split_source<S: Scalar>(
    source: &LabeledDataset<S>,
    defender_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset<S>, LabeledDataset<S>)> {
    if !(defender_fraction > 0.0 && defender_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "defender_fraction must be in (0, 1), got {defender_fraction}"
        )));
    }
    let n = source.len();
    let n_defender = (defender_fraction * n as f64).round() as usize;
    if n_defender == 0 || n_defender == n {
        return Err(Error::InvalidArgument(format!(
            "split of {n} samples at fraction {defender_fraction} leaves an empty part"
        )));
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(derive_seed(seed, Stream::Split, 0));
    indices.shuffle(&mut rng);

    let take =
        |idx: &[usize]| -> Vec<Sample<S>> { idx.iter().map(|&i| source.get(i).clone()).collect() };
    let defender = LabeledDataset::new(take(&indices[..n_defender]), source.num_classes())?;
    let reserved = LabeledDataset::new(take(&indices[n_defender..]), source.num_classes())?;
    Ok((defender, reserved))
}

/// Reassigns exactly `round(fraction * n)` labels, each to a uniformly
/// chosen *different* class. The affected indices are chosen uniformly
/// without replacement.
pub fn flip_labels<S: Scalar>(
    ds: &LabeledDataset<S>,
    fraction: f64,
    seed: u64,
) -> Result<LabeledDataset<S>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "flip fraction must be in [0, 1], got {fraction}"
        )));
    }
    let n = ds.len();
    let count = (fraction * n as f64).round() as usize;
    if count == 0 {
        return Ok(ds.clone());
    }
    let c = ds.num_classes();
    if c < 2 {
        return Err(Error::InvalidArgument(
            "cannot flip labels with fewer than 2 classes".into(),
        ));
    }

    let mut rng = rng_from_seed(derive_seed(seed, Stream::LabelFlip, 0));
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let mut chosen: Vec<usize> = indices[..count].to_vec();
    chosen.sort_unstable();

    let mut samples = ds.samples().to_vec();
    for &i in &chosen {
        let shift = rng.gen_range(1..c);
        samples[i].label = (samples[i].label + shift) % c;
    }
    LabeledDataset::new(samples, c)
}

/// Builds one LTU round: draws one Defender sample and one Reserved sample
/// uniformly, removes them from their pools, and presents them in uniform
/// random order. All randomness comes from `round_seed`.
pub fn make_ltu_round<S: Scalar>(
    defender: &LabeledDataset<S>,
    reserved: &LabeledDataset<S>,
    round_seed: u64,
) -> Result<LtuRound<S>> {
    check_round_compatible(defender, reserved)?;
    let mut rng = rng_from_seed(round_seed);
    let d_idx = rng.gen_range(0..defender.len());
    let r_idx = rng.gen_range(0..reserved.len());
    let defender_first: bool = rng.gen();
    build_round(defender, reserved, d_idx, r_idx, defender_first, round_seed)
}

/// Deterministic round with explicit holdout indices and order, for
/// exhaustive tests.
#[cfg(test)]
pub(crate) fn make_ltu_round_at<S: Scalar>(
    defender: &LabeledDataset<S>,
    reserved: &LabeledDataset<S>,
    d_idx: usize,
    r_idx: usize,
    defender_first: bool,
    round_seed: u64,
) -> Result<LtuRound<S>> {
    check_round_compatible(defender, reserved)?;
    build_round(defender, reserved, d_idx, r_idx, defender_first, round_seed)
}

/// Round with a fixed Defender holdout `d`, drawing only the Reserved
/// sample and the pair order from `round_seed`.
pub(crate) fn make_ltu_round_fixed_defender<S: Scalar>(
    d: &Sample<S>,
    defender_rest: &LabeledDataset<S>,
    reserved: &LabeledDataset<S>,
    round_seed: u64,
) -> Result<LtuRound<S>> {
    if reserved.identity_keys().contains(&d.identity_key()) {
        return Err(Error::Protocol(
            "the pinned Defender sample occurs in the Reserved dataset".into(),
        ));
    }
    check_round_compatible(defender_rest, reserved)?;
    let mut rng = rng_from_seed(round_seed);
    let r_idx = rng.gen_range(0..reserved.len());
    let defender_first: bool = rng.gen();

    let r = reserved.get(r_idx).clone();
    let (unlabeled, truth) = order_pair(d.clone(), r, defender_first);
    Ok(LtuRound {
        attack_defender: defender_rest.samples().to_vec(),
        attack_reserved: reserved.without_index(r_idx),
        unlabeled,
        truth,
        num_classes: reserved.num_classes(),
        dim: reserved.dim(),
        round_seed,
    })
}

fn check_round_compatible<S: Scalar>(
    defender: &LabeledDataset<S>,
    reserved: &LabeledDataset<S>,
) -> Result<()> {
    if defender.dim() != reserved.dim() || defender.num_classes() != reserved.num_classes() {
        return Err(Error::Protocol(format!(
            "defender ({} classes, dim {}) and reserved ({} classes, dim {}) disagree",
            defender.num_classes(),
            defender.dim(),
            reserved.num_classes(),
            reserved.dim()
        )));
    }
    let defender_keys = defender.identity_keys();
    if reserved
        .iter()
        .any(|s| defender_keys.contains(&s.identity_key()))
    {
        return Err(Error::Protocol(
            "defender and reserved datasets overlap".into(),
        ));
    }
    Ok(())
}

fn order_pair<S: Scalar>(
    d: Sample<S>,
    r: Sample<S>,
    defender_first: bool,
) -> ((Sample<S>, Sample<S>), UnlabeledSlot) {
    if defender_first {
        ((d, r), UnlabeledSlot::First)
    } else {
        ((r, d), UnlabeledSlot::Second)
    }
}

fn build_round<S: Scalar>(
    defender: &LabeledDataset<S>,
    reserved: &LabeledDataset<S>,
    d_idx: usize,
    r_idx: usize,
    defender_first: bool,
    round_seed: u64,
) -> Result<LtuRound<S>> {
    let d = defender.get(d_idx).clone();
    let r = reserved.get(r_idx).clone();
    let (unlabeled, truth) = order_pair(d, r, defender_first);
    Ok(LtuRound {
        attack_defender: defender.without_index(d_idx),
        attack_reserved: reserved.without_index(r_idx),
        unlabeled,
        truth,
        num_classes: defender.num_classes(),
        dim: defender.dim(),
        round_seed,
    })
}
