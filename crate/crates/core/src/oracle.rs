//! Exact brute-force ground truth for the attack strategies.
//!
//! Everything here is an exact enumeration over all Defender x Reserved
//! pairs or a closed-form expectation over a finite joint distribution.
//! Nothing is sampled, so these values serve as the reference that the
//! Monte Carlo attack accuracies are checked against (within binomial
//! bands).
//!
//! Conventions: a discriminant value is "larger on Reserved-looking
//! samples"; `p_r` is the probability that a uniformly drawn cross pair
//! has the larger value on the Reserved side, `p_d` the opposite, and the
//! remainder is the tie probability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Exact pair statistics of a discriminant over the two pools.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    /// Fraction of pairs with f(reserved) > f(defender).
    pub p_r: f64,
    /// Fraction of pairs with f(reserved) < f(defender).
    pub p_d: f64,
    /// Fraction of tied pairs.
    pub tie_prob: f64,
}

/// Enumerates all `|defender| * |reserved|` pairs exactly.
pub fn exact_pair_stats<S: Scalar>(f_defender: &[S], f_reserved: &[S]) -> Result<PairStats> {
    if f_defender.is_empty() || f_reserved.is_empty() {
        return Err(Error::InvalidArgument(
            "pair statistics need non-empty score lists".into(),
        ));
    }
    let mut favors_reserved = 0u64;
    let mut favors_defender = 0u64;
    let mut ties = 0u64;
    for &d in f_defender {
        for &r in f_reserved {
            if r > d {
                favors_reserved += 1;
            } else if r < d {
                favors_defender += 1;
            } else {
                ties += 1;
            }
        }
    }
    let total = (f_defender.len() * f_reserved.len()) as f64;
    Ok(PairStats {
        p_r: favors_reserved as f64 / total,
        p_d: favors_defender as f64 / total,
        tie_prob: ties as f64 / total,
    })
}

/// Expected accuracy of the pairwise rule "claim the smaller discriminant
/// value as the member, flip a coin on ties": `1/2 + (p_r - p_d)/2`.
pub fn pairwise_rule_accuracy(stats: &PairStats) -> f64 {
    0.5 + 0.5 * (stats.p_r - stats.p_d)
}

/// Exact mean losses `(e_d, e_r)`; every loss must lie in [0, 1].
pub fn exact_expected_losses<S: Scalar>(
    loss_defender: &[S],
    loss_reserved: &[S],
) -> Result<(f64, f64)> {
    if loss_defender.is_empty() || loss_reserved.is_empty() {
        return Err(Error::InvalidArgument(
            "expected losses need non-empty lists".into(),
        ));
    }
    let mean = |losses: &[S]| -> Result<f64> {
        let mut total = 0.0f64;
        for &l in losses {
            let l = l.to_f64_lossy();
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::LossBound { value: l });
            }
            total += l;
        }
        Ok(total / losses.len() as f64)
    };
    Ok((mean(loss_defender)?, mean(loss_reserved)?))
}

/// Expected accuracy of the randomized bounded-loss rule:
/// `1/2 + (e_r - e_d)/2`.
pub fn loss_gap_rule_accuracy(e_d: f64, e_r: f64) -> f64 {
    0.5 + 0.5 * (e_r - e_d)
}

/// A finite joint distribution of bounded losses `(l(d), l(r))`.
///
/// The support is arbitrary, not just the 3x3 used in worked examples, so
/// property tests can randomize over it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointPmf {
    d_support: Vec<f64>,
    r_support: Vec<f64>,
    /// Row-major `[d_support][r_support]` probabilities.
    mass: Vec<f64>,
}

impl JointPmf {
    /// Validates supports in [0, 1], non-negative mass, total mass 1.
    pub fn new(d_support: Vec<f64>, r_support: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if d_support.is_empty() || r_support.is_empty() {
            return Err(Error::InvalidPmf("empty support".into()));
        }
        if mass.len() != d_support.len() * r_support.len() {
            return Err(Error::InvalidPmf(format!(
                "mass has {} entries for a {}x{} support",
                mass.len(),
                d_support.len(),
                r_support.len()
            )));
        }
        for &v in d_support.iter().chain(&r_support) {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidPmf(format!(
                    "support value {v} outside [0, 1]"
                )));
            }
        }
        let mut total = 0.0;
        for &p in &mass {
            if p < 0.0 || p.is_nan() {
                return Err(Error::InvalidPmf(format!("negative mass {p}")));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPmf(format!("total mass {total} != 1")));
        }
        Ok(Self {
            d_support,
            r_support,
            mass,
        })
    }

    /// Product distribution from two marginals.
    pub fn product(
        d_support: Vec<f64>,
        d_mass: Vec<f64>,
        r_support: Vec<f64>,
        r_mass: Vec<f64>,
    ) -> Result<Self> {
        if d_mass.len() != d_support.len() || r_mass.len() != r_support.len() {
            return Err(Error::InvalidPmf("marginal lengths disagree".into()));
        }
        let mut mass = Vec::with_capacity(d_mass.len() * r_mass.len());
        for &pd in &d_mass {
            for &pr in &r_mass {
                mass.push(pd * pr);
            }
        }
        Self::new(d_support, r_support, mass)
    }

    /// Marginal mass over the Defender loss values.
    pub fn row_sums(&self) -> Vec<f64> {
        let cols = self.r_support.len();
        self.mass.chunks(cols).map(|row| row.iter().sum()).collect()
    }

    /// Marginal mass over the Reserved loss values.
    pub fn col_sums(&self) -> Vec<f64> {
        let cols = self.r_support.len();
        (0..cols)
            .map(|j| self.mass.iter().skip(j).step_by(cols).sum())
            .collect()
    }
}

/// `(e_r - e_d, Pr[l(r) > l(d)] - Pr[l(r) < l(d)])` computed exactly from
/// the joint table: the expectation gap from the marginals and the
/// pairwise margin from the matrix.
pub fn joint_pmf_stats(pmf: &JointPmf) -> (f64, f64) {
    let e_d: f64 = pmf
        .d_support
        .iter()
        .zip(pmf.row_sums())
        .map(|(&v, p)| v * p)
        .sum();
    let e_r: f64 = pmf
        .r_support
        .iter()
        .zip(pmf.col_sums())
        .map(|(&v, p)| v * p)
        .sum();

    let cols = pmf.r_support.len();
    let mut margin = 0.0;
    for (i, &d) in pmf.d_support.iter().enumerate() {
        for (j, &r) in pmf.r_support.iter().enumerate() {
            let p = pmf.mass[i * cols + j];
            if r > d {
                margin += p;
            } else if r < d {
                margin -= p;
            }
        }
    }
    (e_r - e_d, margin)
}

/// For 0-1 losses the pairwise margin and the expectation gap coincide;
/// this computes both through their independent routes and returns
/// `(p_r - p_d, e_r - e_d)`.
pub fn zero_one_equality_check<S: Scalar>(
    loss01_defender: &[S],
    loss01_reserved: &[S],
) -> Result<(f64, f64)> {
    for &l in loss01_defender.iter().chain(loss01_reserved) {
        if !(l == S::zero() || l == S::one()) {
            return Err(Error::InvalidArgument(format!(
                "zero-one losses must be exactly 0 or 1, got {l}"
            )));
        }
    }
    let stats = exact_pair_stats(loss01_defender, loss01_reserved)?;
    let (e_d, e_r) = exact_expected_losses(loss01_defender, loss01_reserved)?;
    Ok((stats.p_r - stats.p_d, e_r - e_d))
}
