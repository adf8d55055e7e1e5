//! Drives LTU rounds and turns attack outcomes into scores.
//!
//! The privacy score is `min(2 (1 - A_ltu), 1)` with a normal-approximation
//! error bar `2 sqrt(A_ltu (1 - A_ltu) / N)`; at accuracies of exactly 0 or
//! 1 that estimator collapses to zero and reports understate uncertainty,
//! which the report flags rather than papering over. Utility is the
//! chance-corrected accuracy `max((c A_D - 1) / (c - 1), 0)` with error bar
//! `c sqrt(A_D (1 - A_D) / n)`.

use serde::{Deserialize, Serialize};

use crate::attacker::{AttackerSpec, MembershipPrediction};
use crate::data::{make_ltu_round, make_ltu_round_fixed_defender, LabeledDataset, Sample};
use crate::defender::{train, DefenderModel, TrainerConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, rng_from_seed, Stream};

/// A score in [0, 1] with its standard-error bar and the count behind it.
///
/// The clipped value and the raw error bar are reported side by side; the
/// interval itself is never clipped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreWithError {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Privacy score from the LTU attack accuracy over `n` rounds.
pub fn privacy_score(a_ltu: f64, n: usize) -> Result<ScoreWithError> {
    if !(0.0..=1.0).contains(&a_ltu) {
        return Err(Error::InvalidArgument(format!(
            "attack accuracy must be in [0, 1], got {a_ltu}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("privacy score needs n >= 1".into()));
    }
    Ok(ScoreWithError {
        value: (2.0 * (1.0 - a_ltu)).min(1.0),
        stderr: 2.0 * (a_ltu * (1.0 - a_ltu) / n as f64).sqrt(),
        n,
    })
}

/// Utility score from a classification accuracy over `n` held-out samples
/// of a `num_classes`-way problem.
pub fn utility_from_accuracy(a_d: f64, num_classes: usize, n: usize) -> Result<ScoreWithError> {
    if num_classes < 2 {
        return Err(Error::InvalidArgument(
            "utility needs at least 2 classes".into(),
        ));
    }
    if !(0.0..=1.0).contains(&a_d) {
        return Err(Error::InvalidArgument(format!(
            "accuracy must be in [0, 1], got {a_d}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("utility score needs n >= 1".into()));
    }
    let c = num_classes as f64;
    Ok(ScoreWithError {
        value: ((c * a_d - 1.0) / (c - 1.0)).max(0.0),
        stderr: c * (a_d * (1.0 - a_d) / n as f64).sqrt(),
        n,
    })
}

/// Utility of a model on a held-out dataset, plus the raw accuracy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityResult {
    pub score: ScoreWithError,
    pub accuracy: f64,
}

/// Argmax classification accuracy on `reserved`, fed through the
/// chance-corrected utility formula.
pub fn utility_score<S: Scalar>(
    model: &DefenderModel<S>,
    reserved: &LabeledDataset<S>,
) -> Result<UtilityResult> {
    let mut correct = 0usize;
    for sample in reserved.iter() {
        if model.predict(&sample.features)? == sample.label {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / reserved.len() as f64;
    Ok(UtilityResult {
        score: utility_from_accuracy(accuracy, model.num_classes(), reserved.len())?,
        accuracy,
    })
}

/// Outcome of one scored round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub prediction: MembershipPrediction,
    pub correct: bool,
}

/// Result of an LTU evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtuResult {
    pub attacker: String,
    pub n: usize,
    pub a_ltu: f64,
    pub privacy: ScoreWithError,
    pub per_round: Vec<RoundRecord>,
}

impl LtuResult {
    /// Rounds where the attacker recorded a coin-flip decision; for the
    /// retrain attacker these are exactly the empirical injectivity
    /// failures (both candidates at equal parameter distance).
    pub fn tie_rounds(&self) -> usize {
        self.per_round
            .iter()
            .filter(|r| r.prediction.confidence == 0.5)
            .count()
    }
}

/// Trains the Defender once, then runs `n` independent LTU rounds against
/// it and scores the attacker.
///
/// Round `i` derives its construction and attacker streams from
/// `(master_seed, i)`, so rounds are reproducible in isolation and the
/// result does not depend on execution order.
pub fn run_ltu<S: Scalar>(
    defender: &LabeledDataset<S>,
    reserved: &LabeledDataset<S>,
    trainer: &TrainerConfig,
    attacker: &AttackerSpec<S>,
    n: usize,
    master_seed: u64,
) -> Result<LtuResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("run_ltu needs n >= 1".into()));
    }
    let model = train(
        trainer,
        defender,
        derive_seed(master_seed, Stream::Train, 0),
    )?;
    run_ltu_against(defender, reserved, &model, attacker, n, master_seed)
}

/// As [`run_ltu`], but attacks an already-trained model.
pub fn run_ltu_against<S: Scalar>(
    defender: &LabeledDataset<S>,
    reserved: &LabeledDataset<S>,
    model: &DefenderModel<S>,
    attacker: &AttackerSpec<S>,
    n: usize,
    master_seed: u64,
) -> Result<LtuResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("run_ltu needs n >= 1".into()));
    }
    let mut per_round = Vec::with_capacity(n);
    let mut correct = 0usize;
    for i in 0..n {
        let round_seed = derive_seed(master_seed, Stream::Round, i as u64);
        let round = make_ltu_round(defender, reserved, round_seed).map_err(|e| e.in_round(i))?;
        let mut rng = rng_from_seed(derive_seed(master_seed, Stream::Attack, i as u64));
        let prediction = attacker
            .attack(&round, model, &mut rng)
            .map_err(|e| e.in_round(i))?;
        let is_correct = prediction.claimed_defender == round.truth();
        if is_correct {
            correct += 1;
        }
        per_round.push(RoundRecord {
            round: i,
            prediction,
            correct: is_correct,
        });
    }
    let a_ltu = correct as f64 / n as f64;
    Ok(LtuResult {
        attacker: attacker.name(),
        n,
        a_ltu,
        privacy: privacy_score(a_ltu, n)?,
        per_round,
    })
}

/// Individual membership-inference privacy score of one Defender sample:
/// the sample is held out in every round while the Reserved sample is
/// redrawn, and the usual privacy formula is applied to the resulting
/// attack accuracy.
///
/// `defender_rest` is the Defender pool without `d`.
pub fn individual_privacy<S: Scalar>(
    d: &Sample<S>,
    defender_rest: &LabeledDataset<S>,
    reserved: &LabeledDataset<S>,
    model: &DefenderModel<S>,
    attacker: &AttackerSpec<S>,
    n: usize,
    seed: u64,
) -> Result<ScoreWithError> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "individual privacy needs n >= 1".into(),
        ));
    }
    let mut correct = 0usize;
    for i in 0..n {
        let round_seed = derive_seed(seed, Stream::Round, i as u64);
        let round = make_ltu_round_fixed_defender(d, defender_rest, reserved, round_seed)
            .map_err(|e| e.in_round(i))?;
        let mut rng = rng_from_seed(derive_seed(seed, Stream::Attack, i as u64));
        let prediction = attacker
            .attack(&round, model, &mut rng)
            .map_err(|e| e.in_round(i))?;
        if prediction.claimed_defender == round.truth() {
            correct += 1;
        }
    }
    privacy_score(correct as f64 / n as f64, n)
}

/// Individual privacy score with its sample index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndividualScore {
    pub sample_index: usize,
    pub score: ScoreWithError,
}

/// Histogram bin over [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
}

/// Equal-width histogram of scores over [0, 1]; a value of exactly 1 falls
/// in the last bin.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    for &v in values {
        let idx = ((v * bins as f64) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            bin_low: i as f64 / bins as f64,
            bin_high: (i + 1) as f64 / bins as f64,
            count,
        })
        .collect()
}

/// Per-sample privacy scores for every Defender sample, with a histogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndividualPrivacyReport {
    pub scores: Vec<IndividualScore>,
    pub histogram: Vec<HistogramBin>,
    pub rounds_per_sample: usize,
}

/// Scores every sample of the Defender set individually with
/// [`individual_privacy`], deriving one seed per sample.
pub fn individual_privacy_report<S: Scalar>(
    defender: &LabeledDataset<S>,
    reserved: &LabeledDataset<S>,
    model: &DefenderModel<S>,
    attacker: &AttackerSpec<S>,
    rounds_per_sample: usize,
    seed: u64,
    bins: usize,
) -> Result<IndividualPrivacyReport> {
    let mut scores = Vec::with_capacity(defender.len());
    for i in 0..defender.len() {
        let rest_samples = defender
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, s)| s.clone())
            .collect::<Vec<_>>();
        if rest_samples.is_empty() {
            return Err(Error::InvalidArgument(
                "individual scoring needs at least 2 defender samples".into(),
            ));
        }
        let rest = LabeledDataset::new(rest_samples, defender.num_classes())?;
        let score = individual_privacy(
            defender.get(i),
            &rest,
            reserved,
            model,
            attacker,
            rounds_per_sample,
            derive_seed(seed, Stream::Individual, i as u64),
        )?;
        scores.push(IndividualScore {
            sample_index: i,
            score,
        });
    }
    let values: Vec<f64> = scores.iter().map(|s| s.score.value).collect();
    Ok(IndividualPrivacyReport {
        histogram: histogram(&values, bins),
        scores,
        rounds_per_sample,
    })
}

/// Exact pairwise accuracy of the "larger score means Reserved" rule over
/// all Defender x Reserved pairs, with half credit for ties.
///
/// Deliberately independent of [`crate::oracle::exact_pair_stats`]: the two
/// routes check each other in tests.
pub fn pairwise_accuracy_from_scores(defender_scores: &[f64], reserved_scores: &[f64]) -> f64 {
    assert!(
        !defender_scores.is_empty() && !reserved_scores.is_empty(),
        "pairwise accuracy needs non-empty score lists"
    );
    let mut credit = 0.0f64;
    for &d in defender_scores {
        for &r in reserved_scores {
            if r > d {
                credit += 1.0;
            } else if r == d {
                credit += 0.5;
            }
        }
    }
    credit / (defender_scores.len() * reserved_scores.len()) as f64
}

/// Accuracy of thresholded per-sample membership predictions: a score
/// above `threshold` predicts Reserved, at or below predicts Defender.
pub fn individual_threshold_accuracy(
    defender_scores: &[f64],
    reserved_scores: &[f64],
    threshold: f64,
) -> f64 {
    let correct_d = defender_scores.iter().filter(|&&v| v <= threshold).count();
    let correct_r = reserved_scores.iter().filter(|&&v| v > threshold).count();
    (correct_d + correct_r) as f64 / (defender_scores.len() + reserved_scores.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacker::Discriminant;
    use crate::data::{generate_blobs, split_source};
    use crate::defender::{Algorithm, LossKind};
    use crate::stats;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn logistic_config() -> TrainerConfig {
        TrainerConfig::new(Algorithm::LogisticGd {
            learning_rate: 0.4,
            epochs: 60,
            l2: 0.0,
        })
    }

    #[test]
    fn privacy_score_known_values() {
        let s = privacy_score(0.5, 100).unwrap();
        assert_eq!(s.value, 1.0);
        assert!((s.stderr - 0.10).abs() < 1e-12);

        let s = privacy_score(1.0, 100).unwrap();
        assert_eq!((s.value, s.stderr), (0.0, 0.0));

        let s = privacy_score(0.9, 100).unwrap();
        assert!((s.value - 0.2).abs() < 1e-12);
        assert!((s.stderr - 0.06).abs() < 1e-12);
    }

    #[test]
    fn privacy_score_rejects_bad_inputs() {
        assert!(privacy_score(-0.1, 10).is_err());
        assert!(privacy_score(1.1, 10).is_err());
        assert!(privacy_score(0.5, 0).is_err());
    }

    #[test]
    fn utility_known_values() {
        let u = utility_from_accuracy(1.0, 10, 50).unwrap();
        assert_eq!(u.value, 1.0);

        let u = utility_from_accuracy(0.1, 10, 50).unwrap();
        assert_eq!(u.value, 0.0);

        let u = utility_from_accuracy(0.92, 10, 1600).unwrap();
        assert!((u.value - (10.0 * 0.92 - 1.0) / 9.0).abs() < 1e-12);
        assert!((u.stderr - 10.0 * (0.92f64 * 0.08 / 1600.0).sqrt()).abs() < 1e-12);
        assert!((u.value - 0.911).abs() < 1e-3);
        assert!((u.stderr - 0.068).abs() < 1e-3);
    }

    #[test]
    fn utility_rejects_single_class() {
        assert!(utility_from_accuracy(0.9, 1, 10).is_err());
    }

    #[test]
    fn coin_flip_attacker_leaves_privacy_high() {
        let source = generate_blobs::<f64>(2, 3, 30, 4.0, 1.0, 3).unwrap();
        let (d, r) = split_source(&source, 0.5, 1).unwrap();
        let result = run_ltu(&d, &r, &logistic_config(), &AttackerSpec::CoinFlip, 100, 77).unwrap();
        assert!(
            result.privacy.value >= 0.8,
            "privacy {}",
            result.privacy.value
        );
    }

    #[test]
    fn coin_flip_accuracy_sits_in_the_chance_band_at_n_1000() {
        let source = generate_blobs::<f64>(2, 3, 30, 4.0, 1.0, 5).unwrap();
        let (d, r) = split_source(&source, 0.5, 1).unwrap();
        let result = run_ltu(
            &d,
            &r,
            &logistic_config(),
            &AttackerSpec::CoinFlip,
            1000,
            131,
        )
        .unwrap();
        assert!(
            stats::within_band(result.a_ltu, 0.5, 1000, stats::Z_95),
            "a_ltu {}",
            result.a_ltu
        );
    }

    #[test]
    fn run_ltu_is_reproducible_byte_for_byte() {
        let source = generate_blobs::<f64>(2, 3, 20, 4.0, 1.0, 7).unwrap();
        let (d, r) = split_source(&source, 0.5, 1).unwrap();
        let attacker = AttackerSpec::Gap {
            discriminant: Discriminant::Loss(LossKind::BoundedTrueClass),
        };
        let a = run_ltu(&d, &r, &logistic_config(), &attacker, 50, 42).unwrap();
        let b = run_ltu(&d, &r, &logistic_config(), &attacker, 50, 42).unwrap();
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
    }

    #[test]
    fn individual_privacy_extremes() {
        let source = generate_blobs::<f64>(2, 2, 20, 4.0, 1.0, 9).unwrap();
        let (d, r) = split_source(&source, 0.5, 1).unwrap();
        let model = train(&logistic_config(), &d, derive_seed(3, Stream::Train, 0)).unwrap();

        // A discriminant that always favors the pinned sample: its f-value
        // is below every reserved value, so the gap attack always claims it.
        let always_low = Discriminant::Custom {
            name: "pinned_low".into(),
            f: Arc::new({
                let pinned = d.get(0).clone();
                move |_: &DefenderModel<f64>, s: &Sample<f64>| {
                    if s == &pinned {
                        0.0
                    } else {
                        1.0
                    }
                }
            }),
        };
        let rest = LabeledDataset::new(d.samples()[1..].to_vec(), d.num_classes()).unwrap();
        let score = individual_privacy(
            d.get(0),
            &rest,
            &r,
            &model,
            &AttackerSpec::Gap {
                discriminant: always_low,
            },
            50,
            21,
        )
        .unwrap();
        assert_eq!(score.value, 0.0, "always identified: no privacy");

        // The reverse orientation: the pinned sample always looks Reserved,
        // the attack is always wrong, and the clipped score is 1.
        let always_high = Discriminant::Custom {
            name: "pinned_high".into(),
            f: Arc::new({
                let pinned = d.get(0).clone();
                move |_: &DefenderModel<f64>, s: &Sample<f64>| {
                    if s == &pinned {
                        1.0
                    } else {
                        0.0
                    }
                }
            }),
        };
        let score = individual_privacy(
            d.get(0),
            &rest,
            &r,
            &model,
            &AttackerSpec::Gap {
                discriminant: always_high,
            },
            50,
            22,
        )
        .unwrap();
        assert_eq!(score.value, 1.0);
    }

    #[test]
    fn individual_nonmembership_score_by_swapping_roles() {
        // Pinning a Reserved sample is the same computation with the pools
        // swapped and the claim inverted; the helper supports it directly
        // by treating the Reserved sample as the pinned holdout.
        let source = generate_blobs::<f64>(2, 2, 12, 4.0, 1.0, 25).unwrap();
        let (d, r) = split_source(&source, 0.5, 1).unwrap();
        let model = train(&logistic_config(), &d, 0).unwrap();
        let r_rest = LabeledDataset::new(r.samples()[1..].to_vec(), r.num_classes()).unwrap();
        // Roles swapped: the pinned "defender" pool is the reserved side.
        let score = individual_privacy(
            r.get(0),
            &r_rest,
            &d,
            &model,
            &AttackerSpec::CoinFlip,
            40,
            31,
        )
        .unwrap();
        assert!((0.0..=1.0).contains(&score.value));
    }

    #[test]
    fn pairwise_accuracy_matches_the_worked_three_sample_cases() {
        let reserved = [0.4, 0.7, 0.9];
        for (c, expected) in [(0.6, 8.0 / 9.0), (0.8, 7.0 / 9.0), (0.95, 6.0 / 9.0)] {
            let defender = [0.1, 0.3, c];
            let acc = pairwise_accuracy_from_scores(&defender, &reserved);
            assert!((acc - expected).abs() < 1e-12, "c = {c}: {acc}");
            let individual = individual_threshold_accuracy(&defender, &reserved, 0.5);
            assert!((individual - 2.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pairwise_accuracy_gives_half_credit_to_ties() {
        assert_eq!(pairwise_accuracy_from_scores(&[0.5], &[0.5]), 0.5);
    }

    #[test]
    fn pairwise_accuracy_agrees_with_monte_carlo_gap_rounds() {
        // Brute-force equivalence on a small instance: the exact pairwise
        // accuracy of a fixed score table matches the sampled accuracy of
        // the pairwise rule over many rounds.
        let source = generate_blobs::<f64>(2, 3, 16, 2.5, 1.2, 47).unwrap();
        let (d, r) = split_source(&source, 0.5, 1).unwrap();
        let model = train(&logistic_config(), &d, 0).unwrap();
        let f = Discriminant::Loss(LossKind::BoundedTrueClass);
        let score = |ds: &LabeledDataset<f64>| -> Vec<f64> {
            ds.iter().map(|s| f.evaluate(&model, s).unwrap()).collect()
        };
        let exact = pairwise_accuracy_from_scores(&score(&d), &score(&r));

        let n = 4000;
        let result = run_ltu_against(
            &d,
            &r,
            &model,
            &AttackerSpec::Gap {
                discriminant: f.clone(),
            },
            n,
            553,
        )
        .unwrap();
        assert!(
            stats::within_band(result.a_ltu, exact, n, stats::Z_95),
            "monte carlo {} vs exact {exact}",
            result.a_ltu
        );
    }

    #[test]
    fn histogram_bins_cover_the_unit_interval() {
        let bins = histogram(&[0.0, 0.05, 0.5, 0.95, 1.0], 10);
        assert_eq!(bins.len(), 10);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 5);
        assert_eq!(bins[0].count, 2);
        assert_eq!(bins[5].count, 1);
        assert_eq!(bins[9].count, 2, "1.0 lands in the last bin");
    }

    #[test]
    fn individual_report_covers_every_sample() {
        let source = generate_blobs::<f64>(2, 2, 6, 5.0, 1.0, 33).unwrap();
        let (d, r) = split_source(&source, 0.5, 1).unwrap();
        let model = train(&logistic_config(), &d, 0).unwrap();
        let report = individual_privacy_report(
            &d,
            &r,
            &model,
            &AttackerSpec::Gap {
                discriminant: Discriminant::Loss(LossKind::BoundedTrueClass),
            },
            10,
            5,
            10,
        )
        .unwrap();
        assert_eq!(report.scores.len(), d.len());
        assert_eq!(
            report.histogram.iter().map(|b| b.count).sum::<usize>(),
            d.len()
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

        #[test]
        fn privacy_value_is_bounded_and_monotone(
            a in 0.5f64..=1.0,
            delta in 0.0f64..0.5,
            n in 1usize..10_000,
        ) {
            let s1 = privacy_score(a, n).unwrap();
            prop_assert!((0.0..=1.0).contains(&s1.value));
            let a2 = (a + delta).min(1.0);
            let s2 = privacy_score(a2, n).unwrap();
            prop_assert!(s2.value <= s1.value + 1e-12);
        }

        #[test]
        fn utility_value_is_bounded(
            a in 0.0f64..=1.0,
            c in 2usize..20,
            n in 1usize..10_000,
        ) {
            let u = utility_from_accuracy(a, c, n).unwrap();
            prop_assert!((0.0..=1.0).contains(&u.value));
        }
    }
}
