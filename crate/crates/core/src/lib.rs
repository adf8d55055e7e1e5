//! Membership-inference privacy and utility evaluation of classifiers via
//! the leave-two-unlabeled (LTU) protocol.
//!
//! An evaluation splits a source dataset into a Defender set (used to train
//! the model under audit) and a disjoint Reserved set. Each LTU round hands
//! an attacker every sample and membership label except those of one
//! Defender sample and one Reserved sample, presented in random order; the
//! attacker must say which of the two is the training-set member. Attack
//! accuracy over many rounds yields a privacy score, and the model's
//! chance-corrected accuracy on Reserved data yields a utility score.
//!
//! The crate is organized around that pipeline:
//!
//! - [`data`]: datasets, synthetic blobs, CSV I/O, splits, label flips, and
//!   LTU round construction.
//! - [`defender`]: the trainer/model zoo with declared determinism,
//!   order-invariance, and white-box access (losses, parameters, gradients).
//! - [`attacker`]: attack strategies mapping a round to a membership claim.
//! - [`evaluator`]: drives rounds and computes privacy/utility scores with
//!   error bars, plus per-sample privacy scores.
//! - [`oracle`]: exact brute-force pair enumerations and closed-form
//!   expectations used as ground truth for the attack strategies.
//!
//! Numeric kernels are generic over the floating-point type via [`Scalar`];
//! the aliases below pin the double-precision instantiation used by the CLI
//! and most tests.

pub mod attacker;
pub mod data;
pub mod defender;
pub mod error;
pub mod evaluator;
pub mod oracle;
pub mod scalar;
pub mod seeding;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision sample.
pub type Sample64 = data::Sample<f64>;
/// Double-precision labeled dataset.
pub type Dataset64 = data::LabeledDataset<f64>;
/// Double-precision LTU round.
pub type Round64 = data::LtuRound<f64>;
/// Double-precision defender model.
pub type Model64 = defender::DefenderModel<f64>;
/// Double-precision attacker specification.
pub type Attacker64 = attacker::AttackerSpec<f64>;
/// Double-precision discriminant function.
pub type Discriminant64 = attacker::Discriminant<f64>;
