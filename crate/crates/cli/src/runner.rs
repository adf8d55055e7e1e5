//! Experiment execution and report writing.
//!
//! Every run gets a fresh timestamped directory under the configured
//! output root (existing directories are never touched), containing:
//!
//! - `report.json`: the full machine-readable report, a pure function of
//!   the resolved config;
//! - `resolved_config.toml`: the config echo; replaying it reproduces
//!   `report.json` byte for byte;
//! - `scores.csv`: per-sample discriminant values (`membership,score`)
//!   for the `oracle` subcommand;
//! - `individual_scores.csv` / `histogram.csv`: per-sample privacy
//!   scores, when enabled.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ltu_core::attacker::{AttackerSpec, Discriminant, RetrainSeedMode};
use ltu_core::data::{flip_labels, split_source, MembershipLabel};
use ltu_core::defender::{train, LossKind, TrainerCapabilities, TrainerConfig};
use ltu_core::evaluator::{
    individual_privacy_report, run_ltu_against, utility_score, HistogramBin,
    IndividualPrivacyReport, RoundRecord,
};
use ltu_core::seeding::{derive_seed, Stream};
use ltu_core::{Dataset64, Model64};
use serde::Serialize;

use crate::config::ExperimentConfig;

const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize)]
pub struct UtilitySection {
    pub value: f64,
    pub stderr: f64,
    pub a_d: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct PrivacySection {
    pub value: f64,
    pub stderr: f64,
    pub a_ltu: f64,
    pub n: usize,
    /// True when a_ltu hit 0 or 1 and the normal-approximation error bar
    /// degenerates to zero, understating uncertainty.
    pub stderr_collapsed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialReport {
    pub trial: usize,
    pub trial_seed: u64,
    pub utility: UtilitySection,
    pub privacy: PrivacySection,
    /// Rounds decided by a coin flip; for the retrain attacker these are
    /// empirical injectivity failures.
    pub tie_rounds: usize,
    pub per_round: Vec<RoundRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub attacker: String,
    pub trainer_capabilities: TrainerCapabilities,
    /// Surfaced independently of attack outcomes: example-based models
    /// store training data verbatim.
    pub example_based: bool,
    pub trials: Vec<TrialReport>,
    pub mean_utility: f64,
    pub mean_privacy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub individual: Option<IndividualPrivacyReport>,
}

/// All artifacts of one `run` invocation.
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub report: RunReport,
}

/// Creates `<out_dir>/<label>-<timestamp>[-N]`, never reusing a directory.
pub fn prepare_run_dir(out_dir: &str, label: &str) -> Result<PathBuf> {
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = Path::new(out_dir);
    fs::create_dir_all(base)
        .with_context(|| format!("creating output directory {}", base.display()))?;
    for suffix in 0..10_000u32 {
        let name = if suffix == 0 {
            format!("{label}-{stamp}")
        } else {
            format!("{label}-{stamp}-{suffix}")
        };
        let dir = base.join(name);
        if !dir.exists() {
            fs::create_dir(&dir)
                .with_context(|| format!("creating run directory {}", dir.display()))?;
            return Ok(dir);
        }
    }
    anyhow::bail!(
        "could not find a free run directory under {}",
        base.display()
    );
}

struct TrialData {
    seed: u64,
    defender: Dataset64,
    reserved: Dataset64,
}

fn prepare_trial(config: &ExperimentConfig, source: &Dataset64, trial: usize) -> Result<TrialData> {
    let seed = derive_seed(config.master_seed(), Stream::Trial, trial as u64);
    let (defender, reserved) = split_source(source, config.split_fraction, seed)
        .context("splitting the source dataset")?;
    let (defender, reserved) = if config.label_flip_fraction > 0.0 {
        (
            flip_labels(
                &defender,
                config.label_flip_fraction,
                derive_seed(seed, Stream::LabelFlip, 1),
            )?,
            flip_labels(
                &reserved,
                config.label_flip_fraction,
                derive_seed(seed, Stream::LabelFlip, 2),
            )?,
        )
    } else {
        (defender, reserved)
    };
    Ok(TrialData {
        seed,
        defender,
        reserved,
    })
}

fn run_trial(
    config: &ExperimentConfig,
    trainer: &TrainerConfig,
    attacker: &AttackerSpec<f64>,
    data: &TrialData,
    trial: usize,
) -> Result<(TrialReport, Model64)> {
    let model = train(
        trainer,
        &data.defender,
        derive_seed(data.seed, Stream::Train, 0),
    )
    .map_err(|e| anyhow::anyhow!("trial {trial}: {e}"))?;
    let utility =
        utility_score(&model, &data.reserved).map_err(|e| anyhow::anyhow!("trial {trial}: {e}"))?;
    let ltu = run_ltu_against(
        &data.defender,
        &data.reserved,
        &model,
        attacker,
        config.rounds,
        data.seed,
    )
    .map_err(|e| anyhow::anyhow!("trial {trial}: {e}"))?;

    let report = TrialReport {
        trial,
        trial_seed: data.seed,
        utility: UtilitySection {
            value: utility.score.value,
            stderr: utility.score.stderr,
            a_d: utility.accuracy,
            n: utility.score.n,
        },
        privacy: PrivacySection {
            value: ltu.privacy.value,
            stderr: ltu.privacy.stderr,
            a_ltu: ltu.a_ltu,
            n: ltu.n,
            stderr_collapsed: ltu.a_ltu == 0.0 || ltu.a_ltu == 1.0,
        },
        tie_rounds: ltu.tie_rounds(),
        per_round: ltu.per_round,
    };
    Ok((report, model))
}

/// Runs a resolved experiment config end to end and writes all artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    let source = config.load_source()?;
    let trainer = config.trainer_config()?;
    let attacker = config.attacker_spec()?;

    let mut trials = Vec::with_capacity(config.trials);
    let mut first_trial: Option<(TrialData, Model64)> = None;
    for trial in 0..config.trials {
        let data = prepare_trial(config, &source, trial)?;
        let (report, model) = run_trial(config, &trainer, &attacker, &data, trial)?;
        trials.push(report);
        if trial == 0 {
            first_trial = Some((data, model));
        }
    }
    let (trial0, model0) = first_trial.expect("at least one trial");

    let individual = if config.individual_scores {
        Some(
            individual_privacy_report(
                &trial0.defender,
                &trial0.reserved,
                &model0,
                &attacker,
                config.individual_rounds,
                derive_seed(trial0.seed, Stream::Individual, 0),
                config.histogram_bins,
            )
            .map_err(|e| anyhow::anyhow!("individual scoring: {e}"))?,
        )
    } else {
        None
    };

    let mean =
        |f: &dyn Fn(&TrialReport) -> f64| trials.iter().map(f).sum::<f64>() / trials.len() as f64;
    let report = RunReport {
        format_version: REPORT_FORMAT_VERSION,
        config: config.clone(),
        attacker: attacker.name(),
        trainer_capabilities: trainer.capabilities(),
        example_based: trainer.capabilities().example_based,
        mean_utility: mean(&|t| t.utility.value),
        mean_privacy: mean(&|t| t.privacy.value),
        trials,
        individual,
    };

    let dir = prepare_run_dir(&config.out_dir, &config.run_label)?;
    write_json(&dir.join("report.json"), &report)?;
    fs::write(dir.join("resolved_config.toml"), config.to_toml_string())?;
    write_scores_csv(
        &dir.join("scores.csv"),
        config,
        &model0,
        &trial0.defender,
        &trial0.reserved,
    )?;
    if let Some(individual) = &report.individual {
        write_individual_csv(&dir.join("individual_scores.csv"), individual)?;
        write_histogram_csv(&dir.join("histogram.csv"), &individual.histogram)?;
    }
    Ok(RunArtifacts { dir, report })
}

/// The discriminant whose per-sample values `scores.csv` records: the one
/// the configured attacker actually consumes, falling back to the bounded
/// loss for attackers without a scalar discriminant.
fn scores_discriminant(config: &ExperimentConfig) -> Result<Discriminant<f64>> {
    Ok(match config.attacker.as_str() {
        "gap" => config.gap_discriminant()?,
        "blf" => Discriminant::Loss(config.loss_kind()?),
        "gradient" => match config.attacker_spec()? {
            AttackerSpec::Gradient { objective } => Discriminant::GradientNorm(objective),
            _ => unreachable!(),
        },
        _ => Discriminant::Loss(LossKind::BoundedTrueClass),
    })
}

fn write_scores_csv(
    path: &Path,
    config: &ExperimentConfig,
    model: &Model64,
    defender: &Dataset64,
    reserved: &Dataset64,
) -> Result<()> {
    let f = scores_discriminant(config)?;
    let mut out = String::from("membership,score\n");
    for (label, ds) in [
        (MembershipLabel::Defender, defender),
        (MembershipLabel::Reserved, reserved),
    ] {
        for sample in ds.iter() {
            let value = f
                .evaluate(model, sample)
                .map_err(|e| anyhow::anyhow!("scores.csv: {e}"))?;
            out.push_str(&format!("{},{value}\n", label.as_str()));
        }
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_individual_csv(path: &Path, report: &IndividualPrivacyReport) -> Result<()> {
    let mut out = String::from("sample_index,privacy,stderr,rounds\n");
    for entry in &report.scores {
        out.push_str(&format!(
            "{},{},{},{}\n",
            entry.sample_index, entry.score.value, entry.score.stderr, entry.score.n
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_histogram_csv(path: &Path, bins: &[HistogramBin]) -> Result<()> {
    let mut out = String::from("bin_low,bin_high,count\n");
    for bin in bins {
        out.push_str(&format!("{},{},{}\n", bin.bin_low, bin.bin_high, bin.count));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("serializing report")?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// One cell of a trainer x regime sweep.
///
/// `attack_error` is set when the attack is not applicable to the model
/// (the retrain attack needs a parameter vector, which example-based
/// models lack); the capability flags still expose the storage leak.
#[derive(Clone, Debug, Serialize)]
pub struct GridCell {
    pub trainer: String,
    pub regime: String,
    pub example_based: bool,
    pub deterministic: bool,
    pub order_invariant: bool,
    pub mean_utility: Option<f64>,
    pub mean_privacy: Option<f64>,
    pub per_trial_privacy: Vec<f64>,
    pub per_trial_utility: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack_error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridReport {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub attacker: String,
    pub cells: Vec<GridCell>,
}

/// Sweeps trainers x randomness regimes under the retrain attacker (seed
/// shared in the seeded regimes, fresh otherwise).
pub fn run_grid(config: &ExperimentConfig) -> Result<(PathBuf, GridReport)> {
    let source = config.load_source()?;
    let mut cells = Vec::new();
    for trainer_name in config.grid_trainer_names() {
        for regime in config.grid_regime_names() {
            let trainer = config.trainer_config_with_regime(&trainer_name, &regime)?;
            let attacker = AttackerSpec::Retrain {
                seed_mode: if regime == "not-seeded" {
                    RetrainSeedMode::Fresh
                } else {
                    RetrainSeedMode::Shared
                },
            };
            let mut privacy = Vec::with_capacity(config.trials);
            let mut utility = Vec::with_capacity(config.trials);
            let mut attack_error = None;
            for trial in 0..config.trials {
                let data = prepare_trial(config, &source, trial)?;
                match run_trial(config, &trainer, &attacker, &data, trial) {
                    Ok((report, _)) => {
                        privacy.push(report.privacy.value);
                        utility.push(report.utility.value);
                    }
                    Err(e) => {
                        attack_error = Some(format!("{e}"));
                        break;
                    }
                }
            }
            let caps = trainer.capabilities();
            let mean_of = |values: &[f64]| {
                if values.is_empty() || attack_error.is_some() {
                    None
                } else {
                    Some(values.iter().sum::<f64>() / values.len() as f64)
                }
            };
            cells.push(GridCell {
                trainer: trainer_name.clone(),
                regime,
                example_based: caps.example_based,
                deterministic: caps.deterministic,
                order_invariant: caps.order_invariant,
                mean_utility: mean_of(&utility),
                mean_privacy: mean_of(&privacy),
                per_trial_privacy: privacy,
                per_trial_utility: utility,
                attack_error,
            });
        }
    }
    let report = GridReport {
        format_version: REPORT_FORMAT_VERSION,
        config: config.clone(),
        attacker: "retrain".into(),
        cells,
    };
    let dir = prepare_run_dir(&config.out_dir, &format!("{}-grid", config.run_label))?;
    write_json(&dir.join("grid.json"), &report)?;
    fs::write(dir.join("resolved_config.toml"), config.to_toml_string())?;
    Ok((dir, report))
}

pub fn format_grid_table(report: &GridReport) -> String {
    let regimes: Vec<String> = report.config.grid_regime_names();
    let mut out = format!("{:<16}", "trainer");
    for regime in &regimes {
        out.push_str(&format!(" | {regime:<22}"));
    }
    out.push('\n');
    out.push_str(&"-".repeat(16 + regimes.len() * 25));
    out.push('\n');
    for trainer in report.config.grid_trainer_names() {
        let flag = report
            .cells
            .iter()
            .find(|c| c.trainer == trainer)
            .map(|c| c.example_based)
            .unwrap_or(false);
        let name = if flag {
            format!("{trainer}*")
        } else {
            trainer.clone()
        };
        out.push_str(&format!("{name:<16}"));
        for regime in &regimes {
            let cell = report
                .cells
                .iter()
                .find(|c| c.trainer == trainer && &c.regime == regime)
                .expect("cell exists");
            match (cell.mean_utility, cell.mean_privacy) {
                (Some(u), Some(p)) => out.push_str(&format!(" | U {u:.2} / P {p:.2}       ")),
                _ => out.push_str(&format!(" | {:<22}", "attack n/a")),
            }
        }
        out.push('\n');
    }
    out.push_str("* example-based model: stores training samples verbatim\n");
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareEntry {
    pub attacker: String,
    pub a_ltu: f64,
    pub privacy: f64,
    pub privacy_stderr: f64,
    /// Flagged when the attack accuracy clears chance by two sigmas.
    pub privacy_violation: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub trainer_capabilities: TrainerCapabilities,
    pub example_based: bool,
    pub entries: Vec<CompareEntry>,
    /// `agreement[i][j]`: fraction of shared rounds where attackers i and
    /// j claimed the same slot.
    pub agreement: Vec<Vec<f64>>,
}

/// Runs every configured attacker over the identical round sequence and
/// reports accuracies plus the pairwise agreement matrix.
pub fn run_compare(config: &ExperimentConfig) -> Result<(PathBuf, CompareReport)> {
    let names = config.compare_attacker_names();
    anyhow::ensure!(names.len() >= 2, "compare needs at least 2 attackers");
    let source = config.load_source()?;
    let trainer = config.trainer_config()?;
    let data = prepare_trial(config, &source, 0)?;
    let model = train(
        &trainer,
        &data.defender,
        derive_seed(data.seed, Stream::Train, 0),
    )
    .map_err(|e| anyhow::anyhow!(e.to_string()))?;

    let mut entries = Vec::new();
    let mut claims: Vec<Vec<ltu_core::data::UnlabeledSlot>> = Vec::new();
    for name in &names {
        let attacker = config.attacker_spec_for(name)?;
        // Same master seed for every attacker: identical rounds.
        let result = run_ltu_against(
            &data.defender,
            &data.reserved,
            &model,
            &attacker,
            config.rounds,
            data.seed,
        )
        .map_err(|e| anyhow::anyhow!("{name}: {e}"))?;
        claims.push(
            result
                .per_round
                .iter()
                .map(|r| r.prediction.claimed_defender)
                .collect(),
        );
        let sigma = ltu_core::stats::binomial_stderr(0.5, result.n);
        entries.push(CompareEntry {
            attacker: result.attacker.clone(),
            a_ltu: result.a_ltu,
            privacy: result.privacy.value,
            privacy_stderr: result.privacy.stderr,
            privacy_violation: result.a_ltu > 0.5 + 2.0 * sigma,
        });
    }

    let n = config.rounds as f64;
    let agreement: Vec<Vec<f64>> = claims
        .iter()
        .map(|a| {
            claims
                .iter()
                .map(|b| a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n)
                .collect()
        })
        .collect();

    let report = CompareReport {
        format_version: REPORT_FORMAT_VERSION,
        config: config.clone(),
        trainer_capabilities: trainer.capabilities(),
        example_based: trainer.capabilities().example_based,
        entries,
        agreement,
    };
    let dir = prepare_run_dir(&config.out_dir, &format!("{}-compare", config.run_label))?;
    write_json(&dir.join("compare.json"), &report)?;
    fs::write(dir.join("resolved_config.toml"), config.to_toml_string())?;
    Ok((dir, report))
}

pub fn format_compare_table(report: &CompareReport) -> String {
    let mut out = format!(
        "{:<34} {:>8} {:>9} {:>10}\n",
        "attacker", "a_ltu", "privacy", "violation"
    );
    for entry in &report.entries {
        out.push_str(&format!(
            "{:<34} {:>8.4} {:>9.4} {:>10}\n",
            entry.attacker,
            entry.a_ltu,
            entry.privacy,
            if entry.privacy_violation { "yes" } else { "no" }
        ));
    }
    out.push_str("\nagreement matrix (fraction of shared rounds with identical claims):\n");
    for (i, row) in report.agreement.iter().enumerate() {
        out.push_str(&format!("{:<34}", report.entries[i].attacker));
        for v in row {
            out.push_str(&format!(" {v:>6.3}"));
        }
        out.push('\n');
    }
    out
}

/// Summary statistics the `oracle` subcommand prints for a scores file.
#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub n_defender: usize,
    pub n_reserved: usize,
    pub pair_stats: ltu_core::oracle::PairStats,
    pub pairwise_rule_accuracy: f64,
    pub pairwise_rule_privacy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_losses: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_rule_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_one_gaps: Option<(f64, f64)>,
}

/// Reads a `scores.csv` (membership,score) and computes the exact pair
/// statistics and the rule-level accuracies they imply.
pub fn oracle_report(path: &Path) -> Result<OracleReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut defender = Vec::new();
    let mut reserved = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            anyhow::ensure!(
                line.trim() == "membership,score",
                "line 1: expected header `membership,score`, found {line:?}"
            );
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (membership, score) = line
            .split_once(',')
            .with_context(|| format!("line {}: expected `membership,score`", i + 1))?;
        let value: f64 = score
            .trim()
            .parse()
            .with_context(|| format!("line {}: score is not a number", i + 1))?;
        match MembershipLabel::parse(membership.trim()) {
            Some(MembershipLabel::Defender) => defender.push(value),
            Some(MembershipLabel::Reserved) => reserved.push(value),
            None => anyhow::bail!("line {}: unknown membership {:?}", i + 1, membership.trim()),
        }
    }

    let pair_stats = ltu_core::oracle::exact_pair_stats(&defender, &reserved)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let accuracy = ltu_core::oracle::pairwise_rule_accuracy(&pair_stats);

    let bounded = defender
        .iter()
        .chain(&reserved)
        .all(|v| (0.0..=1.0).contains(v));
    let expected_losses = if bounded {
        Some(
            ltu_core::oracle::exact_expected_losses(&defender, &reserved)
                .map_err(|e| anyhow::anyhow!(e.to_string()))?,
        )
    } else {
        None
    };
    let loss_rule_accuracy =
        expected_losses.map(|(e_d, e_r)| ltu_core::oracle::loss_gap_rule_accuracy(e_d, e_r));
    let binary = defender
        .iter()
        .chain(&reserved)
        .all(|v| *v == 0.0 || *v == 1.0);
    let zero_one_gaps = if binary {
        Some(
            ltu_core::oracle::zero_one_equality_check(&defender, &reserved)
                .map_err(|e| anyhow::anyhow!(e.to_string()))?,
        )
    } else {
        None
    };

    Ok(OracleReport {
        n_defender: defender.len(),
        n_reserved: reserved.len(),
        pair_stats,
        pairwise_rule_accuracy: accuracy,
        pairwise_rule_privacy: (2.0 * (1.0 - accuracy)).min(1.0),
        expected_losses,
        loss_rule_accuracy,
        zero_one_gaps,
    })
}

pub fn format_oracle_report(report: &OracleReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "scores: {} defender, {} reserved\n",
        report.n_defender, report.n_reserved
    ));
    out.push_str(&format!(
        "pair stats: p_r={:.6} p_d={:.6} ties={:.6}\n",
        report.pair_stats.p_r, report.pair_stats.p_d, report.pair_stats.tie_prob
    ));
    out.push_str(&format!(
        "pairwise rule: accuracy={:.6} privacy={:.6}\n",
        report.pairwise_rule_accuracy, report.pairwise_rule_privacy
    ));
    if let Some((e_d, e_r)) = report.expected_losses {
        out.push_str(&format!("expected losses: e_d={e_d:.6} e_r={e_r:.6}\n"));
    }
    if let Some(acc) = report.loss_rule_accuracy {
        out.push_str(&format!("bounded-loss rule expected accuracy: {acc:.6}\n"));
    }
    if let Some((p_gap, e_gap)) = report.zero_one_gaps {
        out.push_str(&format!(
            "zero-one gaps: p_r-p_d={p_gap:.6} e_r-e_d={e_gap:.6} (equal for 0-1 losses)\n"
        ));
    }
    out
}
