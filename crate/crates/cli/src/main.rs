use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use ltu_cli::config::{ExperimentConfig, Overrides};
use ltu_cli::runner;

/// Membership-inference privacy and utility evaluation of classifiers via
/// the leave-two-unlabeled protocol.
#[derive(Parser)]
#[command(name = "ltu", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunFlags {
    /// Flat key-value config file (TOML); flags override file keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; drawn and recorded when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory root.
    #[arg(long)]
    out: Option<String>,
    /// LTU rounds per trial.
    #[arg(long)]
    rounds: Option<usize>,
    /// Number of independent trials.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write report.json plus CSV artifacts.
    Run(RunFlags),
    /// Sweep trainers x randomness regimes under the retrain attacker.
    Grid(RunFlags),
    /// Run several attackers on identical rounds and compare them.
    Compare(RunFlags),
    /// Exact pair statistics and implied accuracies for a scores.csv file.
    Oracle {
        /// Path to a `membership,score` CSV (written by `run` as scores.csv).
        #[arg(long)]
        scores: PathBuf,
        /// Print the report as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

fn resolve(flags: &RunFlags) -> Result<ExperimentConfig> {
    let config = match &flags.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    config.resolve(
        Overrides {
            seed: flags.seed,
            rounds: flags.rounds,
            trials: flags.trials,
        },
        flags.out.as_deref(),
    )
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(flags) => {
            let config = resolve(&flags)?;
            println!("resolved seed: {}", config.master_seed());
            let artifacts = runner::run_experiment(&config)?;
            let report = &artifacts.report;
            println!("run directory: {}", artifacts.dir.display());
            println!(
                "attacker: {} | trainer: {} ({})",
                report.attacker,
                config.trainer,
                if report.example_based {
                    "example-based: stores training samples"
                } else {
                    "parametric"
                }
            );
            for trial in &report.trials {
                println!(
                    "trial {}: utility {:.4} ± {:.4} (a_d {:.4}) | privacy {:.4} ± {:.4} (a_ltu {:.4}){}",
                    trial.trial,
                    trial.utility.value,
                    trial.utility.stderr,
                    trial.utility.a_d,
                    trial.privacy.value,
                    trial.privacy.stderr,
                    trial.privacy.a_ltu,
                    if trial.privacy.stderr_collapsed {
                        " [stderr collapsed at accuracy 0 or 1]"
                    } else {
                        ""
                    }
                );
            }
            println!(
                "mean over {} trial(s): utility {:.4} | privacy {:.4}",
                report.trials.len(),
                report.mean_utility,
                report.mean_privacy
            );
        }
        Command::Grid(flags) => {
            let config = resolve(&flags)?;
            println!("resolved seed: {}", config.master_seed());
            let (dir, report) = runner::run_grid(&config)?;
            println!("run directory: {}", dir.display());
            print!("{}", runner::format_grid_table(&report));
        }
        Command::Compare(flags) => {
            let config = resolve(&flags)?;
            println!("resolved seed: {}", config.master_seed());
            let (dir, report) = runner::run_compare(&config)?;
            println!("run directory: {}", dir.display());
            print!("{}", runner::format_compare_table(&report));
        }
        Command::Oracle { scores, json } => {
            let report = runner::oracle_report(&scores)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", runner::format_oracle_report(&report));
            }
        }
    }
    Ok(())
}
