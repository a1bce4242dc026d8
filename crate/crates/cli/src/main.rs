//! `omoprep`: end-to-end pipeline driver.
//!
//! Subcommands wire the library stages together over a single TOML config:
//! synthetic data generation, representation training, neighbor extraction,
//! trajectory construction, augmentation, and the benchmark sweep. Exit
//! codes: 0 success, 2 config or input error, 3 numeric failure, 4 artifact
//! consistency failure.

mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::PipelineConfig;
use omoprep_core::{ErrorClass, Result};

#[derive(Parser)]
#[command(name = "omoprep", version, about = "Concept representation and trajectory pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic vocabulary, cohort, and recoded external records
    Synth {
        /// Generator spec (TOML)
        #[arg(long)]
        spec: PathBuf,
        /// Directory for the generated artifacts
        #[arg(long)]
        out_dir: PathBuf,
        /// Override the spec's seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train concept representations over the ontology
    TrainReps {
        #[arg(long)]
        config: PathBuf,
        /// Override the pipeline seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Extract nearest-neighbor sets from trained representations
    Neighbors {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build labeled trajectory datasets for every task and split
    BuildTrajectories {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Expand a trajectory dataset with neighbor-replacement copies
    Augment {
        #[arg(long)]
        config: PathBuf,
        /// Trajectory dataset to expand
        #[arg(long)]
        input: PathBuf,
        /// Where to write the expanded dataset
        #[arg(long)]
        output: PathBuf,
        /// Copies per item, 1 = originals only (overrides the config)
        #[arg(long)]
        factor: Option<u32>,
        /// Per-position replacement probability (overrides the config)
        #[arg(long)]
        replace_prob: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the augmentation-factor sweep and write the evaluation report
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        /// Factors to sweep (repeatable; overrides the config list)
        #[arg(long)]
        factor: Vec<u32>,
        /// Per-position replacement probability (overrides the config)
        #[arg(long)]
        replace_prob: Option<f64>,
        /// Where to write report.tsv and report.json (default: output_dir)
        #[arg(long)]
        report_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, out_dir, seed } => stages::cmd_synth(&spec, &out_dir, seed),
        Command::TrainReps { config, seed } => {
            let cfg = PipelineConfig::load(&config)?.with_seed(seed);
            stages::cmd_train_reps(&cfg)
        }
        Command::Neighbors { config, seed } => {
            let cfg = PipelineConfig::load(&config)?.with_seed(seed);
            stages::cmd_neighbors(&cfg)
        }
        Command::BuildTrajectories { config, seed } => {
            let cfg = PipelineConfig::load(&config)?.with_seed(seed);
            stages::cmd_build_trajectories(&cfg)
        }
        Command::Augment {
            config,
            input,
            output,
            factor,
            replace_prob,
            seed,
        } => {
            let mut cfg = PipelineConfig::load(&config)?.with_seed(seed);
            if let Some(f) = factor {
                cfg.augment.factor = f;
            }
            if let Some(p) = replace_prob {
                cfg.augment.replace_prob = p;
            }
            stages::cmd_augment(&cfg, &input, &output)
        }
        Command::Benchmark {
            config,
            factor,
            replace_prob,
            report_dir,
            seed,
        } => {
            let mut cfg = PipelineConfig::load(&config)?.with_seed(seed);
            if !factor.is_empty() {
                cfg.factors = factor;
            }
            if let Some(p) = replace_prob {
                cfg.augment.replace_prob = p;
            }
            let dir = stages::report_dir(&cfg, report_dir);
            stages::cmd_benchmark(&cfg, &dir)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Input => 2,
                ErrorClass::Numeric => 3,
                ErrorClass::Artifact => 4,
            })
        }
    }
}
