//! `mhgp` — experiment runner for surrogate-accelerated Metropolis-Hastings.
//!
//! Subcommands:
//! * `run --config <file> [--seed N] [--output DIR]` — run one experiment,
//!   writing samples.csv / evals.jsonl / summary.json.
//! * `compare --a <csv> --b <csv>` — energy-distance permutation test
//!   between two sample files.
//! * `defaults --experiment <name> [--algorithm <name>]` — print a fully
//!   populated config for editing.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.
//! `MHGP_OUTPUT_DIR` overrides the config's output directory (the `--output`
//! flag overrides both).

mod config;
mod runner;

use clap::{Parser, Subcommand};
use config::{Algorithm, Experiment, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mhgp", version, about = "Surrogate-accelerated Metropolis-Hastings experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory (beats MHGP_OUTPUT_DIR and the file).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Energy-distance permutation test between two samples.csv files.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Subsample size drawn from each chain.
        #[arg(long, default_value_t = 500)]
        n_sub: usize,
        /// Number of permutations.
        #[arg(long, default_value_t = 999)]
        n_perm: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Burn-in rows to drop from --a before subsampling.
        #[arg(long, default_value_t = 0)]
        burn_a: usize,
        /// Burn-in rows to drop from --b before subsampling.
        #[arg(long, default_value_t = 0)]
        burn_b: usize,
        /// Where to write the JSON result.
        #[arg(long, default_value = "compare.json")]
        out: PathBuf,
    },
    /// Print a fully-populated default config for an experiment.
    Defaults {
        #[arg(long)]
        experiment: String,
        #[arg(long, default_value = "mhgp")]
        algorithm: String,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            seed,
            output,
        } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let mut cfg = match ExperimentConfig::from_json(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Ok(dir) = std::env::var("MHGP_OUTPUT_DIR") {
                if !dir.is_empty() {
                    cfg.output_dir = dir;
                }
            }
            if let Some(dir) = output {
                cfg.output_dir = dir.display().to_string();
            }
            match runner::run_experiment(&cfg) {
                Ok(dir) => {
                    println!("wrote {}", dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Command::Compare {
            a,
            b,
            n_sub,
            n_perm,
            seed,
            burn_a,
            burn_b,
            out,
        } => {
            if n_perm < 99 {
                eprintln!("error: n_perm: must be at least 99");
                return ExitCode::from(EXIT_CONFIG);
            }
            if n_sub == 0 {
                eprintln!("error: n_sub: must be at least 1");
                return ExitCode::from(EXIT_CONFIG);
            }
            match runner::compare_runs(&a, &b, n_sub, n_perm, seed, burn_a, burn_b, &out) {
                Ok(result) => {
                    println!(
                        "statistic {:.6}, p-value {:.6} ({} permutations) -> {}",
                        result.statistic,
                        result.p_value,
                        result.n_permutations,
                        out.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(EXIT_RUNTIME)
                }
            }
        }
        Command::Defaults {
            experiment,
            algorithm,
        } => {
            let exp = match experiment.as_str() {
                "banana" => Experiment::Banana,
                "kinetics" => Experiment::Kinetics,
                "gaussian" => Experiment::Gaussian,
                other => {
                    eprintln!("error: experiment: unknown experiment {other:?}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let alg = match algorithm.as_str() {
                "mhgp" => Algorithm::Mhgp,
                "mh" => Algorithm::Mh,
                "dram" => Algorithm::Dram,
                other => {
                    eprintln!("error: algorithm: unknown algorithm {other:?}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let cfg = ExperimentConfig::defaults(exp, alg);
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
            ExitCode::SUCCESS
        }
    }
}
