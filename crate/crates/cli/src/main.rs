//! `rdlab` — configuration-driven experiment runner for the flow laboratory.
//!
//! Exit codes: 0 all checks passed, 1 at least one check failed, 2 config
//! error. The environment variable `RDLAB_OUT` overrides the output root.

mod config;
mod runner;

use std::fs;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "rdlab", version, about = "Ricci-DeTurck flow experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all experiments in a JSON config and write CSV reports.
    Run { config: String },
    /// List available experiments, their parameters and what they reproduce.
    List,
    /// Parse and validate a config without running anything.
    Validate { config: String },
}

const EXPERIMENT_TABLE: &str = "\
available experiments (config key: experiments[].name)

  beta_weak_estimate → Definition 2.3          params: beta, kappa, c_ladder, tolerance
  lower_bound_decay_fit → Theorem 3.1          params: beta, kappa
  iteration_replay → Theorem 3.1 proof         params: beta, t
  davies_check → Eq. (hkd)                     params: u1, u2, pairs, random_pairs
  theorem45_pipeline → Theorem 4.5             params: beta, gamma, eta, kappa
  w1p_estimates_check → Theorem 4.7            params: p, A
";

fn load_config(path: &str) -> Result<(ExperimentConfig, String), String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {path}: {e}"))?;
    let cfg = ExperimentConfig::from_str(&text).map_err(|e| e.to_string())?;
    Ok((cfg, text))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            print!("{EXPERIMENT_TABLE}");
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(_) => {
                println!("config ok");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("config error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Run { config } => {
            let (cfg, text) = match load_config(&config) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(2);
                }
            };
            let out_root = std::env::var("RDLAB_OUT").ok();
            match runner::run(&cfg, &text, out_root.as_deref()) {
                Ok(manifest) => {
                    for e in &manifest.experiments {
                        println!("{:<24} {} ({} ms)", e.name, e.status, e.wall_ms);
                    }
                    if manifest.all_passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("run error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
