//! Scenario runner. Parses a config file, executes the named experiment, and
//! writes CSV artifacts plus a manifest.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime numerical error.

use clap::Parser;
use cohertherm::{config, scenario};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cohertherm", version, about = "Run a cohertherm scenario")]
struct Cli {
    /// Path to the scenario config file
    config_path: PathBuf,
    /// Override the config's output directory
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the config's seed
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config_path) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config_path.display());
            return ExitCode::from(1);
        }
    };
    let mut cfg = match config::parse_config(&text) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(dir) = cli.output_dir {
        cfg.output_dir = dir;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match scenario::run(&cfg, &text) {
        Ok(report) => {
            println!(
                "{}: {} artifact(s) in {} ({:.3} s)",
                cfg.scenario,
                report.artifacts.len(),
                cfg.output_dir.display(),
                report.wall_seconds
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("runtime error: {e}");
            ExitCode::from(2)
        }
    }
}
