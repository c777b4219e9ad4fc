//! Experiment runner: `coalnet <experiment> --config <file> [--seed N]
//! [--out path] [--set section.key=value ...]`.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use coalnet::config::{ExperimentConfig, RawConfig};
use coalnet::experiment::{self, EXPERIMENTS};

#[derive(Parser)]
#[command(
    name = "coalnet",
    about = "Coalition-game engine and packet-forwarding simulator",
    after_help = default_help(),
)]
struct Args {
    /// Experiment to run.
    experiment: String,
    /// Configuration file (INI-style); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config overrides, repeatable: --set section.key=value
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

fn default_help() -> String {
    format!(
        "experiments: {}\n\ndefault radio parameters: kappa=3, sigma2=-60 dBm, \
         gamma=10 dB, p_max=10 dBm\ndefault game parameters: beta=0.9, c=0.5, b=1, \
         v0=0, delta=1e-4",
        EXPERIMENTS.join(", ")
    )
}

fn run(args: &Args) -> Result<(), String> {
    let mut raw = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            RawConfig::parse(&text).map_err(|e| e.to_string())?
        }
        None => RawConfig::default(),
    };
    for assignment in &args.sets {
        raw.set(assignment).map_err(|e| e.to_string())?;
    }
    if let Some(seed) = args.seed {
        raw.set(&format!("run.seed={seed}")).expect("valid override");
    }
    let cfg = ExperimentConfig::from_raw(&raw).map_err(|e| e.to_string())?;
    let table =
        experiment::run_experiment(&args.experiment, &cfg).map_err(|e| e.to_string())?;
    match &args.out {
        Some(path) => {
            let mut buf = Vec::new();
            experiment::emit_csv(&table, &mut buf).map_err(|e| e.to_string())?;
            fs::write(path, buf)
                .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            experiment::emit_csv(&table, &mut lock).map_err(|e| e.to_string())?;
            lock.flush().map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
