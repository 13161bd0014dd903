use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ris_secrecy::harness::{
    figure_preset, load_config, run_sweeps, run_sweeps_with_threads, validate, SweepResult,
    SweepSpec,
};
use ris_secrecy::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(
    name = "ris-secrecy",
    version,
    about = "Secrecy outage workbench for RIS-assisted MISO links under EMI"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a JSON config and write a CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the Monte Carlo trials per point (0 = analytic only).
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run every curve of a built-in figure preset.
    Figure {
        /// 2a, 2b, 2c or 3
        name: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the built-in oracle checks.
    Validate {
        /// Also write the JSON report to this file.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn override_specs(specs: &mut [SweepSpec], seed: Option<u64>, trials: Option<usize>) {
    for s in specs {
        if let Some(seed) = seed {
            s.seed = seed;
        }
        if let Some(t) = trials {
            s.trials = t;
        }
    }
}

fn sweep(specs: &[SweepSpec], threads: Option<usize>, out: &Path) -> Result<SweepResult, Error> {
    let result = match threads {
        Some(t) => run_sweeps_with_threads(specs, t)?,
        None => run_sweeps(specs)?,
    };
    result.save(out)?;
    Ok(result)
}

fn report(result: &SweepResult, out: &Path) {
    let errors = result.rows.iter().filter(|r| !r.error.is_empty()).count();
    let flagged = result.rows.iter().filter(|r| r.flag).count();
    eprintln!(
        "wrote {} rows to {} ({} with errors, {} flagged)",
        result.rows.len(),
        out.display(),
        errors,
        flagged
    );
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Io(_) => ExitCode::FAILURE,
        _ => ExitCode::from(EXIT_CONFIG),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            trials,
            threads,
        } => {
            let mut spec = match load_config(&config) {
                Ok(s) => s,
                Err(e) => return exit_for(&e),
            };
            override_specs(std::slice::from_mut(&mut spec), seed, trials);
            match sweep(&[spec], threads, &out) {
                Ok(r) => {
                    report(&r, &out);
                    ExitCode::SUCCESS
                }
                Err(e) => exit_for(&e),
            }
        }
        Command::Figure {
            name,
            out,
            seed,
            trials,
            threads,
        } => {
            let mut specs = match figure_preset(&name) {
                Ok(s) => s,
                Err(e) => return exit_for(&e),
            };
            override_specs(&mut specs, seed, trials);
            match sweep(&specs, threads, &out) {
                Ok(r) => {
                    report(&r, &out);
                    ExitCode::SUCCESS
                }
                Err(e) => exit_for(&e),
            }
        }
        Command::Validate { json } => {
            let r = validate();
            let text = r.to_json();
            if let Some(path) = json {
                if let Err(e) = std::fs::write(&path, &text) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::FAILURE;
                }
            }
            for c in &r.checks {
                println!(
                    "{:<22} {}  ({:.2}s)",
                    c.name,
                    if c.passed { "PASS" } else { "FAIL" },
                    c.seconds
                );
            }
            if let Some(w) = &r.moment_variant_winner {
                println!("moment variant: {w}");
            }
            if r.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VALIDATION)
            }
        }
    }
}
