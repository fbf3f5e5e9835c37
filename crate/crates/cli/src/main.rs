//! `pluridisc`: batch runner binding scenario files to the envelope, thinness
//! and maximum-principle engines.
//!
//! Exit codes: 0 pass, 1 sandwich/reference violation or verdict mismatch,
//! 2 schema error, 3 engine error. Stdout carries only the summary table.

mod commands;
mod scenario;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{run_file, summary_csv, timing_log, Expect, Outcome, EXIT_ENGINE};
use scenario::EngineChoice;

#[derive(Parser)]
#[command(name = "pluridisc", version, about = "Disc envelopes, Perron oracle and thinness reports")]
struct Cli {
    /// Overrides the seed of every scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Envelope values at the probes from the disc search, the Perron oracle or both.
    Envelope {
        #[arg(long)]
        scenario: PathBuf,
        /// Defaults to the scenario's `engine` field.
        #[arg(long, value_enum)]
        engine: Option<EngineChoice>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Non-thinness certificate search and oracle verdict.
    Thinness {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximum-principle suite over (u, U) pairs.
    MaxPrinciple {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs every scenario in a directory, in file-name order.
    Suite {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Defaults to `<dir>/results`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn finish(outcomes: &[Outcome], out: &Path, summary_file: bool) -> ExitCode {
    let summary = summary_csv(outcomes);
    print!("{summary}");
    let written = fs::create_dir_all(out)
        .and_then(|_| fs::write(out.join("timing.log"), timing_log(outcomes)))
        .and_then(|_| if summary_file { fs::write(out.join("summary.csv"), &summary) } else { Ok(()) });
    if let Err(e) = written {
        eprintln!("error: {}: {e}", out.display());
        return ExitCode::from(EXIT_ENGINE as u8);
    }
    let code = outcomes.iter().map(|o| o.code).max().unwrap_or(0);
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Envelope { scenario, engine, out } => {
            let o = run_file(&scenario, Expect::Envelope(engine), cli.seed, &out);
            finish(&[o], &out, false)
        }
        Command::Thinness { scenario, out } => {
            let o = run_file(&scenario, Expect::Thinness, cli.seed, &out);
            finish(&[o], &out, false)
        }
        Command::MaxPrinciple { scenario, out } => {
            let o = run_file(&scenario, Expect::MaxPrinciple, cli.seed, &out);
            finish(&[o], &out, false)
        }
        Command::Suite { dir, jobs, out } => {
            let out = out.unwrap_or_else(|| dir.join("results"));
            match commands::run_suite_dir(&dir, &out, jobs, cli.seed) {
                Ok(outcomes) => finish(&outcomes, &out, true),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(commands::EXIT_SCHEMA as u8)
                }
            }
        }
    }
}
