use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sublin_cli::{parse_config, run, write_outputs, Overrides, Subcommand};

/// Sub-linear expectation experiments and acceptance checks.
#[derive(Parser, Debug)]
#[command(name = "sublin", version)]
struct Cli {
    /// What to run; overrides the `subcommand` field of the config.
    #[arg(value_enum)]
    subcommand: Option<Subcommand>,
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Distribution as inline JSON (a law or a generator set).
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for report.json and CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `name=value` override of a parameter, as a dotted path.
    #[arg(long = "tolerance", value_name = "NAME=VALUE")]
    tolerances: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let text = match cli.config.as_ref().map(fs::read_to_string).transpose() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read config: {e}");
            return ExitCode::from(1);
        }
    };
    let ov = Overrides {
        subcommand: cli.subcommand,
        dist: cli.dist,
        seed: cli.seed,
        threads: cli.threads,
        out: cli.out,
        tolerances: cli.tolerances,
    };
    let resolved = match parse_config(text.as_deref(), &ov) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let outcome = match run(&resolved) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    for line in &outcome.summary {
        println!("{line}");
    }
    if let Some(dir) = &resolved.config.out {
        if let Err(e) = write_outputs(&outcome, dir) {
            eprintln!("error: cannot write outputs: {e}");
            return ExitCode::from(1);
        }
        println!("report written to {}", dir.join("report.json").display());
    }
    if let Some(err) = &outcome.report.error {
        eprintln!("error: {err}");
    }
    ExitCode::from(outcome.report.exit_code() as u8)
}
