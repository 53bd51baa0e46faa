//! `sbmlab`: runs one named experiment and writes its tables and manifest.
//!
//! Settings precedence, lowest first: experiment defaults, `--manifest`,
//! `--config`, `SBMLAB_*` environment variables, flags.
//!
//! Exit codes: 0 all verdicts pass, 2 some verdict fails, 3 some verdict is
//! indeterminate, 4 bad configuration, 5 I/O failure.

use std::process::ExitCode;

use clap::Parser;
use sbmlab::config;
use sbmlab::experiments::{self, error_exit_code, list_experiments, Experiment, ExperimentSpec};
use sbmlab::Error;
use sbmlab_cli::Cli;

fn run(cli: &Cli) -> Result<i32, Error> {
    if cli.list {
        for e in list_experiments() {
            println!("{:<18} {}\n{:<18} [{}]", e.name, e.description, "", e.anchor);
        }
        return Ok(0);
    }
    if let Some(name) = &cli.defaults {
        let e = Experiment::parse(name)?;
        for (k, v) in e.defaults() {
            println!("{k} = {v}");
        }
        return Ok(0);
    }
    let mut files = Vec::new();
    if let Some(path) = &cli.manifest {
        files.push(ExperimentSpec::from_manifest(path)?);
    }
    if let Some(path) = &cli.config {
        files.push(config::load_config(path)?);
    }
    let spec = experiments::resolve_layers(files, std::env::vars(), cli.flags()?)?;
    let artifact = experiments::run_experiment(&spec)?;
    for v in &artifact.verdicts {
        println!("{v}");
    }
    for (reason, n) in &artifact.manifest.discards {
        println!("discarded {n} ({reason})");
    }
    let code = artifact.exit_code();
    println!(
        "{}: {} in {:.2}s, outputs in {}",
        spec.experiment.name(),
        artifact.outcome(),
        artifact.manifest.wall_time_s,
        spec.out.display()
    );
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match run(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            error_exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
