use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use pkco::netsim::run;

mod analyze;
mod common;
mod figures;
mod run;
mod sweep;

use common::{describe, read_manifest, write_run, CliError};

/// Packet-coupled oscillator clock synchronisation simulator.
#[derive(Debug, Parser)]
#[command(name = "pkco", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario and write its trace and summary.
    Run(run::RunArgs),
    /// Re-run a scenario once per value of one parameter.
    Sweep(sweep::SweepArgs),
    /// Recompute the summary of an existing trace.
    Analyze(analyze::AnalyzeArgs),
    /// Regenerate a run from its manifest.json.
    Replay(ReplayArgs),
    /// Write per-cycle series for the bundled figure scenarios.
    Figures(figures::FiguresArgs),
    /// List the bundled scenarios.
    List,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    manifest: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

fn cmd_replay(args: &ReplayArgs) -> Result<(), CliError> {
    let mut manifest = read_manifest(&args.manifest)?;
    let scenario = manifest
        .scenario()
        .map_err(|e| common::config_error(&args.manifest.display().to_string(), e))?;
    let started = Instant::now();
    let output = run(&scenario)?;
    manifest.runtime_s = started.elapsed().as_secs_f64();
    let summary = write_run(&args.out, &scenario, &output, manifest)?;
    if !args.quiet {
        print!("{}", describe(&summary));
    }
    Ok(())
}

fn cmd_list() -> Result<(), CliError> {
    for (name, text) in pkco::scenarios::BUNDLED {
        let blurb = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .map(|l| l.trim_start_matches('#').trim())
            .collect::<Vec<_>>()
            .join(" ");
        println!("{name:<16} {blurb}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run::cmd_run(a),
        Command::Sweep(a) => sweep::cmd_sweep(a),
        Command::Analyze(a) => analyze::cmd_analyze(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Figures(a) => figures::cmd_figures(a),
        Command::List => cmd_list(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
