use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use pkco::netsim::run;
use pkco::output::RunManifest;

use crate::common::{describe, prepare, write_run, CliError, ScenarioSource};

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: ScenarioSource,
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of cycles.
    #[arg(long)]
    pub cycles: Option<u64>,
    /// Output directory for trace.csv, summary.json and manifest.json.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Reject gains outside the stable region instead of warning.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub quiet: bool,
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let mut loaded = args.source.load()?;
    for warning in prepare(&mut loaded, args.seed, args.cycles, args.strict)? {
        eprintln!("warning: {warning}");
    }
    let scenario = &loaded.scenario;

    let started = Instant::now();
    let output = run(scenario)?;
    let mut manifest = RunManifest::new(loaded.text.clone(), Some(loaded.origin.clone()), scenario);
    manifest.runtime_s = started.elapsed().as_secs_f64();

    let summary = write_run(&args.out, scenario, &output, manifest)?;
    if !args.quiet {
        println!(
            "{}: {} cycles, seed {}, written to {}",
            scenario.name,
            scenario.num_cycles,
            scenario.seed,
            args.out.display()
        );
        print!("{}", describe(&summary));
    }
    Ok(())
}
