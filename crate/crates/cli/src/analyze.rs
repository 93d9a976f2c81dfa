use std::path::PathBuf;

use clap::Args;
use pkco::analysis::summarize_records;
use pkco::config::parse_scenario;
use pkco::output::{load_trace, RunSummary};
use pkco::ScenarioConfig;

use crate::common::{config_error, read_manifest, write_text, CliError, MANIFEST_FILE};

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Trace CSV written by `pkco run`.
    pub trace: PathBuf,
    /// Scenario file the trace was produced from. Defaults to the
    /// manifest.json next to the trace.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Also write the summary JSON here.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
}

fn scenario_for(args: &AnalyzeArgs) -> Result<ScenarioConfig, CliError> {
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        let origin = path.display().to_string();
        return parse_scenario(&text).map_err(|e| config_error(&origin, e));
    }
    let sidecar = args
        .trace
        .parent()
        .map(|d| d.join(MANIFEST_FILE))
        .unwrap_or_else(|| PathBuf::from(MANIFEST_FILE));
    if !sidecar.exists() {
        return Err(CliError::Config(format!(
            "no {} next to {}; pass --config",
            MANIFEST_FILE,
            args.trace.display()
        )));
    }
    let manifest = read_manifest(&sidecar)?;
    manifest
        .scenario()
        .map_err(|e| config_error(&format!("{} (embedded config)", sidecar.display()), e))
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let records = load_trace(&args.trace).map_err(|e| match CliError::from(e) {
        CliError::Trace(m) => CliError::Trace(format!("{}: {m}", args.trace.display())),
        other => other,
    })?;
    if records.is_empty() {
        return Err(CliError::Trace(format!(
            "{}: trace has no rows",
            args.trace.display()
        )));
    }
    let scenario = scenario_for(args)?;
    if let Some(r) = records.iter().find(|r| scenario.node_config(r.node_id).is_none()) {
        return Err(CliError::Trace(format!(
            "{}: node {} is not in the scenario",
            args.trace.display(),
            r.node_id
        )));
    }
    let summary = RunSummary::new(&scenario, &summarize_records(&scenario, &records), None);
    let json = summary.to_json();
    if let Some(out) = &args.out {
        write_text(out, &json)?;
    }
    if !args.quiet {
        println!("{json}");
    }
    Ok(())
}
