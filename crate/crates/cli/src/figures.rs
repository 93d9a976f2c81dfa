//! Plot-ready per-cycle series for the bundled scenarios.

use std::path::{Path, PathBuf};

use clap::Args;
use pkco::analysis::offset_series;
use pkco::netsim::run;
use pkco::output::RunManifest;
use pkco::{scenarios, RunOutput, ScenarioConfig};

use crate::common::{config_error, create_dir, manifest_json, write_text, CliError};

/// `(file stem, bundled scenario)` for each figure.
pub const FIGURES: [(&str, &str); 5] = [
    ("fig3_offset_nocomp", "table1_nocomp"),
    ("fig4_offset_ffwd", "table1_ffwd"),
    ("fig5_precision_skew", "exp_skew"),
    ("fig6_precision_ticks", "exp_ticks"),
    ("fig7_slots", "slots5"),
];

const COLUMNS: [&str; 6] = [
    "cycle",
    "node_id",
    "offset_s",
    "delta_s",
    "delta_ticks",
    "theory_s",
];

#[derive(Debug, Args)]
pub struct FiguresArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub quiet: bool,
}

fn write_series(path: &Path, scenario: &ScenarioConfig, output: &RunOutput) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::io(path.display(), e);
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(COLUMNS).map_err(io)?;
    let mut nodes: Vec<_> = scenario.nodes.iter().collect();
    nodes.sort_by_key(|n| n.node_id);
    for node in nodes {
        let records = output.node_records(node.node_id);
        let offsets = offset_series(&records);
        let theory = node.prediction().asymptote;
        for (r, offset) in records.iter().zip(&offsets) {
            w.write_record([
                r.cycle.to_string(),
                r.node_id.to_string(),
                offset.to_string(),
                r.delta.to_string(),
                (r.delta / node.clock.tick_period).to_string(),
                theory.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path.display(), e))
}

pub fn cmd_figures(args: &FiguresArgs) -> Result<(), CliError> {
    create_dir(&args.out)?;
    for (stem, name) in FIGURES {
        let text = scenarios::text(name).expect("figure scenarios are bundled");
        let origin = format!("bundled:{name}");
        let scenario = pkco::config::parse_scenario(text).map_err(|e| config_error(&origin, e))?;
        let output = run(&scenario)?;
        let csv_path = args.out.join(format!("{stem}.csv"));
        write_series(&csv_path, &scenario, &output)?;
        let mut manifest = RunManifest::new(text, Some(origin), &scenario);
        manifest.outputs = vec![csv_path.display().to_string()];
        write_text(
            &args.out.join(format!("{stem}.manifest.json")),
            &manifest_json(&manifest),
        )?;
        if !args.quiet {
            println!("{}", csv_path.display());
        }
    }
    Ok(())
}
