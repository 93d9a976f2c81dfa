use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use pkco::analysis::summarize;
use pkco::config::{check_gains, parse_scenario};
use pkco::output::{save_trace, RunManifest, RunSummary};
use pkco::{scenarios, ConfigError, RunOutput, ScenarioConfig, SimError, TraceError};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Failure of a subcommand, mapped to a process exit code.
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Config(String),
    Simulation(String),
    Trace(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 3,
            CliError::Simulation(_) => 4,
            CliError::Trace(_) => 5,
        }
    }

    pub fn io(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) | CliError::Config(m) | CliError::Simulation(m) | CliError::Trace(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => CliError::Config(c.to_string()),
            other => CliError::Simulation(other.to_string()),
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Trace(other.to_string()),
        }
    }
}

/// Where the scenario comes from: a file, or one of the bundled ones.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ScenarioSource {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Name of a bundled scenario (see `pkco list`).
    #[arg(long, value_name = "NAME")]
    pub scenario: Option<String>,
}

/// A parsed scenario together with the text it came from.
pub struct Loaded {
    pub scenario: ScenarioConfig,
    pub text: String,
    pub origin: String,
}

impl ScenarioSource {
    pub fn load(&self) -> Result<Loaded, CliError> {
        let (text, origin) = match (&self.config, &self.scenario) {
            (Some(path), _) => (
                std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?,
                path.display().to_string(),
            ),
            (None, Some(name)) => {
                let text = scenarios::text(name).ok_or_else(|| {
                    let known: Vec<&str> = scenarios::BUNDLED.iter().map(|(n, _)| *n).collect();
                    CliError::Config(format!(
                        "unknown bundled scenario `{name}` (available: {})",
                        known.join(", ")
                    ))
                })?;
                (text.to_string(), format!("bundled:{name}"))
            }
            (None, None) => unreachable!("clap enforces one scenario source"),
        };
        let scenario = parse_scenario(&text).map_err(|e| config_error(&origin, e))?;
        Ok(Loaded {
            scenario,
            text,
            origin,
        })
    }
}

pub fn config_error(origin: &str, e: ConfigError) -> CliError {
    CliError::Config(format!("{origin}: {e}"))
}

/// Applies `--seed` / `--cycles` and the gain check, returning warnings.
pub fn prepare(
    loaded: &mut Loaded,
    seed: Option<u64>,
    cycles: Option<u64>,
    strict: bool,
) -> Result<Vec<String>, CliError> {
    if let Some(seed) = seed {
        loaded.scenario.seed = seed;
    }
    if let Some(cycles) = cycles {
        loaded.scenario.num_cycles = cycles;
    }
    loaded
        .scenario
        .validate()
        .map_err(|e| config_error(&loaded.origin, e))?;
    check_gains(&loaded.scenario, strict).map_err(|e| config_error(&loaded.origin, e))
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path.display(), e))
}

pub fn manifest_json(manifest: &RunManifest) -> String {
    serde_json::to_string_pretty(manifest).expect("manifest is always serialisable")
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: not a run manifest: {e}", path.display())))
}

/// Writes trace, summary and manifest for one finished run into `dir`.
pub fn write_run(
    dir: &Path,
    scenario: &ScenarioConfig,
    output: &RunOutput,
    mut manifest: RunManifest,
) -> Result<RunSummary, CliError> {
    create_dir(dir)?;
    let trace = dir.join(TRACE_FILE);
    save_trace(&trace, &output.records)?;
    manifest.outputs = [TRACE_FILE, SUMMARY_FILE, MANIFEST_FILE]
        .iter()
        .map(|f| dir.join(f).display().to_string())
        .collect();
    write_text(&dir.join(MANIFEST_FILE), &manifest_json(&manifest))?;
    let summary = RunSummary::new(scenario, &summarize(scenario, output), Some(manifest));
    write_text(&dir.join(SUMMARY_FILE), &summary.to_json())?;
    Ok(summary)
}

/// One line per node, for humans.
pub fn describe(summary: &RunSummary) -> String {
    let mut out = String::new();
    for (id, node) in &summary.per_node {
        let settled = match node.report.settling_cycle {
            Some(k) => format!("settled at cycle {k}"),
            None => "not settled".to_string(),
        };
        out.push_str(&format!(
            "node {id}: theory {:.6e} s, steady mean {:.6e} s (sd {:.3e}), {settled}, \
             max |delta| {:.3e} s, {} collisions\n",
            node.theory.asymptote_s,
            node.report.steady_mean_s,
            node.report.steady_std_s,
            node.report.max_abs_delta_s,
            node.report.collision_count,
        ));
    }
    out
}
