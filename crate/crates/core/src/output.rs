//! On-disk artifacts: the per-cycle trace CSV, the JSON run summary and the
//! run manifest that makes every trace reproducible.
//!
//! Floats are written in shortest round-trip form, so reading a trace back
//! yields bit-identical records.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{NodeSummary, SweepParam};
use crate::config::parse_scenario;
use crate::error::{ConfigError, TraceError};
use crate::netsim::{CycleRecord, ScenarioConfig};

/// Column names of the trace CSV, in order.
pub const TRACE_COLUMNS: [&str; 11] = [
    "cycle",
    "node_id",
    "kappa_s",
    "eta_s",
    "timestamp_s",
    "offset_est_s",
    "u_s",
    "offset_after_s",
    "fire_rel_s",
    "delta_s",
    "collided",
];

#[derive(Serialize, Deserialize)]
struct TraceRow {
    cycle: u64,
    node_id: u32,
    kappa_s: f64,
    eta_s: f64,
    timestamp_s: f64,
    offset_est_s: f64,
    u_s: f64,
    offset_after_s: f64,
    fire_rel_s: f64,
    delta_s: f64,
    collided: bool,
}

impl From<&CycleRecord> for TraceRow {
    fn from(r: &CycleRecord) -> Self {
        Self {
            cycle: r.cycle,
            node_id: r.node_id,
            kappa_s: r.kappa_sample,
            eta_s: r.eta_sample,
            timestamp_s: r.timestamp,
            offset_est_s: r.offset_estimate,
            u_s: r.correction,
            offset_after_s: r.offset_after,
            fire_rel_s: r.fire_time_rel,
            delta_s: r.delta,
            collided: r.collided,
        }
    }
}

impl From<TraceRow> for CycleRecord {
    fn from(r: TraceRow) -> Self {
        Self {
            cycle: r.cycle,
            node_id: r.node_id,
            kappa_sample: r.kappa_s,
            eta_sample: r.eta_s,
            timestamp: r.timestamp_s,
            offset_estimate: r.offset_est_s,
            correction: r.u_s,
            offset_after: r.offset_after_s,
            fire_time_rel: r.fire_rel_s,
            delta: r.delta_s,
            collided: r.collided,
        }
    }
}

fn csv_error(e: csv::Error) -> TraceError {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => TraceError::Io(io),
        csv::ErrorKind::Deserialize { err, .. } => TraceError::Malformed {
            row,
            message: match err.field() {
                Some(i) => format!(
                    "column `{}`: {}",
                    TRACE_COLUMNS.get(i as usize).unwrap_or(&"?"),
                    err.kind()
                ),
                None => err.kind().to_string(),
            },
        },
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => TraceError::Malformed {
            row,
            message: format!("expected {expected_len} fields, found {len}"),
        },
        other => TraceError::Malformed {
            row,
            message: format!("{other:?}"),
        },
    }
}

pub fn write_trace<W: Write>(writer: W, records: &[CycleRecord]) -> Result<(), TraceError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(TRACE_COLUMNS).map_err(csv_error)?;
    for r in records {
        w.serialize(TraceRow::from(r)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn trace_to_string(records: &[CycleRecord]) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, records).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("trace is ASCII")
}

/// Parses a trace. Errors carry the 1-based line number in the file.
pub fn read_trace<R: Read>(reader: R) -> Result<Vec<CycleRecord>, TraceError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = r.headers().map_err(csv_error)?.clone();
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(TraceError::Header {
            expected: TRACE_COLUMNS.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    r.deserialize::<TraceRow>()
        .map(|row| row.map(CycleRecord::from).map_err(csv_error))
        .collect()
}

pub fn save_trace(path: &Path, records: &[CycleRecord]) -> Result<(), TraceError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_trace(file, records)
}

pub fn load_trace(path: &Path) -> Result<Vec<CycleRecord>, TraceError> {
    read_trace(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// A single parameter override applied on top of the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOverride {
    pub param: String,
    pub value: f64,
}

/// Everything needed to regenerate a run: the scenario text exactly as
/// loaded plus the command-line overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub scenario_path: Option<String>,
    pub scenario: String,
    pub seed: u64,
    pub num_cycles: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepOverride>,
    pub config: String,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub runtime_s: f64,
}

impl RunManifest {
    /// A manifest for `scenario`, which must have been parsed from
    /// `config` and then had its seed and cycle count overridden.
    pub fn new(config: impl Into<String>, scenario_path: Option<String>, scenario: &ScenarioConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            scenario_path,
            scenario: scenario.name.clone(),
            seed: scenario.seed,
            num_cycles: scenario.num_cycles,
            sweep: None,
            config: config.into(),
            outputs: Vec::new(),
            runtime_s: 0.0,
        }
    }

    /// Rebuilds the scenario the run used.
    pub fn scenario(&self) -> Result<ScenarioConfig, ConfigError> {
        let mut scenario = parse_scenario(&self.config)?;
        if let Some(sweep) = &self.sweep {
            let param: SweepParam = sweep
                .param
                .parse()
                .map_err(|m: String| ConfigError::invalid("manifest.sweep.param", m))?;
            param.apply(&mut scenario, sweep.value);
        }
        scenario.seed = self.seed;
        scenario.num_cycles = self.num_cycles;
        scenario.validate()?;
        Ok(scenario)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryJson {
    pub eigenvalue: f64,
    pub asymptote_s: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub converged: bool,
    pub settling_cycle: Option<u64>,
    pub steady_mean_s: f64,
    pub steady_std_s: f64,
    pub max_abs_delta_s: f64,
    pub collision_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeJson {
    pub theory: TheoryJson,
    pub report: ReportJson,
}

impl From<&NodeSummary> for NodeJson {
    fn from(s: &NodeSummary) -> Self {
        Self {
            theory: TheoryJson {
                eigenvalue: s.theory.eigenvalue,
                asymptote_s: s.theory.asymptote,
                stable: s.theory.stable,
            },
            report: ReportJson {
                converged: s.report.converged,
                settling_cycle: s.report.settling_cycle,
                steady_mean_s: s.report.steady_mean,
                steady_std_s: s.report.steady_std,
                max_abs_delta_s: s.report.max_abs_delta,
                collision_count: s.report.collision_count,
            },
        }
    }
}

/// The JSON summary written next to every trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub per_node: BTreeMap<u32, NodeJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

impl RunSummary {
    pub fn new(scenario: &ScenarioConfig, nodes: &[NodeSummary], manifest: Option<RunManifest>) -> Self {
        Self {
            scenario: scenario.name.clone(),
            seed: scenario.seed,
            per_node: nodes.iter().map(|n| (n.node_id, NodeJson::from(n))).collect(),
            manifest,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary is always serialisable")
    }
}
