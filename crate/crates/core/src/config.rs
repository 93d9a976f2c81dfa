//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! [scenario]
//! name = "table1_nocomp"
//! cycle_period = 1.0        # seconds
//! num_cycles = 100
//! seed = 42
//! mode = "continuous"       # or "ticks"
//! guard_window = 1e-3       # optional
//! master_collisions = true  # optional
//!
//! [node.1]
//! initial_offset = 0.6
//! offset_noise_variance = 244.4990e-12
//! nominal_frequency = 32768.0   # optional, Hz
//! skew_ppm = 0.0                # optional
//!
//! [node.1.kappa]
//! mean = 349e-6
//! variance = 0.0            # optional
//! floor = 0.0               # optional
//!
//! [node.1.eta]
//! mean = 514e-6
//!
//! [node.1.controller]
//! alpha = 0.5
//! slot_reference = 0.0      # alias: t_d
//! feedforward_enabled = false
//! feedforward = "steady-state"  # or "printed"; ignored when `mu` is set
//! # mu = 6.885e-4
//! # estimator_kappa = 349e-6
//! ```

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::clock::{ClockParams, Representation, DEFAULT_NOMINAL_FREQUENCY};
use crate::control::{ControllerConfig, Feedforward};
use crate::delay::DelayModel;
use crate::error::ConfigError;
use crate::netsim::{NodeConfig, ScenarioConfig, DEFAULT_GUARD_WINDOW};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    scenario: ScenarioSection,
    #[serde(default)]
    node: BTreeMap<String, NodeSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    #[serde(default)]
    name: Option<String>,
    cycle_period: f64,
    num_cycles: u64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    mode: Representation,
    #[serde(default = "default_guard")]
    guard_window: f64,
    #[serde(default = "default_true")]
    master_collisions: bool,
}

fn default_guard() -> f64 {
    DEFAULT_GUARD_WINDOW
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeSection {
    #[serde(default)]
    initial_offset: f64,
    #[serde(default)]
    offset_noise_variance: f64,
    #[serde(default)]
    nominal_frequency: Option<f64>,
    #[serde(default)]
    skew_ppm: f64,
    kappa: DelayModel,
    eta: DelayModel,
    controller: ControllerSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerSection {
    alpha: f64,
    #[serde(default, alias = "t_d")]
    slot_reference: f64,
    #[serde(default)]
    feedforward_enabled: bool,
    #[serde(default)]
    feedforward: FeedforwardRule,
    #[serde(default)]
    mu: Option<f64>,
    #[serde(default)]
    estimator_kappa: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum FeedforwardRule {
    #[default]
    SteadyState,
    Printed,
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let file: File = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|span| line_of_offset(text, span.start));
        let field = line.and_then(|l| field_at_line(text, l)).unwrap_or_default();
        ConfigError::invalid(field, e.message().trim().to_string()).at_line(line)
    })?;
    build(file).and_then(|s| s.validate().map(|_| s)).map_err(|e| {
        let line = locate(text, &e.field);
        e.at_line(line)
    })
}

pub fn load_scenario(path: &std::path::Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::invalid("", format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text)
}

fn build(file: File) -> Result<ScenarioConfig, ConfigError> {
    let sc = file.scenario;
    let mut scenario = ScenarioConfig::new(
        sc.name.unwrap_or_else(|| "scenario".to_string()),
        sc.cycle_period,
        sc.num_cycles,
    );
    scenario.seed = sc.seed;
    scenario.mode = sc.mode;
    scenario.guard_window = sc.guard_window;
    scenario.master_collisions = sc.master_collisions;

    for (key, node) in file.node {
        let node_id: u32 = key.parse().map_err(|_| {
            ConfigError::invalid(
                format!("node.{key}"),
                "node sections must be named [node.<integer id>]",
            )
        })?;
        let path = format!("node.{key}");
        let frequency = node.nominal_frequency.unwrap_or(DEFAULT_NOMINAL_FREQUENCY);
        if !(frequency > 0.0 && frequency.is_finite()) {
            return Err(ConfigError::invalid(
                format!("{path}.nominal_frequency"),
                format!("must be positive, got {frequency}"),
            ));
        }
        let clock = match sc.mode {
            Representation::Continuous => ClockParams::with_threshold(sc.cycle_period, frequency),
            Representation::Ticks => {
                let ticks = (sc.cycle_period * frequency).round().max(1.0) as u64;
                ClockParams::ticks(frequency, ticks)
            }
        }
        .noise(node.offset_noise_variance)
        .skew(node.skew_ppm);

        let c = node.controller;
        let feedforward = match (c.mu, c.feedforward) {
            (Some(mu), _) => Feedforward::Fixed(mu),
            (None, FeedforwardRule::SteadyState) => Feedforward::SteadyState,
            (None, FeedforwardRule::Printed) => Feedforward::Printed,
        };
        let controller = ControllerConfig {
            alpha: c.alpha,
            slot_reference: c.slot_reference,
            feedforward_enabled: c.feedforward_enabled,
            feedforward,
            estimator_kappa: c.estimator_kappa,
        };
        scenario.nodes.push(
            NodeConfig::new(node_id, clock, controller)
                .delays(node.kappa, node.eta)
                .initial_offset(node.initial_offset),
        );
    }
    Ok(scenario)
}

/// Warnings for gains outside the stable region, or an error when `strict`.
pub fn check_gains(scenario: &ScenarioConfig, strict: bool) -> Result<Vec<String>, ConfigError> {
    let mut warnings = Vec::new();
    for node in &scenario.nodes {
        if !node.controller.is_stable() {
            let field = format!("node.{}.controller.alpha", node.node_id);
            let message = format!(
                "alpha = {} lies outside (0, 2); the loop is not asymptotically stable",
                node.controller.alpha
            );
            if strict {
                return Err(ConfigError::invalid(field, message));
            }
            warnings.push(format!("{field}: {message}"));
        }
    }
    Ok(warnings)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Dotted path of the `key = value` on 1-based `line`, qualified by the
/// nearest table header above it.
fn field_at_line(text: &str, line: usize) -> Option<String> {
    let lines: Vec<&str> = text.lines().take(line).collect();
    let (key, _) = lines.last()?.split_once('=')?;
    let key = key.trim().trim_matches('"');
    if key.is_empty() || key.starts_with('[') || key.starts_with('#') {
        return None;
    }
    let table = lines.iter().rev().map(|l| l.trim()).find(|l| l.starts_with('['));
    Some(match table {
        Some(t) => format!("{}.{key}", t.trim_matches(|c| c == '[' || c == ']').trim()),
        None => key.to_string(),
    })
}

/// Best-effort line number of a dotted field path in the source text.
fn locate(text: &str, field: &str) -> Option<usize> {
    let parts: Vec<&str> = field.split('.').filter(|p| !p.is_empty()).collect();
    let lines: Vec<&str> = text.lines().collect();
    let header_line = |section: &str| {
        lines.iter().position(|l| {
            let l = l.trim();
            l.starts_with('[') && l.trim_start_matches('[').trim_end_matches(']').trim() == section
        })
    };
    for split in (1..=parts.len()).rev() {
        let section = parts[..split].join(".");
        let Some(start) = header_line(&section) else {
            continue;
        };
        let Some(key) = parts.get(split) else {
            return Some(start + 1);
        };
        let keys: &[&str] = match *key {
            "slot_reference" => &["slot_reference", "t_d"],
            "mu" => &["mu", "feedforward"],
            "threshold" => &["nominal_frequency"],
            _ => std::slice::from_ref(key),
        };
        for (i, line) in lines.iter().enumerate().skip(start + 1) {
            let l = line.trim();
            if l.starts_with('[') {
                break;
            }
            let name = l.split('=').next().unwrap_or("").trim();
            if keys.contains(&name) {
                return Some(i + 1);
            }
        }
        return Some(start + 1);
    }
    None
}
