//! Scenario files shipped with the crate.

use crate::config::parse_scenario;
use crate::error::ConfigError;
use crate::netsim::ScenarioConfig;

/// `(name, TOML text)` for every bundled scenario.
pub const BUNDLED: &[(&str, &str)] = &[
    ("table1_nocomp", include_str!("../scenarios/table1_nocomp.toml")),
    ("table1_ffwd", include_str!("../scenarios/table1_ffwd.toml")),
    ("exp_nocomp", include_str!("../scenarios/exp_nocomp.toml")),
    ("exp_ticks", include_str!("../scenarios/exp_ticks.toml")),
    ("exp_skew", include_str!("../scenarios/exp_skew.toml")),
    ("slots5", include_str!("../scenarios/slots5.toml")),
    ("slots5_shared", include_str!("../scenarios/slots5_shared.toml")),
];

pub fn text(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load(name: &str) -> Option<Result<ScenarioConfig, ConfigError>> {
    text(name).map(parse_scenario)
}
