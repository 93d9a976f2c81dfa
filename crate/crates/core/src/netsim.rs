//! Cycle-by-cycle simulation of one ideal master and a set of slaves.
//!
//! Within cycle `k` every slave goes through the same sequence of events,
//! all times relative to the master firing at `t_k = k * T`:
//!
//! 1. the master fires and broadcasts Sync;
//! 2. the slave receives it after the exchange delay and reads its counter;
//! 3. the offset estimate is formed from that timestamp;
//! 4. after the processing delay the correction is written to the clock;
//! 5. the cycle's phase noise is applied;
//! 6. the slave fires when its counter next wraps, which is compared with the
//!    master's next firing to give the precision metric and collision flags.

use serde::{Deserialize, Serialize};

use crate::clock::{wrap_signed, ClockParams, ClockState, Representation};
use crate::control::{estimate_offset_signed, predict, ControlLaw, ControllerConfig, TheoryPrediction};
use crate::delay::{DelayModel, NoiseSource, RngStream};
use crate::error::{ConfigError, SimError};

/// One packet airtime.
pub const DEFAULT_GUARD_WINDOW: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub node_id: u32,
    pub clock: ClockParams,
    pub kappa: DelayModel,
    pub eta: DelayModel,
    pub controller: ControllerConfig,
    /// Offset at time zero, in seconds.
    pub initial_offset: f64,
}

impl NodeConfig {
    pub fn new(node_id: u32, clock: ClockParams, controller: ControllerConfig) -> Self {
        Self {
            node_id,
            clock,
            kappa: DelayModel::fixed(0.0),
            eta: DelayModel::fixed(0.0),
            controller,
            initial_offset: 0.0,
        }
    }

    pub fn delays(mut self, kappa: DelayModel, eta: DelayModel) -> Self {
        self.kappa = kappa;
        self.eta = eta;
        self
    }

    pub fn initial_offset(mut self, offset: f64) -> Self {
        self.initial_offset = offset;
        self
    }

    pub fn prediction(&self) -> TheoryPrediction {
        predict(&self.controller, self.kappa.mean, self.eta.mean)
    }

    pub fn law(&self) -> ControlLaw {
        self.controller.law(self.kappa.mean, self.eta.mean)
    }

    pub fn estimator_kappa(&self) -> f64 {
        self.controller.estimator_kappa_or(self.kappa.mean)
    }

    fn validate(&self, mode: Representation) -> Result<(), ConfigError> {
        self.clock.validate(mode)?;
        self.kappa.validate().map_err(|e| e.within("kappa"))?;
        self.eta.validate().map_err(|e| e.within("eta"))?;
        self.controller
            .validate(self.clock.threshold)
            .map_err(|e| e.within("controller"))?;
        if !(self.initial_offset.is_finite() && self.initial_offset.abs() < self.clock.threshold) {
            return Err(ConfigError::invalid(
                "initial_offset",
                format!(
                    "|initial_offset| must be below the threshold {} s, got {}",
                    self.clock.threshold, self.initial_offset
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    /// Slaves, in any order; the simulation processes them by node id.
    pub nodes: Vec<NodeConfig>,
    pub cycle_period: f64,
    pub num_cycles: u64,
    pub seed: u64,
    pub mode: Representation,
    /// Firings closer than this collide.
    pub guard_window: f64,
    /// Also flag slaves that fire within the guard window of the master.
    pub master_collisions: bool,
}

impl ScenarioConfig {
    pub fn new(name: impl Into<String>, cycle_period: f64, num_cycles: u64) -> Self {
        Self {
            name: name.into(),
            nodes: Vec::new(),
            cycle_period,
            num_cycles,
            seed: 0,
            mode: Representation::Continuous,
            guard_window: DEFAULT_GUARD_WINDOW,
            master_collisions: true,
        }
    }

    pub fn node(mut self, node: NodeConfig) -> Self {
        self.nodes.push(node);
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn mode(mut self, mode: Representation) -> Self {
        self.mode = mode;
        self
    }

    pub fn node_config(&self, node_id: u32) -> Option<&NodeConfig> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let scenario = |e: ConfigError| e.within("scenario");
        if !(self.cycle_period > 0.0 && self.cycle_period.is_finite()) {
            return Err(scenario(ConfigError::invalid("cycle_period", "must be positive")));
        }
        if self.num_cycles == 0 {
            return Err(scenario(ConfigError::invalid("num_cycles", "must be at least 1")));
        }
        if !(self.guard_window >= 0.0 && self.guard_window.is_finite()) {
            return Err(scenario(ConfigError::invalid(
                "guard_window",
                format!("must be a finite value >= 0, got {}", self.guard_window),
            )));
        }
        if self.nodes.is_empty() {
            return Err(ConfigError::invalid(
                "node",
                "at least one slave node is required",
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for node in &self.nodes {
            let path = format!("node.{}", node.node_id);
            if !seen.insert(node.node_id) {
                return Err(ConfigError::invalid(path, "duplicate node id"));
            }
            node.validate(self.mode).map_err(|e| e.within(&path))?;
            let threshold = node.clock.threshold;
            if (threshold - self.cycle_period).abs() > 1e-9 * self.cycle_period {
                return Err(ConfigError::invalid(
                    format!("{path}.threshold"),
                    format!(
                        "clock threshold {threshold} s must equal the cycle period {} s",
                        self.cycle_period
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Everything observed for one slave in one cycle. Times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: u64,
    pub node_id: u32,
    pub kappa_sample: f64,
    pub eta_sample: f64,
    /// Counter reading on Sync reception.
    pub timestamp: f64,
    pub offset_estimate: f64,
    /// Control input `u`; the offset grows by this amount.
    pub correction: f64,
    /// Offset after correction and noise, wrapped to half a cycle.
    pub offset_after: f64,
    /// Slave firing time minus the master's next firing, wrapped to the
    /// nearest cycle.
    pub fire_time_rel: f64,
    pub delta: f64,
    pub collided: bool,
}

/// Precision of a slave firing against its allotted slot: master firing
/// time, minus the slot, minus the slave firing time.
pub fn delta_metric(master_fire: f64, slot: f64, slave_fire: f64) -> f64 {
    master_fire - slot - slave_fire
}

#[derive(Debug, Clone)]
struct Streams {
    noise: RngStream,
    kappa: RngStream,
    eta: RngStream,
}

impl Streams {
    fn new(seed: u64, node_id: u32) -> Self {
        Self {
            noise: RngStream::for_node(seed, node_id, NoiseSource::OffsetNoise),
            kappa: RngStream::for_node(seed, node_id, NoiseSource::Kappa),
            eta: RngStream::for_node(seed, node_id, NoiseSource::Eta),
        }
    }
}

#[derive(Debug, Clone)]
struct Slave {
    config: NodeConfig,
    law: ControlLaw,
    estimator_kappa: f64,
    state: ClockState,
    streams: Streams,
}

/// A scenario in progress.
#[derive(Debug, Clone)]
pub struct Simulation {
    period: f64,
    num_cycles: u64,
    guard_window: f64,
    master_collisions: bool,
    slaves: Vec<Slave>,
    next_cycle: u64,
}

impl Simulation {
    pub fn new(scenario: &ScenarioConfig) -> Result<Self, ConfigError> {
        let states = scenario
            .nodes
            .iter()
            .map(|n| {
                (
                    n.node_id,
                    ClockState::new(&n.clock, scenario.mode, n.initial_offset),
                )
            })
            .collect::<Vec<_>>();
        Self::from_states(scenario, &states)
    }

    /// Continues from previously returned clock states. Random streams are
    /// reseeded from the scenario seed.
    pub fn from_states(scenario: &ScenarioConfig, states: &[(u32, ClockState)]) -> Result<Self, ConfigError> {
        scenario.validate()?;
        let mut nodes = scenario.nodes.clone();
        nodes.sort_by_key(|n| n.node_id);
        let slaves = nodes
            .into_iter()
            .map(|config| {
                let state = states
                    .iter()
                    .find(|(id, _)| *id == config.node_id)
                    .map(|(_, s)| *s)
                    .ok_or_else(|| {
                        ConfigError::invalid(format!("node.{}", config.node_id), "no clock state")
                    })?;
                Ok(Slave {
                    law: config.law(),
                    estimator_kappa: config.estimator_kappa(),
                    streams: Streams::new(scenario.seed, config.node_id),
                    state,
                    config,
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Ok(Self {
            period: scenario.cycle_period,
            num_cycles: scenario.num_cycles,
            guard_window: scenario.guard_window,
            master_collisions: scenario.master_collisions,
            slaves,
            next_cycle: 0,
        })
    }

    pub fn next_cycle(&self) -> u64 {
        self.next_cycle
    }

    pub fn is_finished(&self) -> bool {
        self.next_cycle >= self.num_cycles
    }

    pub fn states(&self) -> Vec<(u32, ClockState)> {
        self.slaves.iter().map(|s| (s.config.node_id, s.state)).collect()
    }

    /// Runs one synchronisation cycle for every slave. Records come back in
    /// node-id order.
    pub fn step_cycle(&mut self) -> Result<Vec<CycleRecord>, SimError> {
        let cycle = self.next_cycle;
        if cycle >= self.num_cycles {
            return Err(SimError::PastEnd {
                cycle,
                num_cycles: self.num_cycles,
            });
        }
        let period = self.period;
        let mut records = Vec::with_capacity(self.slaves.len());
        for slave in &mut self.slaves {
            let clock = &slave.config.clock;
            let kappa = slave.config.kappa.sample(&mut slave.streams.kappa);
            let eta = slave.config.eta.sample(&mut slave.streams.eta);
            if kappa + eta >= period {
                return Err(SimError::Spillover {
                    cycle,
                    node_id: slave.config.node_id,
                    kappa,
                    eta,
                    period,
                });
            }

            slave.state.advance(clock, kappa);
            let timestamp = slave.state.phase(clock);
            let offset_estimate = estimate_offset_signed(
                slave.state.signed_phase(clock),
                clock.threshold,
                slave.estimator_kappa,
            );

            slave.state.advance(clock, eta);
            let correction = slave.law.control_input(offset_estimate, eta);
            slave.state.correct(clock, -correction);
            slave.state.apply_offset_noise(clock, &mut slave.streams.noise);

            // Firing instant relative to the master's next firing. A clock
            // behind the master (negative phase) fires after -phase; one
            // ahead fires after threshold - phase.
            let rate = 1.0 + clock.skew_ppm * 1e-6;
            let phase = slave.state.exact_signed_phase(clock);
            let fire_time_rel = if phase < 0.0 {
                wrap_signed(kappa + eta - phase / rate, period)
            } else {
                wrap_signed(kappa + eta + (clock.threshold - phase) / rate - period, period)
            };
            let delta = delta_metric(0.0, slave.law.slot_reference, fire_time_rel);

            slave.state.advance_parts(clock, period, -(kappa + eta));

            records.push(CycleRecord {
                cycle,
                node_id: slave.config.node_id,
                kappa_sample: kappa,
                eta_sample: eta,
                timestamp,
                offset_estimate,
                correction,
                offset_after: slave.state.offset(),
                fire_time_rel,
                delta,
                collided: false,
            });
        }
        self.flag_collisions(&mut records);
        self.next_cycle += 1;
        Ok(records)
    }

    fn flag_collisions(&self, records: &mut [CycleRecord]) {
        let guard = self.guard_window;
        let period = self.period;
        let close = |a: f64, b: f64| wrap_signed(a - b, period).abs() < guard;
        for i in 0..records.len() {
            if self.master_collisions && close(records[i].fire_time_rel, 0.0) {
                records[i].collided = true;
            }
            for j in (i + 1)..records.len() {
                if close(records[i].fire_time_rel, records[j].fire_time_rel) {
                    records[i].collided = true;
                    records[j].collided = true;
                }
            }
        }
    }

    pub fn run_to_end(mut self) -> Result<RunOutput, SimError> {
        let remaining = self.num_cycles.saturating_sub(self.next_cycle) as usize;
        let mut records = Vec::with_capacity(remaining * self.slaves.len());
        while !self.is_finished() {
            records.extend(self.step_cycle()?);
        }
        Ok(RunOutput {
            records,
            final_states: self.states(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Ordered by (cycle, node id).
    pub records: Vec<CycleRecord>,
    pub final_states: Vec<(u32, ClockState)>,
}

impl RunOutput {
    pub fn node_records(&self, node_id: u32) -> Vec<CycleRecord> {
        self.records
            .iter()
            .filter(|r| r.node_id == node_id)
            .copied()
            .collect()
    }
}

/// Runs a scenario from its initial offsets to the configured cycle count.
pub fn run(scenario: &ScenarioConfig) -> Result<RunOutput, SimError> {
    Simulation::new(scenario)?.run_to_end()
}
