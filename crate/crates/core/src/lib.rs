//! Simulation and analysis of packet-coupled oscillator clock
//! synchronisation with proportional correction, feedforward delay
//! compensation and slot scheduling.

pub mod analysis;
pub mod clock;
pub mod config;
pub mod control;
pub mod delay;
pub mod error;
pub mod exec;
pub mod netsim;
pub mod output;
pub mod scenarios;

pub use clock::{ClockParams, ClockState, Representation};
pub use control::{ControlLaw, ControllerConfig, Feedforward, TheoryPrediction};
pub use delay::{DelayModel, NoiseSource, RngStream};
pub use error::{AnalysisError, ConfigError, SimError, TraceError};
pub use netsim::{CycleRecord, NodeConfig, RunOutput, ScenarioConfig, Simulation};
pub use output::{RunManifest, RunSummary};
