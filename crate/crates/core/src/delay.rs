//! Gaussian delay models and the seeded random streams that drive them.
//!
//! Every random quantity in a simulation (offset noise, exchange delay,
//! processing delay) is drawn from its own [`RngStream`], keyed by the
//! scenario seed and a stream id derived from the node and the noise source.
//! Adding a node therefore never perturbs another node's sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Independent noise sources attached to a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseSource {
    OffsetNoise,
    Kappa,
    Eta,
}

impl NoiseSource {
    const COUNT: u64 = 3;

    fn index(self) -> u64 {
        match self {
            NoiseSource::OffsetNoise => 0,
            NoiseSource::Kappa => 1,
            NoiseSource::Eta => 2,
        }
    }

    /// Stream id for this source on `node_id`.
    pub fn stream_id(self, node_id: u32) -> u64 {
        u64::from(node_id) * Self::COUNT + self.index()
    }
}

/// A reproducible stream of random numbers.
///
/// Backed by ChaCha8 with the stream id selecting one of 2^64 disjoint
/// keystreams, so `(seed, stream_id)` gives the same sequence on every
/// platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn for_node(seed: u64, node_id: u32, source: NoiseSource) -> Self {
        Self::new(seed, source.stream_id(node_id))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// One draw from the standard normal distribution.
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// One draw from N(mean, variance). Always consumes exactly one normal
    /// variate, even when `variance` is zero.
    pub fn gaussian(&mut self, mean: f64, variance: f64) -> f64 {
        let z = self.standard_normal();
        mean + variance.sqrt() * z
    }
}

/// Gaussian delay with a lower truncation floor, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayModel {
    pub mean: f64,
    #[serde(default)]
    pub variance: f64,
    #[serde(default)]
    pub floor: f64,
}

impl DelayModel {
    pub fn new(mean: f64, variance: f64, floor: f64) -> Result<Self, ConfigError> {
        let model = Self {
            mean,
            variance,
            floor,
        };
        model.validate()?;
        Ok(model)
    }

    /// A delay that is always exactly `mean`.
    pub fn fixed(mean: f64) -> Self {
        Self {
            mean,
            variance: 0.0,
            floor: 0.0,
        }
    }

    pub fn gaussian(mean: f64, variance: f64) -> Self {
        Self {
            mean,
            variance,
            floor: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.variance >= 0.0 && self.variance.is_finite()) {
            return Err(ConfigError::invalid(
                "variance",
                format!("must be a finite value >= 0, got {}", self.variance),
            ));
        }
        if !(self.floor >= 0.0 && self.floor.is_finite()) {
            return Err(ConfigError::invalid(
                "floor",
                format!("must be a finite value >= 0, got {}", self.floor),
            ));
        }
        if !(self.mean >= self.floor && self.mean.is_finite()) {
            return Err(ConfigError::invalid(
                "mean",
                format!("must be finite and >= floor ({}), got {}", self.floor, self.mean),
            ));
        }
        Ok(())
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// Draws one delay, truncated below at `floor`.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        rng.gaussian(self.mean, self.variance).max(self.floor)
    }
}
