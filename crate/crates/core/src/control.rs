//! Offset estimation, the proportional correction law with optional
//! feedforward delay compensation, and closed-form predictions of the
//! resulting closed loop.
//!
//! Per cycle the slave's offset evolves as
//!
//! ```text
//! offset[k+1]   = offset[k] + u[k] + noise[k]
//! estimate[k]   = offset[k] + kappa[k]
//! u[k]          = alpha * (slot - estimate[k]) - eta[k] + mu
//! ```
//!
//! which is a first-order loop with pole `1 - alpha` and fixed point
//! `slot - mean(kappa) - mean(eta) / alpha + mu / alpha`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("timestamp {timestamp} s outside [0, {threshold}) s")]
pub struct TimestampOutOfRange {
    pub timestamp: f64,
    pub threshold: f64,
}

/// How the feedforward magnitude is chosen when feedforward is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Feedforward {
    /// `alpha * mean(kappa) + mean(eta)`: puts the fixed point on the slot.
    #[default]
    SteadyState,
    /// `mean(eta) - alpha * mean(kappa)`. Leaves a `-2 * mean(kappa)`
    /// tracking error; kept for comparison runs.
    Printed,
    /// An explicit value in seconds.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    pub alpha: f64,
    /// Target offset `t_d` in seconds; staggers this node's firing.
    pub slot_reference: f64,
    pub feedforward_enabled: bool,
    pub feedforward: Feedforward,
    /// Exchange delay assumed by the wrap decision of the estimator. `None`
    /// means the node's mean exchange delay.
    pub estimator_kappa: Option<f64>,
}

impl ControllerConfig {
    pub fn proportional(alpha: f64) -> Self {
        Self {
            alpha,
            slot_reference: 0.0,
            feedforward_enabled: false,
            feedforward: Feedforward::SteadyState,
            estimator_kappa: None,
        }
    }

    /// Proportional law with steady-state feedforward tracking `slot`.
    pub fn compensated(alpha: f64, slot: f64) -> Self {
        Self {
            slot_reference: slot,
            feedforward_enabled: true,
            ..Self::proportional(alpha)
        }
    }

    pub fn with_feedforward(mut self, rule: Feedforward) -> Self {
        self.feedforward_enabled = true;
        self.feedforward = rule;
        self
    }

    pub fn with_slot(mut self, slot: f64) -> Self {
        self.slot_reference = slot;
        self
    }

    /// Whether the closed loop is asymptotically stable (`|1 - alpha| < 1`).
    pub fn is_stable(&self) -> bool {
        (1.0 - self.alpha).abs() < 1.0
    }

    /// Feedforward actually added to every correction (zero when disabled).
    pub fn mu(&self, kappa_mean: f64, eta_mean: f64) -> f64 {
        if !self.feedforward_enabled {
            return 0.0;
        }
        match self.feedforward {
            Feedforward::SteadyState => feedforward_term(self.alpha, kappa_mean, eta_mean),
            Feedforward::Printed => printed_feedforward_term(self.alpha, kappa_mean, eta_mean),
            Feedforward::Fixed(mu) => mu,
        }
    }

    pub fn estimator_kappa_or(&self, kappa_mean: f64) -> f64 {
        self.estimator_kappa.unwrap_or(kappa_mean)
    }

    /// Resolves the configuration against the node's mean delays.
    pub fn law(&self, kappa_mean: f64, eta_mean: f64) -> ControlLaw {
        ControlLaw {
            alpha: self.alpha,
            slot_reference: self.slot_reference,
            mu: self.mu(kappa_mean, eta_mean),
        }
    }

    /// Hard checks only. An unstable gain is accepted here; callers decide
    /// whether to warn or refuse.
    pub fn validate(&self, threshold: f64) -> Result<(), ConfigError> {
        if !self.alpha.is_finite() {
            return Err(ConfigError::invalid("alpha", "must be finite"));
        }
        if !(self.slot_reference >= 0.0 && self.slot_reference < threshold) {
            return Err(ConfigError::invalid(
                "slot_reference",
                format!(
                    "must lie in [0, {threshold}) s (the clock threshold), got {}",
                    self.slot_reference
                ),
            ));
        }
        if let Feedforward::Fixed(mu) = self.feedforward {
            if !mu.is_finite() {
                return Err(ConfigError::invalid("mu", "must be finite"));
            }
        }
        if let Some(k) = self.estimator_kappa {
            if !(k.is_finite() && k >= 0.0) {
                return Err(ConfigError::invalid(
                    "estimator_kappa",
                    format!("must be a finite value >= 0, got {k}"),
                ));
            }
        }
        Ok(())
    }
}

/// A controller with its feedforward resolved to a number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlLaw {
    pub alpha: f64,
    pub slot_reference: f64,
    pub mu: f64,
}

impl ControlLaw {
    /// Amount by which the offset should grow this cycle. `eta_actual` is the
    /// processing delay that really elapsed between timestamping and applying
    /// the correction.
    pub fn control_input(&self, offset_estimate: f64, eta_actual: f64) -> f64 {
        self.alpha * (self.slot_reference - offset_estimate) - eta_actual + self.mu
    }
}

/// Offset estimate from a local timestamp taken on reception of the master's
/// Sync. Timestamps past half a cycle (shifted by the expected exchange
/// delay) are read as a negative offset.
pub fn estimate_offset(
    timestamp: f64,
    threshold: f64,
    estimator_kappa: f64,
) -> Result<f64, TimestampOutOfRange> {
    if !(0.0..threshold).contains(&timestamp) {
        return Err(TimestampOutOfRange { timestamp, threshold });
    }
    if timestamp < 0.5 * threshold + estimator_kappa {
        Ok(timestamp)
    } else {
        Ok(timestamp - threshold)
    }
}

/// [`estimate_offset`] for a counter reading already mapped to
/// `[-threshold/2, threshold/2)`. Gives the same branch without ever
/// forming the unsigned reading, so small negative phases stay exact.
pub fn estimate_offset_signed(signed_timestamp: f64, threshold: f64, estimator_kappa: f64) -> f64 {
    if signed_timestamp < 0.0 && signed_timestamp + threshold < 0.5 * threshold + estimator_kappa {
        signed_timestamp + threshold
    } else {
        signed_timestamp
    }
}

/// Feedforward that cancels the mean delays: solving the fixed-point
/// condition `0 = alpha * (slot - slot - kappa) - eta + mu` gives
/// `mu = alpha * kappa + eta`.
pub fn feedforward_term(alpha: f64, kappa_mean: f64, eta_mean: f64) -> f64 {
    alpha * kappa_mean + eta_mean
}

/// `eta - alpha * kappa`, the alternative sign arrangement.
pub fn printed_feedforward_term(alpha: f64, kappa_mean: f64, eta_mean: f64) -> f64 {
    eta_mean - alpha * kappa_mean
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryPrediction {
    /// Closed-loop pole `1 - alpha`.
    pub eigenvalue: f64,
    /// Noise-free steady-state offset, in seconds.
    pub asymptote: f64,
    pub stable: bool,
    /// Gain from slot reference to offset at z = 1. alpha / (1 - (1 - alpha))
    /// cancels for any nonzero gain, so this is always 1.
    pub dc_gain: f64,
}

/// Closed-form behaviour of the loop under mean delays. Delay and noise
/// variances only widen the spread around the asymptote, so they do not
/// appear here.
pub fn predict(config: &ControllerConfig, kappa_mean: f64, eta_mean: f64) -> TheoryPrediction {
    let alpha = config.alpha;
    let eigenvalue = 1.0 - alpha;
    let mu = config.mu(kappa_mean, eta_mean);
    let asymptote = config.slot_reference - kappa_mean - eta_mean / alpha + mu / alpha;
    TheoryPrediction {
        eigenvalue,
        asymptote,
        stable: eigenvalue.abs() < 1.0,
        dc_gain: 1.0,
    }
}

/// Noise-free offset after `k` cycles starting from `theta0`.
pub fn expected_trajectory(
    config: &ControllerConfig,
    kappa_mean: f64,
    eta_mean: f64,
    theta0: f64,
    k: u64,
) -> f64 {
    let theta_inf = predict(config, kappa_mean, eta_mean).asymptote;
    let decay = match i32::try_from(k) {
        Ok(k) => (1.0 - config.alpha).powi(k),
        Err(_) => (1.0 - config.alpha).powf(k as f64),
    };
    theta_inf + decay * (theta0 - theta_inf)
}
