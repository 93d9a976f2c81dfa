//! Counter-based oscillator clock.
//!
//! A node's clock is a counter that grows with elapsed time, resets when it
//! reaches its threshold (a "firing") and carries a signed offset relative
//! to the ideal master clock. Two representations are supported:
//!
//! * [`Representation::Continuous`]: the phase is a real number of seconds.
//! * [`Representation::Ticks`]: the phase is a whole number of oscillator
//!   ticks. Sub-tick elapsed time is kept in a fractional accumulator so
//!   repeated short advances do not lose time, but reads and corrections
//!   only ever see whole ticks.

use serde::{Deserialize, Serialize};

use crate::delay::RngStream;
use crate::error::ConfigError;

/// Crystal frequency of the reference hardware (a 32.768 kHz watch crystal).
pub const DEFAULT_NOMINAL_FREQUENCY: f64 = 32_768.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    #[default]
    Continuous,
    Ticks,
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Representation::Continuous => f.write_str("continuous"),
            Representation::Ticks => f.write_str("ticks"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockParams {
    /// Seconds per oscillator tick (1 / nominal frequency).
    pub tick_period: f64,
    /// Reset level of the counter, in seconds. One firing per threshold.
    pub threshold: f64,
    /// Ticks per synchronisation cycle.
    pub cycle_ticks: u64,
    /// Variance of the per-cycle offset noise, in seconds squared.
    pub offset_noise_variance: f64,
    /// Frequency error in parts per million.
    pub skew_ppm: f64,
}

impl ClockParams {
    /// A tick-accurate clock that resets every `cycle_ticks` ticks.
    pub fn ticks(nominal_frequency: f64, cycle_ticks: u64) -> Self {
        Self {
            tick_period: 1.0 / nominal_frequency,
            threshold: cycle_ticks as f64 / nominal_frequency,
            cycle_ticks,
            offset_noise_variance: 0.0,
            skew_ppm: 0.0,
        }
    }

    /// A clock with threshold `threshold` seconds on the default crystal.
    pub fn continuous(threshold: f64) -> Self {
        Self::with_threshold(threshold, DEFAULT_NOMINAL_FREQUENCY)
    }

    pub fn with_threshold(threshold: f64, nominal_frequency: f64) -> Self {
        Self {
            tick_period: 1.0 / nominal_frequency,
            threshold,
            cycle_ticks: ((threshold * nominal_frequency).round() as u64).max(1),
            offset_noise_variance: 0.0,
            skew_ppm: 0.0,
        }
    }

    pub fn noise(mut self, variance: f64) -> Self {
        self.offset_noise_variance = variance;
        self
    }

    pub fn skew(mut self, ppm: f64) -> Self {
        self.skew_ppm = ppm;
        self
    }

    pub fn nominal_frequency(&self) -> f64 {
        1.0 / self.tick_period
    }

    pub fn validate(&self, representation: Representation) -> Result<(), ConfigError> {
        if !(self.tick_period > 0.0 && self.tick_period.is_finite()) {
            return Err(ConfigError::invalid(
                "nominal_frequency",
                format!("must be positive, got {}", self.nominal_frequency()),
            ));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(ConfigError::invalid(
                "threshold",
                format!("must be positive, got {}", self.threshold),
            ));
        }
        if self.cycle_ticks == 0 {
            return Err(ConfigError::invalid("cycle_ticks", "must be at least 1"));
        }
        if representation == Representation::Ticks {
            let implied = self.cycle_ticks as f64 * self.tick_period;
            if (implied - self.threshold).abs() > 1e-9 * self.threshold {
                return Err(ConfigError::invalid(
                    "threshold",
                    format!(
                        "ticks mode needs a whole number of ticks per cycle: {} s is not a \
                         multiple of the {} s tick",
                        self.threshold, self.tick_period
                    ),
                ));
            }
        }
        if !(self.offset_noise_variance >= 0.0 && self.offset_noise_variance.is_finite()) {
            return Err(ConfigError::invalid(
                "offset_noise_variance",
                format!("must be a finite value >= 0, got {}", self.offset_noise_variance),
            ));
        }
        if !self.skew_ppm.is_finite() {
            return Err(ConfigError::invalid("skew_ppm", "must be finite"));
        }
        Ok(())
    }

    fn rate(&self) -> f64 {
        1.0 + self.skew_ppm * 1e-6
    }
}

/// Wraps `x` into `[-period/2, period/2)`.
pub fn wrap_signed(x: f64, period: f64) -> f64 {
    let half = 0.5 * period;
    if (-half..half).contains(&x) {
        return x;
    }
    let mut w = x - period * (x / period + 0.5).floor();
    if w >= half {
        w -= period;
    } else if w < -half {
        w += period;
    }
    w
}

/// Whole ticks on the counter, as a signed count in `[-m/2, m/2)`.
fn signed_ticks(count: u64, params: &ClockParams) -> i64 {
    let m = params.cycle_ticks as i64;
    let c = count as i64;
    if 2 * c >= m {
        c - m
    } else {
        c
    }
}

/// Wraps `x` into `[0, period)`.
fn wrap_phase(x: f64, period: f64) -> f64 {
    let w = x.rem_euclid(period);
    // a tiny negative input rounds up to `period`; it has not wrapped yet
    if w >= period {
        period.next_down()
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Counter {
    /// Phase kept signed in `[-threshold/2, threshold/2)`, so a clock just
    /// behind the master is a small negative number rather than a value
    /// just below the threshold, and keeps full precision.
    Continuous { signed: f64 },
    /// `residue` is the fraction of a tick elapsed since the last tick edge.
    Ticks { count: u64, residue: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockState {
    counter: Counter,
    offset: f64,
    cycle_index: u64,
}

impl ClockState {
    /// Clock observed at a master firing instant, when the master's phase is
    /// zero, so the slave's phase is its offset modulo the threshold.
    pub fn new(params: &ClockParams, representation: Representation, offset: f64) -> Self {
        let counter = match representation {
            Representation::Continuous => Counter::Continuous {
                signed: wrap_signed(offset, params.threshold),
            },
            Representation::Ticks => {
                let exact = wrap_phase(offset, params.threshold) / params.tick_period;
                let count = exact.floor();
                Counter::Ticks {
                    count: (count as u64) % params.cycle_ticks,
                    residue: exact - count,
                }
            }
        };
        Self {
            counter,
            offset: wrap_signed(offset, params.threshold),
            cycle_index: 0,
        }
    }

    pub fn representation(&self) -> Representation {
        match self.counter {
            Counter::Continuous { .. } => Representation::Continuous,
            Counter::Ticks { .. } => Representation::Ticks,
        }
    }

    /// Counter reading in seconds. In ticks mode this is a whole number of
    /// ticks; the sub-tick remainder is not observable.
    pub fn phase(&self, params: &ClockParams) -> f64 {
        match self.counter {
            Counter::Continuous { signed } => wrap_phase(signed, params.threshold),
            Counter::Ticks { count, .. } => count as f64 * params.tick_period,
        }
    }

    /// Phase including the sub-tick accumulator.
    pub fn exact_phase(&self, params: &ClockParams) -> f64 {
        match self.counter {
            Counter::Continuous { signed } => wrap_phase(signed, params.threshold),
            Counter::Ticks { count, residue } => (count as f64 + residue) * params.tick_period,
        }
    }

    /// [`phase`](Self::phase) mapped to `[-threshold/2, threshold/2)`.
    /// Exact in both representations.
    pub fn signed_phase(&self, params: &ClockParams) -> f64 {
        match self.counter {
            Counter::Continuous { signed } => signed,
            Counter::Ticks { count, .. } => signed_ticks(count, params) as f64 * params.tick_period,
        }
    }

    /// [`exact_phase`](Self::exact_phase) mapped to `[-threshold/2, threshold/2)`.
    pub fn exact_signed_phase(&self, params: &ClockParams) -> f64 {
        match self.counter {
            Counter::Continuous { signed } => signed,
            Counter::Ticks { count, residue } => {
                (signed_ticks(count, params) as f64 + residue) * params.tick_period
            }
        }
    }

    /// Whole ticks on the counter (ticks mode only).
    pub fn ticks(&self) -> Option<u64> {
        match self.counter {
            Counter::Continuous { .. } => None,
            Counter::Ticks { count, .. } => Some(count),
        }
    }

    /// Signed offset from the master, in `[-threshold/2, threshold/2)`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Number of firings since the clock was created.
    pub fn cycle_index(&self) -> u64 {
        self.cycle_index
    }

    /// Lets `duration` seconds of reference time elapse. Returns the number
    /// of firings (threshold crossings) that occurred.
    pub fn advance(&mut self, params: &ClockParams, duration: f64) -> u64 {
        self.advance_parts(params, duration, 0.0)
    }

    /// Advances by `whole + adjust` without forming the sum first. Passing
    /// a full period as `whole` and a small negative `adjust` keeps the
    /// period's cancellation exact.
    pub fn advance_parts(&mut self, params: &ClockParams, whole: f64, adjust: f64) -> u64 {
        debug_assert!(whole + adjust >= 0.0, "negative advance {}", whole + adjust);
        let rate = params.rate();
        let (grown_whole, grown_adjust) = (whole * rate, adjust * rate);
        let firings = match &mut self.counter {
            Counter::Continuous { signed } => {
                let t = params.threshold;
                let before = *signed;
                let mut n = ((before + grown_whole + grown_adjust) / t).round();
                let mut after = (grown_whole - n * t) + grown_adjust + before;
                if after >= 0.5 * t {
                    after -= t;
                    n += 1.0;
                } else if after < -0.5 * t {
                    after += t;
                    n -= 1.0;
                }
                *signed = after;
                // threshold crossings of the unsigned phase
                let behind = |x: f64| if x < 0.0 { 1 } else { 0 };
                (n as i64 + behind(before) - behind(after)).max(0) as u64
            }
            Counter::Ticks { count, residue } => {
                let total = *residue + (grown_whole + grown_adjust) / params.tick_period;
                let whole = total.floor();
                *residue = total - whole;
                let ticks = *count + whole as u64;
                *count = ticks % params.cycle_ticks;
                ticks / params.cycle_ticks
            }
        };
        if params.skew_ppm != 0.0 {
            let drift = (grown_whole - whole) + (grown_adjust - adjust);
            self.offset = wrap_signed(self.offset + drift, params.threshold);
        }
        self.cycle_index += firings;
        firings
    }

    /// Shifts phase and offset together by `delta` seconds (no rounding).
    fn shift(&mut self, params: &ClockParams, delta: f64) {
        match &mut self.counter {
            Counter::Continuous { signed } => *signed = wrap_signed(*signed + delta, params.threshold),
            Counter::Ticks { count, residue } => {
                let exact = (*count as f64 + *residue + delta / params.tick_period)
                    .rem_euclid(params.cycle_ticks as f64);
                let whole = exact.floor();
                *count = (whole as u64) % params.cycle_ticks;
                *residue = exact - whole;
            }
        }
        self.offset = wrap_signed(self.offset + delta, params.threshold);
    }

    /// Adds one cycle's phase noise drawn from `rng`. Returns the draw.
    pub fn apply_offset_noise(&mut self, params: &ClockParams, rng: &mut RngStream) -> f64 {
        let omega = rng.gaussian(0.0, params.offset_noise_variance);
        if omega != 0.0 {
            self.shift(params, omega);
        }
        omega
    }

    /// Steps the clock back by `amount` seconds (offset and phase both
    /// decrease). In ticks mode `amount` is rounded to the nearest whole
    /// tick; the return value is the part of `amount` that was not applied.
    pub fn correct(&mut self, params: &ClockParams, amount: f64) -> f64 {
        match &mut self.counter {
            Counter::Continuous { signed } => {
                *signed = wrap_signed(*signed - amount, params.threshold);
                self.offset = wrap_signed(self.offset - amount, params.threshold);
                0.0
            }
            Counter::Ticks { count, .. } => {
                let steps = (amount / params.tick_period).round() as i64;
                let m = params.cycle_ticks as i64;
                *count = (*count as i64 - steps).rem_euclid(m) as u64;
                let applied = steps as f64 * params.tick_period;
                self.offset = wrap_signed(self.offset - applied, params.threshold);
                amount - applied
            }
        }
    }
}
