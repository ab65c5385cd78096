//! Fiber path and local-oscillator phase drift, loss, delay, and taps.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::phasespace::{canonical_phase, GlauberState, PhaseShiftGate};

/// Group velocity in silica fiber.
pub const FIBER_LIGHT_SPEED_KM_PER_S: f64 = 2.0e5;

fn random_walk_step<R: Rng + ?Sized>(phase: f64, sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        return phase;
    }
    let step = Normal::new(0.0, sigma).expect("finite sigma").sample(rng);
    canonical_phase(phase + step)
}

/// The optical path between Bob and Alice.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    /// φ_p: phase accumulated over one full roundtrip of the path.
    pub phase: f64,
    pub drift_step_sigma: f64,
    pub length_km: f64,
    pub attenuation_db_per_km: f64,
    pub excess_delay_s: f64,
    /// Std of per-roundtrip delay noise.
    pub delay_jitter_s: f64,
    /// Accumulate φ_p on each leg instead of once per roundtrip.
    pub double_pass_phase: bool,
}

impl Default for PathState {
    fn default() -> Self {
        Self {
            phase: 0.0,
            drift_step_sigma: 0.1f64.to_radians(),
            length_km: 10.0,
            attenuation_db_per_km: 0.2,
            excess_delay_s: 0.0,
            delay_jitter_s: 0.0,
            double_pass_phase: false,
        }
    }
}

impl PathState {
    pub fn frozen() -> Self {
        Self {
            drift_step_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("length_km", self.length_km),
            ("attenuation_db_per_km", self.attenuation_db_per_km),
            ("path_drift_step", self.drift_step_sigma),
            ("excess_delay", self.excess_delay_s),
            ("delay_jitter", self.delay_jitter_s),
        ];
        for (name, v) in checks {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("channel.{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }

    /// One-way propagation delay plus configured excess.
    pub fn base_delay(&self) -> f64 {
        self.length_km / FIBER_LIGHT_SPEED_KM_PER_S + self.excess_delay_s
    }

    /// Expected roundtrip time.
    pub fn roundtrip_delay(&self) -> f64 {
        2.0 * self.length_km / FIBER_LIGHT_SPEED_KM_PER_S + self.excess_delay_s
    }

    /// Power transmission over a fraction of one leg.
    pub fn power_ratio(&self, fraction: f64) -> f64 {
        10f64.powf(-self.attenuation_db_per_km * self.length_km * fraction / 10.0)
    }

    /// Share of φ_p picked up per leg.
    pub fn leg_weight(&self) -> f64 {
        if self.double_pass_phase {
            1.0
        } else {
            0.5
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.phase = random_walk_step(self.phase, self.drift_step_sigma, rng);
    }
}

/// Relative phase φ_LO between a receiver's local oscillator and the signal
/// laser.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OscillatorState {
    pub offset: f64,
    pub drift_step_sigma: f64,
}

impl OscillatorState {
    pub fn new(offset: f64, drift_step_sigma: f64) -> Self {
        Self {
            offset: canonical_phase(offset),
            drift_step_sigma,
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.offset = random_walk_step(self.offset, self.drift_step_sigma, rng);
    }
}

/// Moves a pulse over `[from, to]` of one leg (fractions of the path
/// length). Returns the new state and the segment delay.
pub fn traverse(state: &GlauberState, path: &PathState, from: f64, to: f64) -> Result<(GlauberState, f64)> {
    if !(0.0 <= from && from < to && to <= 1.0) {
        return Err(Error::SegmentBounds { from, to });
    }
    let fraction = to - from;
    let shifted = state.apply(PhaseShiftGate::new(path.phase * path.leg_weight() * fraction));
    let out = shifted.attenuate(path.power_ratio(fraction))?;
    let delay = path.length_km * fraction / FIBER_LIGHT_SPEED_KM_PER_S;
    Ok((out, delay))
}

/// One slot of slow drift for the path and every listed oscillator.
pub fn advance_slot<'a, R, I>(path: &mut PathState, oscillators: I, rng: &mut R)
where
    R: Rng + ?Sized,
    I: IntoIterator<Item = &'a mut OscillatorState>,
{
    path.step(rng);
    for osc in oscillators {
        osc.step(rng);
    }
}

/// A beam splitter diverting part of the pulse power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapConfig {
    /// Distance from Bob as a fraction of the path length.
    pub position_fraction: f64,
    pub tap_power_ratio: f64,
}

impl TapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.position_fraction > 0.0 && self.position_fraction < 1.0) {
            return Err(Error::Config(format!(
                "tap position must lie in (0, 1), got {}",
                self.position_fraction
            )));
        }
        if !(self.tap_power_ratio > 0.0 && self.tap_power_ratio < 1.0) {
            return Err(Error::Config(format!(
                "tap power ratio must lie in (0, 1), got {}",
                self.tap_power_ratio
            )));
        }
        Ok(())
    }
}

/// Splits off `tap_power_ratio` of the power. Both outputs keep the input
/// phase.
pub fn tap(state: &GlauberState, cfg: &TapConfig) -> Result<(GlauberState, GlauberState)> {
    let ratio = cfg.tap_power_ratio;
    let through = state.attenuate(1.0 - ratio)?;
    let diverted = state.attenuate(ratio)?;
    Ok((through, diverted))
}
