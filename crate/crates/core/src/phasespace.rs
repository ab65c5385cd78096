//! Glauber states as points in phase space, the phase-shift gate, and the
//! number–phase uncertainty curve used by every detector.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maps any finite angle onto the canonical range (−π, π].
pub fn canonical_phase(phase: f64) -> f64 {
    let r = phase.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Signed circular difference `a − b`, canonicalized.
pub fn phase_difference(a: f64, b: f64) -> f64 {
    canonical_phase(a - b)
}

/// Unsigned circular distance in [0, π].
pub fn circular_distance(a: f64, b: f64) -> f64 {
    phase_difference(a, b).abs()
}

pub fn deg(rad: f64) -> f64 {
    rad.to_degrees()
}

pub fn rad(deg: f64) -> f64 {
    deg.to_radians()
}

/// A coherent state |α⟩ with α = |α|e^{iφ}.
///
/// The state itself is noiseless; uncertainty is applied by a detector at
/// measurement time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlauberState {
    amplitude: f64,
    phase: f64,
}

impl GlauberState {
    pub fn new(amplitude: f64, phase: f64) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(Error::Domain(format!(
                "amplitude must be finite and nonnegative, got {amplitude}"
            )));
        }
        if !phase.is_finite() {
            return Err(Error::Domain(format!("phase must be finite, got {phase}")));
        }
        Ok(Self {
            amplitude,
            phase: canonical_phase(phase),
        })
    }

    pub fn from_mean_photon_number(mean_photon_number: f64, phase: f64) -> Result<Self> {
        if !(mean_photon_number.is_finite() && mean_photon_number >= 0.0) {
            return Err(Error::Domain(format!(
                "mean photon number must be finite and nonnegative, got {mean_photon_number}"
            )));
        }
        Self::new(mean_photon_number.sqrt(), phase)
    }

    pub fn vacuum() -> Self {
        Self {
            amplitude: 0.0,
            phase: 0.0,
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    /// n̄ = |α|².
    pub fn mean_photon_number(&self) -> f64 {
        self.amplitude * self.amplitude
    }

    pub fn apply(&self, gate: PhaseShiftGate) -> Self {
        Self {
            amplitude: self.amplitude,
            phase: canonical_phase(self.phase + gate.shift),
        }
    }

    /// Scales the amplitude by an arbitrary nonnegative factor. Used for
    /// ring modulation and regeneration, where the factor is not a loss.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.amplitude * factor, self.phase)
    }

    /// Coherent-state loss: n̄ is multiplied by `power_ratio`.
    pub fn attenuate(&self, power_ratio: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&power_ratio) {
            return Err(Error::Domain(format!(
                "power ratio must lie in [0, 1], got {power_ratio}"
            )));
        }
        Ok(Self {
            amplitude: self.amplitude * power_ratio.sqrt(),
            phase: self.phase,
        })
    }

    /// Photon count from a Poissonian number distribution with mean n̄.
    pub fn sample_photon_count<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let mean = self.mean_photon_number();
        if mean <= 0.0 {
            return 0;
        }
        // Poisson::new only fails for non-positive or non-finite means.
        let dist = Poisson::new(mean).expect("positive finite mean");
        dist.sample(rng) as u64
    }
}

/// Û(φ): a pure phase rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseShiftGate {
    pub shift: f64,
}

impl PhaseShiftGate {
    pub fn new(shift: f64) -> Self {
        Self { shift }
    }

    /// Û†(φ) = Û(−φ).
    pub fn inverse(&self) -> Self {
        Self { shift: -self.shift }
    }

    pub fn apply(&self, state: &GlauberState) -> GlauberState {
        state.apply(*self)
    }
}

pub fn apply_phase_shift(state: &GlauberState, gate: PhaseShiftGate) -> GlauberState {
    state.apply(gate)
}

/// How the uncertainty curve continues past the last anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TailRule {
    /// 1/√n̄ decay normalized through the last anchor.
    #[default]
    InverseSqrt,
    /// Continue the last power-law segment.
    Extrapolate,
}

/// Digitized number–phase uncertainty curve: (n̄, Δφ in degrees).
pub const DEFAULT_ANCHORS_DEG: [(f64, f64); 4] = [(0.25, 68.0), (1.0, 43.0), (4.5, 13.0), (100.0, 3.0)];

pub const DEFAULT_EQUIPMENT_SIGMA_DEG: f64 = 5.0;

/// Phase noise seen by a coherent detector: a fixed equipment term plus an
/// n̄-dependent quantum term.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub equipment_sigma: f64,
    anchors: Vec<(f64, f64)>,
    pub tail: TailRule,
    /// When false, `equipment_sigma` is the whole per-measurement
    /// uncertainty and `quantum_sigma` reports 0.
    pub quantum_enabled: bool,
}

impl Default for NoiseModel {
    fn default() -> Self {
        let anchors = DEFAULT_ANCHORS_DEG
            .iter()
            .map(|&(n, s)| (n, rad(s)))
            .collect();
        Self {
            equipment_sigma: rad(DEFAULT_EQUIPMENT_SIGMA_DEG),
            anchors,
            tail: TailRule::InverseSqrt,
            quantum_enabled: true,
        }
    }
}

impl NoiseModel {
    /// Anchors are (n̄, σ radians), strictly increasing in n̄ and strictly
    /// decreasing in σ.
    pub fn new(equipment_sigma: f64, anchors: Vec<(f64, f64)>, tail: TailRule) -> Result<Self> {
        if !(equipment_sigma.is_finite() && equipment_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "equipment sigma must be finite and nonnegative, got {equipment_sigma}"
            )));
        }
        if anchors.is_empty() {
            return Err(Error::Config("noise model needs at least one anchor".into()));
        }
        for &(n, s) in &anchors {
            if !(n.is_finite() && n > 0.0 && s.is_finite() && s > 0.0) {
                return Err(Error::Config(format!(
                    "anchor ({n}, {s}) must have positive finite n̄ and sigma"
                )));
            }
        }
        for pair in anchors.windows(2) {
            let ((n0, s0), (n1, s1)) = (pair[0], pair[1]);
            if n1 <= n0 {
                return Err(Error::Config(format!(
                    "anchors must be strictly increasing in n̄ ({n0} then {n1})"
                )));
            }
            if s1 >= s0 {
                return Err(Error::Config(format!(
                    "anchor sigmas must be strictly decreasing ({s0} then {s1})"
                )));
            }
        }
        Ok(Self {
            equipment_sigma,
            anchors,
            tail,
            quantum_enabled: true,
        })
    }

    /// Noise model with no quantum term, so `sigma` is the overall
    /// per-measurement uncertainty.
    pub fn overall(sigma: f64) -> Self {
        Self {
            equipment_sigma: sigma,
            quantum_enabled: false,
            ..Self::default()
        }
    }

    pub fn noiseless() -> Self {
        Self::overall(0.0)
    }

    pub fn with_equipment_sigma(mut self, sigma: f64) -> Self {
        self.equipment_sigma = sigma;
        self
    }

    pub fn anchors(&self) -> &[(f64, f64)] {
        &self.anchors
    }

    /// Minimum-uncertainty floor 1/(2√n̄) from Δn·Δφ ≥ 1/2 with Δn = √n̄.
    pub fn uncertainty_floor(mean_photon_number: f64) -> f64 {
        0.5 / mean_photon_number.sqrt()
    }

    /// Quantum phase uncertainty at mean photon number `n̄`, in radians.
    ///
    /// Between anchors the curve is a power law (straight line in log–log).
    /// Below the first anchor the first segment is extended but never drops
    /// under the uncertainty floor.
    pub fn quantum_sigma(&self, mean_photon_number: f64) -> Result<f64> {
        let n = mean_photon_number;
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Domain(format!(
                "phase of a state with n̄ = {n} is undefined"
            )));
        }
        if !self.quantum_enabled {
            return Ok(0.0);
        }
        let anchors = &self.anchors;
        let (n_first, s_first) = anchors[0];
        let (n_last, s_last) = anchors[anchors.len() - 1];

        if anchors.len() == 1 {
            let scaled = s_first * (n_first / n).sqrt();
            return Ok(scaled.max(Self::uncertainty_floor(n)));
        }
        if n <= n_first {
            let extended = power_law(anchors[0], anchors[1], n);
            return Ok(extended.max(Self::uncertainty_floor(n)));
        }
        if n >= n_last {
            let tail = match self.tail {
                TailRule::InverseSqrt => s_last * (n_last / n).sqrt(),
                TailRule::Extrapolate => power_law(anchors[anchors.len() - 2], anchors[anchors.len() - 1], n),
            };
            return Ok(tail.max(Self::uncertainty_floor(n)));
        }
        let i = anchors.partition_point(|&(an, _)| an <= n);
        Ok(power_law(anchors[i - 1], anchors[i], n))
    }
}

fn power_law((n0, s0): (f64, f64), (n1, s1): (f64, f64), n: f64) -> f64 {
    let t = (n / n0).ln() / (n1 / n0).ln();
    s0 * (s1 / s0).powf(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn canonical_range_is_half_open() {
        assert_eq!(canonical_phase(PI), PI);
        assert_eq!(canonical_phase(-PI), PI);
        assert!(close(canonical_phase(3.0 * PI / 2.0), -PI / 2.0, 1e-15));
        assert_eq!(canonical_phase(0.0), 0.0);
        assert!(close(canonical_phase(TAU + 0.25), 0.25, 1e-15));
    }

    #[test]
    fn phase_shift_examples() {
        let s = GlauberState::new(3.0, 0.0).unwrap();
        assert_eq!(s.apply(PhaseShiftGate::new(0.0)), s);

        let s = GlauberState::new(3.0, PI / 2.0).unwrap();
        let out = s.apply(PhaseShiftGate::new(PI));
        assert_eq!(out.amplitude(), 3.0);
        assert!(close(out.phase(), -PI / 2.0, 1e-15));

        let s = GlauberState::new(1.0, 0.3).unwrap();
        let out = s.apply(PhaseShiftGate::new(0.4)).apply(PhaseShiftGate::new(-0.4));
        assert!(close(out.phase(), 0.3, 1e-15));
        assert_eq!(out.amplitude(), 1.0);
    }

    #[test]
    fn inverse_negates_shift() {
        assert_eq!(PhaseShiftGate::new(0.0).inverse().shift, 0.0);
        assert_eq!(PhaseShiftGate::new(1.0).inverse().shift, -1.0);
    }

    #[test]
    fn attenuation() {
        let s = GlauberState::from_mean_photon_number(10.0, 0.7).unwrap();
        assert_eq!(s.attenuate(1.0).unwrap(), s);
        assert_eq!(s.attenuate(0.0).unwrap().amplitude(), 0.0);
        let low = s.attenuate(0.01).unwrap();
        assert!(close(low.mean_photon_number(), 0.1, 1e-12));
        assert_eq!(low.phase(), s.phase());
        assert!(s.attenuate(1.5).is_err());
        assert!(s.attenuate(-0.1).is_err());
    }

    #[test]
    fn rejects_negative_amplitude() {
        assert!(GlauberState::new(-1.0, 0.0).is_err());
        assert!(GlauberState::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn vacuum_counts_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = GlauberState::vacuum();
        assert!((0..1000).all(|_| v.sample_photon_count(&mut rng) == 0));
    }

    #[test]
    fn anchors_are_reproduced() {
        let m = NoiseModel::default();
        for (n, s) in DEFAULT_ANCHORS_DEG {
            assert!(close(deg(m.quantum_sigma(n).unwrap()), s, 1e-9), "n̄ = {n}");
        }
    }

    #[test]
    fn interpolated_value_at_ten_photons() {
        // 13° · (3/13)^(ln(10/4.5)/ln(100/4.5)), evaluated by hand: 8.9124°.
        let m = NoiseModel::default();
        let got = deg(m.quantum_sigma(10.0).unwrap());
        assert!(close(got, 8.9124, 1e-3), "{got}");
    }

    #[test]
    fn tail_follows_inverse_sqrt_through_last_anchor() {
        let m = NoiseModel::default();
        let got = deg(m.quantum_sigma(1.0e4).unwrap());
        assert!(close(got, 0.3, 1e-12), "{got}");
        // within 5% of the bare 1/(2√n̄) rule
        let bare = deg(NoiseModel::uncertainty_floor(1.0e4));
        assert!((got - bare).abs() / bare < 0.05);
    }

    #[test]
    fn vacuum_phase_is_a_domain_error() {
        let m = NoiseModel::default();
        assert!(m.quantum_sigma(0.0).is_err());
        assert!(m.quantum_sigma(-1.0).is_err());
    }

    #[test]
    fn anchor_validation() {
        assert!(NoiseModel::new(0.0, vec![(1.0, 0.5), (0.5, 0.3)], TailRule::InverseSqrt).is_err());
        assert!(NoiseModel::new(0.0, vec![(1.0, 0.5), (2.0, 0.6)], TailRule::InverseSqrt).is_err());
        assert!(NoiseModel::new(0.0, vec![], TailRule::InverseSqrt).is_err());
        assert!(NoiseModel::new(0.0, vec![(1.0, 0.5), (2.0, 0.4)], TailRule::InverseSqrt).is_ok());
    }

    #[test]
    fn overall_mode_has_no_quantum_term() {
        let m = NoiseModel::overall(rad(5.0));
        assert_eq!(m.quantum_sigma(0.3).unwrap(), 0.0);
    }

    fn log_grid() -> impl Iterator<Item = f64> {
        (0..=4000).map(|i| 10f64.powf(-2.0 + 8.0 * i as f64 / 4000.0))
    }

    #[test]
    fn monotone_and_continuous() {
        for tail in [TailRule::InverseSqrt, TailRule::Extrapolate] {
            let m = NoiseModel {
                tail,
                ..NoiseModel::default()
            };
            let vals: Vec<f64> = log_grid().map(|n| m.quantum_sigma(n).unwrap()).collect();
            for w in vals.windows(2) {
                assert!(w[1] <= w[0], "{tail:?}");
                // adjacent grid points are 0.2% apart in n̄; no jumps
                assert!((w[0] - w[1]) / w[0] < 0.01, "{tail:?}");
            }
        }
    }

    #[test]
    fn uncertainty_floor_holds_outside_the_digitized_dip() {
        // The 13° anchor at n̄ = 4.5 sits slightly under 1/(2√n̄) (ratio
        // 0.481). Between the n̄ = 1 and n̄ = 100 anchors the product may
        // dip to that value; everywhere else the floor holds.
        let m = NoiseModel::default();
        let dip_floor = rad(13.0) * 4.5f64.sqrt();
        for n in log_grid() {
            let product = m.quantum_sigma(n).unwrap() * n.sqrt();
            if (1.0..=100.0).contains(&n) {
                assert!(product >= dip_floor - 1e-12, "n̄ = {n}: {product}");
            } else {
                assert!(product >= 0.5 - 1e-12, "n̄ = {n}: {product}");
            }
        }
    }
}
