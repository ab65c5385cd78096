//! Attack models: intercept-resend and two-point tapping.
//!
//! A single tap sees φ_r + φ_k + nuisance terms and learns nothing because
//! φ_r is uniform. Tapping at T1 (outbound, φ_r only) and T2 (return,
//! φ_r + φ_k) and subtracting cancels φ_r at the price of two noisy
//! readings on weak diverted pulses; differential decoding against a
//! reference doubles that again to four readings.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::{OscillatorState, TapConfig};
use crate::detection::{Detector, Measurement};
use crate::error::{Error, Result};
use crate::modulation::{Scheme, SymbolWord};
use crate::phasespace::{canonical_phase, phase_difference, GlauberState};
use crate::protocol::{Alarm, PulseFrame};
use crate::stats::RunningStats;

#[derive(Debug, Clone, PartialEq)]
pub struct InterceptResendAttacker {
    pub detector: Detector,
    /// Regenerated amplitude relative to the intercepted one (1 = exact).
    pub regeneration_ratio: f64,
    /// Phase noise of the attacker's own modulator when regenerating.
    pub regeneration_sigma: f64,
    /// Interception point on the return leg, as distance from Bob.
    pub position_fraction: f64,
    pub processing_delay_s: f64,
    /// Draw the attacker's LO offset uniformly at session start.
    pub randomize_lo: bool,
}

impl InterceptResendAttacker {
    /// Measures the pulse, then sends a fresh coherent state at the
    /// LO-relative reading (plus regeneration noise) toward Bob.
    pub fn intercept_resend<R: Rng + ?Sized>(&self, frame: &PulseFrame, rng: &mut R) -> Result<(PulseFrame, Measurement)> {
        let meas = self.detector.measure(&frame.state, frame.index, rng);
        let jitter = if self.regeneration_sigma > 0.0 {
            Normal::new(0.0, self.regeneration_sigma)
                .expect("finite sigma")
                .sample(rng)
        } else {
            0.0
        };
        let state = GlauberState::new(
            frame.state.amplitude() * self.regeneration_ratio,
            canonical_phase(meas.measured_phase + jitter),
        )?;
        let resent = PulseFrame {
            state,
            elapsed: frame.elapsed + self.processing_delay_s,
            ..*frame
        };
        Ok((resent, meas))
    }
}

pub fn intercept_resend<R: Rng + ?Sized>(attacker: &InterceptResendAttacker, frame: &PulseFrame, rng: &mut R) -> Result<(PulseFrame, Measurement)> {
    attacker.intercept_resend(frame, rng)
}

/// Extra phase picked up between the two taps (Alice's side of the path).
/// Constant when `drift_step_sigma` is zero, a random walk otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InterTapPhase {
    pub phase: f64,
    pub drift_step_sigma: f64,
}

impl InterTapPhase {
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let mut osc = OscillatorState::new(self.phase, self.drift_step_sigma);
        osc.step(rng);
        self.phase = osc.offset;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttackerDecode {
    /// Key minus reference, both from two-point differences.
    #[default]
    Differential,
    /// Single key pulse against a known fixed φ_R, after subtracting the
    /// nuisance phase calibrated on the first key pulse.
    KnownReference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TappingAttacker {
    pub tap1: TapConfig,
    pub tap2: TapConfig,
    pub detector1: Detector,
    pub detector2: Detector,
    /// One LO for both tap points; `detector2.oscillator` is then unused.
    pub shared_lo: bool,
    pub inter_tap: InterTapPhase,
    pub decode: AttackerDecode,
    pub randomize_lo: bool,
}

impl TappingAttacker {
    /// Φ'_T1 = φ_r + φ_pT1 + φ_LO-T1 ± δφ on the outbound leg.
    pub fn tap_phase_t1<R: Rng + ?Sized>(&self, diverted: &GlauberState, pulse_index: u64, rng: &mut R) -> Measurement {
        self.detector1.measure(diverted, pulse_index, rng)
    }

    /// Φ'_T2 = φ_k + φ_r + φ_pT2 + φ_LO-T2 ± δφ on the return leg.
    pub fn tap_phase_t2<R: Rng + ?Sized>(&self, diverted: &GlauberState, pulse_index: u64, rng: &mut R) -> Measurement {
        let lo = if self.shared_lo {
            self.detector1.oscillator.offset
        } else {
            self.detector2.oscillator.offset
        };
        self.detector2.measure_with_lo(diverted, lo, pulse_index, rng)
    }

    pub fn oscillators_mut(&mut self) -> Vec<&mut OscillatorState> {
        if self.shared_lo {
            vec![&mut self.detector1.oscillator]
        } else {
            vec![&mut self.detector1.oscillator, &mut self.detector2.oscillator]
        }
    }
}

/// Φ'_T2 − Φ'_T1: removes φ_r, leaving φ_k + Δφ_p + Δφ_LO + errors.
pub fn attacker_combine(m1: &Measurement, m2: &Measurement) -> Result<f64> {
    if m1.pulse_index != m2.pulse_index {
        return Err(Error::IndexMismatch(m1.pulse_index, m2.pulse_index));
    }
    Ok(phase_difference(m2.measured_phase, m1.measured_phase))
}

/// Differential key estimate from two combined phases.
pub fn attacker_dpsk(key_combined: f64, ref_combined: f64) -> f64 {
    phase_difference(key_combined, ref_combined)
}

/// What the attacker extracted from one pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackerReading {
    pub pulse_index: u64,
    pub estimate: f64,
    /// `estimate` without measurement noise; simulation-only.
    pub noiseless: f64,
    /// Summed measurement error in `estimate`.
    pub error: f64,
    pub photon_count: u64,
}

impl AttackerReading {
    pub fn single(m: &Measurement) -> Self {
        Self {
            pulse_index: m.pulse_index,
            estimate: m.measured_phase,
            noiseless: m.true_phase_debug,
            error: m.phase_error(),
            photon_count: m.measured_photon_count,
        }
    }

    pub fn two_point(t1: &Measurement, t2: &Measurement) -> Result<Self> {
        Ok(Self {
            pulse_index: t2.pulse_index,
            estimate: attacker_combine(t1, t2)?,
            noiseless: phase_difference(t2.true_phase_debug, t1.true_phase_debug),
            error: phase_difference(t2.phase_error(), t1.phase_error()),
            photon_count: t2.measured_photon_count,
        })
    }
}

/// One key pulse from the attacker's point of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackerSample {
    pub key: AttackerReading,
    pub reference: AttackerReading,
    pub sent: SymbolWord,
    /// Alice's total added phase on the key pulse (φ_k); ground truth used
    /// only to calibrate the known-reference attacker once.
    pub key_phase_debug: f64,
}

/// Running attacker decode over a session.
#[derive(Debug, Clone, Default)]
pub struct AttackerTally {
    pub attacker_bits: Vec<bool>,
    pub alice_bits: Vec<bool>,
    pub symbols: u64,
    pub symbol_errors: u64,
    pub dpsk_error: RunningStats,
    pub combined_error: RunningStats,
    calibration: Option<f64>,
}

impl AttackerTally {
    pub fn record(&mut self, sample: &AttackerSample, scheme: &Scheme, mode: AttackerDecode, known_reference: f64) -> SymbolWord {
        let scale = if sample.reference.photon_count > 0 {
            (sample.key.photon_count as f64 / sample.reference.photon_count as f64).sqrt()
        } else {
            1.0
        };
        let delta = match mode {
            AttackerDecode::Differential => attacker_dpsk(sample.key.estimate, sample.reference.estimate),
            AttackerDecode::KnownReference => {
                let calibration = *self
                    .calibration
                    .get_or_insert_with(|| phase_difference(sample.key.noiseless, sample.key_phase_debug));
                canonical_phase(sample.key.estimate - calibration - known_reference)
            }
        };
        let word = scheme.decode(delta, scale);
        self.combined_error.push(sample.key.error);
        self.dpsk_error
            .push(phase_difference(sample.key.error, sample.reference.error));
        self.symbols += 1;
        if word != sample.sent {
            self.symbol_errors += 1;
        }
        self.attacker_bits.extend(word.bits());
        self.alice_bits.extend(sample.sent.bits());
        word
    }
}

/// Nominal per-measurement uncertainty δφ at the tap and the budgets
/// derived from it: worst-case interval sums and statistical composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBudget {
    pub per_measurement: f64,
    pub worst_case_combined: f64,
    pub worst_case_dpsk: f64,
    pub statistical_combined: f64,
    pub statistical_dpsk: f64,
}

impl ErrorBudget {
    pub fn from_sigma(delta: f64) -> Self {
        Self {
            per_measurement: delta,
            worst_case_combined: 2.0 * delta,
            worst_case_dpsk: 4.0 * delta,
            statistical_combined: std::f64::consts::SQRT_2 * delta,
            statistical_dpsk: 2.0 * delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub attack: String,
    #[serde(skip)]
    pub attacker_bits: Vec<bool>,
    pub attacker_ber_vs_alice: f64,
    pub attacker_symbols: u64,
    pub attacker_symbol_error_rate: f64,
    pub bob_ber: f64,
    pub bob_symbol_error_rate: f64,
    pub alarms_triggered: BTreeMap<String, u64>,
    /// Std of the attacker's differential phase error (radians).
    pub phase_error_std: f64,
    /// Std of the per-pulse (T2 − T1 or single) phase error (radians).
    pub combined_error_std: f64,
    pub budget: Option<ErrorBudget>,
}

pub fn alarm_counts(alarms: &[Alarm]) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for a in alarms {
        *out.entry(a.kind.as_str().to_string()).or_insert(0) += 1;
    }
    out
}

/// Decodes every attacker sample and reports the attacker's key recovery
/// next to Bob's figures for the same pulses.
#[allow(clippy::too_many_arguments)]
pub fn attacker_decode_and_report(
    attack: &str,
    samples: &[AttackerSample],
    scheme: &Scheme,
    mode: AttackerDecode,
    known_reference: f64,
    bob_ber: f64,
    bob_symbol_error_rate: f64,
    alarms: &[Alarm],
    budget: Option<ErrorBudget>,
) -> AttackReport {
    let mut tally = AttackerTally::default();
    for s in samples {
        tally.record(s, scheme, mode, known_reference);
    }
    finish_report(attack, tally, bob_ber, bob_symbol_error_rate, alarms, budget)
}

pub fn finish_report(
    attack: &str,
    tally: AttackerTally,
    bob_ber: f64,
    bob_symbol_error_rate: f64,
    alarms: &[Alarm],
    budget: Option<ErrorBudget>,
) -> AttackReport {
    let ber = crate::protocol::compute_ber(&tally.alice_bits, &tally.attacker_bits).unwrap_or(0.0);
    let ser = if tally.symbols > 0 {
        tally.symbol_errors as f64 / tally.symbols as f64
    } else {
        0.0
    };
    AttackReport {
        attack: attack.to_string(),
        attacker_ber_vs_alice: ber,
        attacker_symbols: tally.symbols,
        attacker_symbol_error_rate: ser,
        bob_ber,
        bob_symbol_error_rate,
        alarms_triggered: alarm_counts(alarms),
        phase_error_std: tally.dpsk_error.std(),
        combined_error_std: tally.combined_error.std(),
        budget,
        attacker_bits: tally.attacker_bits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasespace::{rad, NoiseModel};
    use crate::protocol::PulseRole;
    use crate::seed::SimRng;
    use rand::SeedableRng;

    fn m(index: u64, phase: f64) -> Measurement {
        Measurement {
            pulse_index: index,
            measured_phase: phase,
            measured_photon_count: 10,
            true_phase_debug: phase,
        }
    }

    #[test]
    fn combine_clean_limit() {
        let phi_r = 2.5;
        let phi_k = rad(67.5);
        let got = attacker_combine(&m(3, phi_r), &m(3, canonical_phase(phi_r + phi_k))).unwrap();
        assert!((got - phi_k).abs() < 1e-12);
        assert!(matches!(attacker_combine(&m(3, 0.0), &m(4, 0.0)), Err(Error::IndexMismatch(3, 4))));
    }

    #[test]
    fn combine_shifts_by_lo_difference() {
        let lo_delta = 0.4;
        let got = attacker_combine(&m(0, 1.0), &m(0, 1.0 + 0.2 + lo_delta)).unwrap();
        assert!((got - (0.2 + lo_delta)).abs() < 1e-12);
    }

    #[test]
    fn dpsk_clean_limit() {
        let (k, r) = (rad(100.0), rad(10.0));
        assert!((attacker_dpsk(k, r) - rad(90.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_taps_recover_phases() {
        let mut rng = SimRng::seed_from_u64(5);
        let t = TappingAttacker {
            tap1: TapConfig {
                position_fraction: 0.9,
                tap_power_ratio: 0.1,
            },
            tap2: TapConfig {
                position_fraction: 0.9,
                tap_power_ratio: 0.1,
            },
            detector1: Detector::new(NoiseModel::noiseless(), OscillatorState::new(0.3, 0.0)),
            detector2: Detector::new(NoiseModel::noiseless(), OscillatorState::new(-1.0, 0.0)),
            shared_lo: true,
            inter_tap: InterTapPhase::default(),
            decode: AttackerDecode::Differential,
            randomize_lo: false,
        };
        let s1 = GlauberState::new(1.0, 0.7).unwrap();
        let s2 = GlauberState::new(1.0, 0.7 + 1.2).unwrap();
        let m1 = t.tap_phase_t1(&s1, 0, &mut rng);
        let m2 = t.tap_phase_t2(&s2, 0, &mut rng);
        assert!((m1.measured_phase - 1.0).abs() < 1e-12);
        // shared LO: detector2's own oscillator is ignored
        assert!((attacker_combine(&m1, &m2).unwrap() - 1.2).abs() < 1e-12);
    }

    #[test]
    fn omniscient_intercept_is_a_perfect_copy() {
        let mut rng = SimRng::seed_from_u64(5);
        let a = InterceptResendAttacker {
            detector: Detector::noiseless(),
            regeneration_ratio: 1.0,
            regeneration_sigma: 0.0,
            position_fraction: 0.5,
            processing_delay_s: 0.0,
            randomize_lo: false,
        };
        let frame = PulseFrame {
            index: 9,
            state: GlauberState::new(3.0, -2.0).unwrap(),
            role: PulseRole::Key,
            elapsed: 1e-5,
        };
        let (out, meas) = a.intercept_resend(&frame, &mut rng).unwrap();
        assert_eq!(out, frame);
        assert_eq!(meas.measured_phase, -2.0);
    }

    #[test]
    fn budgets() {
        let b = ErrorBudget::from_sigma(rad(5.0));
        assert!((b.worst_case_combined - rad(10.0)).abs() < 1e-15);
        assert!((b.worst_case_dpsk - rad(20.0)).abs() < 1e-15);
        assert!((b.statistical_dpsk - rad(10.0)).abs() < 1e-15);
    }

    #[test]
    fn tally_counts_errors() {
        let scheme = Scheme::psk(4).unwrap();
        let sent = scheme.word(1).unwrap();
        let (delta, _) = scheme.encode(sent).unwrap();
        let reading = |idx, phase| AttackerReading {
            pulse_index: idx,
            estimate: phase,
            noiseless: phase,
            error: 0.0,
            photon_count: 10,
        };
        let good = AttackerSample {
            key: reading(1, delta + 0.2),
            reference: reading(0, 0.2),
            sent,
            key_phase_debug: delta,
        };
        let bad = AttackerSample {
            key: reading(3, delta + std::f64::consts::PI),
            ..good
        };
        let report = attacker_decode_and_report(
            "tapping",
            &[good, bad],
            &scheme,
            AttackerDecode::Differential,
            0.0,
            0.0,
            0.0,
            &[],
            None,
        );
        assert_eq!(report.attacker_symbols, 2);
        assert_eq!(report.attacker_symbol_error_rate, 0.5);
        // word 01 at position 1; opposite point (position 3) carries 10
        assert_eq!(report.attacker_ber_vs_alice, 0.5);
    }
}
