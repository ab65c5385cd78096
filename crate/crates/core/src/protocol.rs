//! Bob and Alice state machines, key extraction by differential phase, and
//! the intensity and delay monitors guarding the roundtrip.
//!
//! A slot runs: Bob emits a pulse randomized by a private phase φ_r; Alice
//! adds either a reference phase φ_R or a key phase Δφ_k + φ_R; Bob removes
//! φ_r with the inverse gate and measures. The path phase φ_p and the
//! oscillator offset φ_LO are common to neighbouring pulses, so the
//! difference between a key reading and its reference reading leaves Δφ_k.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{Detector, Measurement};
use crate::error::{Error, Result};
use crate::modulation::{dpsk_target, ReferenceBook, Scheme, SymbolWord};
use crate::phasespace::{canonical_phase, phase_difference, GlauberState, PhaseShiftGate};
use crate::seed::SimRng;

pub use crate::session::{run_session, SessionOutcome, SessionParams, SessionResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseRole {
    Reference,
    Key,
}

impl PulseRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            PulseRole::Reference => "reference",
            PulseRole::Key => "key",
        }
    }
}

/// One time-slotted pulse in flight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseFrame {
    pub index: u64,
    pub state: GlauberState,
    pub role: PulseRole,
    /// Propagation and processing delay accumulated so far, seconds.
    pub elapsed: f64,
}

/// Public reference schedule: one reference pulse followed by
/// `keys_per_reference` key pulses, repeating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceSchedule {
    keys_per_reference: u32,
}

impl Default for ReferenceSchedule {
    fn default() -> Self {
        Self {
            keys_per_reference: 1,
        }
    }
}

impl ReferenceSchedule {
    pub fn new(keys_per_reference: u32) -> Result<Self> {
        if keys_per_reference == 0 {
            return Err(Error::Config("keys_per_reference must be at least 1".into()));
        }
        Ok(Self { keys_per_reference })
    }

    pub fn keys_per_reference(&self) -> u32 {
        self.keys_per_reference
    }

    fn period(&self) -> u64 {
        self.keys_per_reference as u64 + 1
    }

    pub fn role(&self, pulse_index: u64) -> PulseRole {
        if pulse_index.is_multiple_of(self.period()) {
            PulseRole::Reference
        } else {
            PulseRole::Key
        }
    }

    /// Index of the reference pulse a key pulse is measured against.
    pub fn reference_index(&self, pulse_index: u64) -> u64 {
        pulse_index - pulse_index % self.period()
    }

    /// Asymptotic fraction of slots carrying key symbols.
    pub fn throughput_fraction(&self) -> f64 {
        self.keys_per_reference as f64 / self.period() as f64
    }

    /// (key, reference) slot counts among the first `total` pulses.
    pub fn counts(&self, total: u64) -> (u64, u64) {
        let references = total.div_ceil(self.period());
        (total - references, references)
    }
}

/// Source of Bob's private phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Randomizer {
    /// `n` equally spaced phases, chosen uniformly.
    Discrete(u32),
    /// Uniform on the circle.
    Continuous,
}

impl Default for Randomizer {
    fn default() -> Self {
        Randomizer::Discrete(1024)
    }
}

impl Randomizer {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Randomizer::Discrete(n) => {
                let k = rng.random_range(0..n);
                canonical_phase(k as f64 * TAU / n as f64)
            }
            Randomizer::Continuous => canonical_phase(rng.random_range(-PI..PI)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmKind {
    IntensityLow,
    IntensityHigh,
    Delay,
    UnmatchedPulse,
    MissingReference,
}

impl AlarmKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlarmKind::IntensityLow => "intensity_low",
            AlarmKind::IntensityHigh => "intensity_high",
            AlarmKind::Delay => "delay",
            AlarmKind::UnmatchedPulse => "unmatched_pulse",
            AlarmKind::MissingReference => "missing_reference",
        }
    }
}

/// A monitor or bookkeeping event. `observed`/`expected` carry the
/// quantity that tripped it (mean count per pulse, seconds, or indices).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Alarm {
    pub pulse_index: u64,
    pub kind: AlarmKind,
    pub observed: f64,
    pub expected: f64,
}

impl Alarm {
    pub fn detail(&self) -> String {
        match self.kind {
            AlarmKind::IntensityLow | AlarmKind::IntensityHigh => format!(
                "window mean {:.4} photons vs expected {:.4}",
                self.observed, self.expected
            ),
            AlarmKind::Delay => format!(
                "roundtrip {:.3} ns vs baseline {:.3} ns",
                self.observed * 1e9,
                self.expected * 1e9
            ),
            AlarmKind::UnmatchedPulse => format!("pulse {} has no randomizer entry", self.pulse_index),
            AlarmKind::MissingReference => format!(
                "reference pulse {} unavailable for key pulse {}",
                self.expected, self.pulse_index
            ),
        }
    }
}

/// Windowed photon-count test. Each non-overlapping window of `window`
/// monitored pulses is compared against its expected Poisson total; an
/// alarm fires when the deviation exceeds `sigmas` standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMonitor {
    window: u64,
    sigmas: f64,
    filled: u64,
    observed_sum: f64,
    expected_sum: f64,
    windows: u64,
    alarmed_windows: u64,
}

impl IntensityMonitor {
    pub fn new(window: u64, sigmas: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("intensity window must be at least one pulse".into()));
        }
        if !(sigmas.is_finite() && sigmas > 0.0) {
            return Err(Error::Config(format!("intensity threshold must be positive, got {sigmas}")));
        }
        Ok(Self {
            window,
            sigmas,
            filled: 0,
            observed_sum: 0.0,
            expected_sum: 0.0,
            windows: 0,
            alarmed_windows: 0,
        })
    }

    /// Relative drop that trips the alarm for a window with per-pulse mean
    /// `expected`: sigmas / √(expected · window).
    pub fn threshold_fraction(&self, expected: f64) -> f64 {
        self.sigmas / (expected * self.window as f64).sqrt()
    }

    pub fn observe(&mut self, pulse_index: u64, count: u64, expected: f64) -> Option<Alarm> {
        self.filled += 1;
        self.observed_sum += count as f64;
        self.expected_sum += expected;
        if self.filled < self.window {
            return None;
        }
        let n = self.filled as f64;
        let (observed, expected) = (self.observed_sum, self.expected_sum);
        self.filled = 0;
        self.observed_sum = 0.0;
        self.expected_sum = 0.0;
        self.windows += 1;
        let limit = self.sigmas * expected.sqrt();
        let kind = if observed < expected - limit {
            AlarmKind::IntensityLow
        } else if observed > expected + limit {
            AlarmKind::IntensityHigh
        } else {
            return None;
        };
        self.alarmed_windows += 1;
        Some(Alarm {
            pulse_index,
            kind,
            observed: observed / n,
            expected: expected / n,
        })
    }

    pub fn windows(&self) -> u64 {
        self.windows
    }

    pub fn alarmed_windows(&self) -> u64 {
        self.alarmed_windows
    }
}

/// Roundtrip-time check against the known fiber length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayMonitor {
    pub baseline: f64,
    pub tolerance: f64,
}

impl DelayMonitor {
    pub fn check(&self, pulse_index: u64, observed_rtt: f64) -> Option<Alarm> {
        ((observed_rtt - self.baseline).abs() > self.tolerance).then_some(Alarm {
            pulse_index,
            kind: AlarmKind::Delay,
            observed: observed_rtt,
            expected: self.baseline,
        })
    }
}

pub fn monitor_delay(monitor: &DelayMonitor, pulse_index: u64, observed_rtt: f64) -> Option<Alarm> {
    monitor.check(pulse_index, observed_rtt)
}

pub fn monitor_intensity(monitor: &mut IntensityMonitor, meas: &Measurement, expected: f64) -> Option<Alarm> {
    monitor.observe(meas.pulse_index, meas.measured_photon_count, expected)
}

/// Bob: randomizes outgoing pulses, derandomizes and measures returning
/// ones, and watches the channel.
#[derive(Debug, Clone)]
pub struct BobState {
    randomizer: Randomizer,
    /// Private φ_r per in-flight pulse. Never written to public output.
    randomizer_log: HashMap<u64, f64>,
    pub detector: Detector,
    pub intensity_monitor: IntensityMonitor,
    pub delay_monitor: DelayMonitor,
    /// Expected received mean photon number of a unit-ring pulse.
    pub expected_unit_count: f64,
    /// Whether key pulses have a known intensity (single-ring schemes).
    pub monitor_key_pulses: bool,
    pub alarms: Vec<Alarm>,
    pub extracted_bits: Vec<bool>,
}

impl BobState {
    pub fn new(
        randomizer: Randomizer,
        detector: Detector,
        intensity_monitor: IntensityMonitor,
        delay_monitor: DelayMonitor,
        expected_unit_count: f64,
        monitor_key_pulses: bool,
    ) -> Self {
        Self {
            randomizer,
            randomizer_log: HashMap::new(),
            detector,
            intensity_monitor,
            delay_monitor,
            expected_unit_count,
            monitor_key_pulses,
            alarms: Vec::new(),
            extracted_bits: Vec::new(),
        }
    }

    pub fn in_flight(&self) -> usize {
        self.randomizer_log.len()
    }

    /// Generates the envelope Û(φ_r)|α⟩ for slot `pulse_index`.
    pub fn emit<R: Rng + ?Sized>(&mut self, pulse_index: u64, role: PulseRole, amplitude: f64, rng: &mut R) -> Result<PulseFrame> {
        if self.randomizer_log.contains_key(&pulse_index) {
            return Err(Error::DuplicatePulse(pulse_index));
        }
        let phi_r = self.randomizer.draw(rng);
        self.randomizer_log.insert(pulse_index, phi_r);
        Ok(PulseFrame {
            index: pulse_index,
            state: GlauberState::new(amplitude, phi_r)?,
            role,
            elapsed: 0.0,
        })
    }

    /// The private phase of an in-flight pulse; simulation bookkeeping only.
    pub fn randomizer_phase_debug(&self, pulse_index: u64) -> Option<f64> {
        self.randomizer_log.get(&pulse_index).copied()
    }

    /// Applies Û†(φ_r) (no measurement, no noise) and then measures.
    /// `observed_rtt` feeds the delay monitor.
    pub fn receive<R: Rng + ?Sized>(&mut self, frame: &PulseFrame, observed_rtt: f64, rng: &mut R) -> Result<Measurement, Alarm> {
        let Some(phi_r) = self.randomizer_log.remove(&frame.index) else {
            let alarm = Alarm {
                pulse_index: frame.index,
                kind: AlarmKind::UnmatchedPulse,
                observed: frame.index as f64,
                expected: f64::NAN,
            };
            self.alarms.push(alarm);
            return Err(alarm);
        };
        let derandomized = frame.state.apply(PhaseShiftGate::new(phi_r).inverse());
        let meas = self.detector.measure(&derandomized, frame.index, rng);

        if let Some(alarm) = self.delay_monitor.check(frame.index, observed_rtt) {
            self.alarms.push(alarm);
        }
        let monitored = frame.role == PulseRole::Reference || self.monitor_key_pulses;
        if monitored {
            let expected = self.expected_unit_count;
            if let Some(alarm) = monitor_intensity(&mut self.intensity_monitor, &meas, expected) {
                self.alarms.push(alarm);
            }
        }
        Ok(meas)
    }
}

pub fn bob_emit<R: Rng + ?Sized>(bob: &mut BobState, pulse_index: u64, role: PulseRole, base_amplitude: f64, rng: &mut R) -> Result<PulseFrame> {
    bob.emit(pulse_index, role, base_amplitude, rng)
}

pub fn bob_receive<R: Rng + ?Sized>(bob: &mut BobState, frame: &PulseFrame, observed_rtt: f64, rng: &mut R) -> Result<Measurement, Alarm> {
    bob.receive(frame, observed_rtt, rng)
}

/// What Alice put on one pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulation {
    pub reference_phase: f64,
    pub reference_slot: usize,
    /// Total phase added (φ_R or φ_k = Δφ_k + φ_R).
    pub added_phase: f64,
    pub word: Option<SymbolWord>,
    pub ring_scale: f64,
}

/// Alice: modulates reference and key phases onto Bob's envelopes.
#[derive(Debug, Clone)]
pub struct AliceState {
    key_source: SimRng,
    pub scheme: Scheme,
    pub references: ReferenceBook,
    pub schedule: ReferenceSchedule,
    pub sent_bits: Vec<bool>,
}

impl AliceState {
    pub fn new(key_source: SimRng, scheme: Scheme, references: ReferenceBook, schedule: ReferenceSchedule) -> Self {
        Self {
            key_source,
            scheme,
            references,
            schedule,
            sent_bits: Vec::new(),
        }
    }

    /// Adds φ_R on reference slots and φ_k = Δφ_k + φ_R on key slots.
    /// Amplitudes are scaled by ring / outermost ring so Alice never
    /// amplifies.
    pub fn modulate(&mut self, frame: &PulseFrame) -> Result<(PulseFrame, Modulation)> {
        let (reference_phase, reference_slot) = self.references.reference_for(frame.index);
        let max_scale = self.scheme.max_scale();
        let (added_phase, word, ring_scale) = match self.schedule.role(frame.index) {
            PulseRole::Reference => (reference_phase, None, 1.0),
            PulseRole::Key => {
                let value = self.key_source.random_range(0..self.scheme.num_symbols() as u32);
                let word = self.scheme.word(value)?;
                let (delta, scale) = self.scheme.encode(word)?;
                self.sent_bits.extend(word.bits());
                (dpsk_target(delta, reference_phase), Some(word), scale)
            }
        };
        let state = frame
            .state
            .apply(PhaseShiftGate::new(added_phase))
            .scaled(ring_scale / max_scale)?;
        let out = PulseFrame { state, ..*frame };
        Ok((
            out,
            Modulation {
                reference_phase,
                reference_slot,
                added_phase,
                word,
                ring_scale,
            },
        ))
    }
}

pub fn alice_modulate(alice: &mut AliceState, frame: &PulseFrame) -> Result<(PulseFrame, Modulation)> {
    alice.modulate(frame)
}

/// Differential decode of a key reading against its reference reading.
///
/// `reference_offset` is φ_R(key) − φ_R(reference) from the agreed list
/// (zero in fixed-reference mode). The ring is estimated from the photon
/// count relative to `expected_unit_count`.
pub fn extract_key(
    key_meas: &Measurement,
    ref_meas: &Measurement,
    reference_offset: f64,
    expected_unit_count: f64,
    scheme: &Scheme,
) -> (SymbolWord, f64, f64) {
    let delta = canonical_phase(phase_difference(key_meas.measured_phase, ref_meas.measured_phase) - reference_offset);
    let scale = if expected_unit_count > 0.0 {
        (key_meas.measured_photon_count as f64 / expected_unit_count).sqrt()
    } else {
        1.0
    };
    (scheme.decode(delta, scale), delta, scale)
}

/// Hamming distance / length.
pub fn compute_ber(alice_bits: &[bool], bob_bits: &[bool]) -> Result<f64> {
    if alice_bits.len() != bob_bits.len() {
        return Err(Error::LengthMismatch(alice_bits.len(), bob_bits.len()));
    }
    if alice_bits.is_empty() {
        return Ok(0.0);
    }
    let errors = alice_bits.iter().zip(bob_bits).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / alice_bits.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::OscillatorState;
    use crate::phasespace::{deg, rad, NoiseModel};
    use rand::SeedableRng;

    fn meas(index: u64, phase_deg: f64) -> Measurement {
        Measurement {
            pulse_index: index,
            measured_phase: rad(phase_deg),
            measured_photon_count: 100,
            true_phase_debug: rad(phase_deg),
        }
    }

    fn quiet_bob(randomizer: Randomizer, detector: Detector) -> BobState {
        BobState::new(
            randomizer,
            detector,
            IntensityMonitor::new(100, 3.0).unwrap(),
            DelayMonitor {
                baseline: 0.0,
                tolerance: 1e-7,
            },
            100.0,
            true,
        )
    }

    #[test]
    fn ber_examples() {
        let a = vec![true, false, true, true];
        assert_eq!(compute_ber(&a, &a).unwrap(), 0.0);
        let c: Vec<bool> = a.iter().map(|b| !b).collect();
        assert_eq!(compute_ber(&a, &c).unwrap(), 1.0);
        let mut x = vec![false; 1000];
        let mut y = x.clone();
        y[17] = true;
        assert!((compute_ber(&x, &y).unwrap() - 0.001).abs() < 1e-15);
        x.pop();
        assert!(matches!(compute_ber(&x, &y), Err(Error::LengthMismatch(999, 1000))));
    }

    #[test]
    fn extraction_subtracts_reference() {
        let s = Scheme::psk(16).unwrap();
        let (_, delta, _) = extract_key(&meas(1, 100.0), &meas(0, 30.0), 0.0, 100.0, &s);
        assert!((deg(delta) - 70.0).abs() < 1e-9);
        let (_, delta, _) = extract_key(&meas(1, -170.0), &meas(0, 170.0), 0.0, 100.0, &s);
        assert!((deg(delta) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn schedule_accounting() {
        let alt = ReferenceSchedule::default();
        assert_eq!(alt.role(0), PulseRole::Reference);
        assert_eq!(alt.role(1), PulseRole::Key);
        assert_eq!(alt.reference_index(7), 6);
        assert_eq!(alt.throughput_fraction(), 0.5);
        assert_eq!(alt.counts(10), (5, 5));
        let three = ReferenceSchedule::new(3).unwrap();
        assert_eq!(three.counts(12), (9, 3));
        assert_eq!(three.throughput_fraction(), 0.75);
        assert_eq!(three.reference_index(7), 4);
        assert!(ReferenceSchedule::new(0).is_err());
    }

    #[test]
    fn emit_logs_once() {
        let mut rng = SimRng::seed_from_u64(4);
        let mut bob = quiet_bob(Randomizer::Discrete(1), Detector::noiseless());
        let f = bob.emit(0, PulseRole::Reference, 10.0, &mut rng).unwrap();
        assert_eq!(f.state.phase(), 0.0);
        assert_eq!(f.state.amplitude(), 10.0);
        assert!(matches!(
            bob.emit(0, PulseRole::Reference, 10.0, &mut rng),
            Err(Error::DuplicatePulse(0))
        ));
    }

    #[test]
    fn unknown_pulse_raises_alarm() {
        let mut rng = SimRng::seed_from_u64(4);
        let mut bob = quiet_bob(Randomizer::default(), Detector::noiseless());
        let frame = PulseFrame {
            index: 42,
            state: GlauberState::new(1.0, 0.0).unwrap(),
            role: PulseRole::Key,
            elapsed: 0.0,
        };
        let err = bob.receive(&frame, 0.0, &mut rng).unwrap_err();
        assert_eq!(err.kind, AlarmKind::UnmatchedPulse);
        assert_eq!(bob.alarms.len(), 1);
    }

    #[test]
    fn derandomization_recovers_alice_phase() {
        // φ_p = 0.3 and φ_LO = 0.2 folded into the frame/oscillator.
        let mut rng = SimRng::seed_from_u64(9);
        let det = Detector::new(NoiseModel::noiseless(), OscillatorState::new(0.2, 0.0));
        let mut bob = quiet_bob(Randomizer::Continuous, det);
        let phi_k = 1.1;
        let frame = bob.emit(5, PulseRole::Key, 10.0, &mut rng).unwrap();
        let state = frame.state.apply(PhaseShiftGate::new(phi_k + 0.3));
        let back = PulseFrame { state, ..frame };
        let m = bob.receive(&back, 0.0, &mut rng).unwrap();
        assert!((m.measured_phase - canonical_phase(phi_k + 0.5)).abs() < 1e-12);
        assert_eq!(bob.in_flight(), 0);
    }

    #[test]
    fn receive_is_deterministic_given_rng() {
        let det = Detector::new(NoiseModel::default(), OscillatorState::default());
        let mut bob = quiet_bob(Randomizer::Discrete(16), det);
        let mut rng = SimRng::seed_from_u64(1);
        let f0 = bob.emit(0, PulseRole::Key, 10.0, &mut rng).unwrap();
        let mut twin = bob.clone();
        let a = bob.receive(&f0, 0.0, &mut SimRng::seed_from_u64(77)).unwrap();
        let b = twin.receive(&f0, 0.0, &mut SimRng::seed_from_u64(77)).unwrap();
        assert_eq!(a, b);
        let c = twin.clone().receive(&f0, 0.0, &mut SimRng::seed_from_u64(78));
        // consumed already in `twin`
        assert!(c.is_err());
    }

    #[test]
    fn alice_adds_reference_and_key_phases() {
        let scheme = Scheme::psk(4).unwrap();
        let mut alice = AliceState::new(
            SimRng::seed_from_u64(3),
            scheme.clone(),
            ReferenceBook::fixed(0.0),
            ReferenceSchedule::default(),
        );
        let frame = PulseFrame {
            index: 0,
            state: GlauberState::new(2.0, 0.7).unwrap(),
            role: PulseRole::Reference,
            elapsed: 0.0,
        };
        let (out, m) = alice.modulate(&frame).unwrap();
        assert_eq!(out.state.phase(), 0.7);
        assert!(m.word.is_none());

        let key = PulseFrame {
            index: 1,
            role: PulseRole::Key,
            ..frame
        };
        let (out, m) = alice.modulate(&key).unwrap();
        let word = m.word.unwrap();
        let (delta, _) = scheme.encode(word).unwrap();
        assert!((out.state.phase() - canonical_phase(0.7 + delta)).abs() < 1e-12);
        assert_eq!(alice.sent_bits, word.bits().collect::<Vec<_>>());
    }

    #[test]
    fn intensity_monitor_windows() {
        let mut mon = IntensityMonitor::new(4, 3.0).unwrap();
        for i in 0..3 {
            assert!(mon.observe(i, 100, 100.0).is_none());
        }
        assert!(mon.observe(3, 100, 100.0).is_none());
        assert_eq!(mon.windows(), 1);
        for i in 4..7 {
            assert!(mon.observe(i, 50, 100.0).is_none());
        }
        let alarm = mon.observe(7, 50, 100.0).unwrap();
        assert_eq!(alarm.kind, AlarmKind::IntensityLow);
        assert_eq!(alarm.observed, 50.0);
        assert_eq!(mon.alarmed_windows(), 1);
        // 3 / √(100 · 4) = 15%
        assert!((mon.threshold_fraction(100.0) - 0.15).abs() < 1e-12);
    }

    #[test]
    fn delay_monitor_examples() {
        let mon = DelayMonitor {
            baseline: 1e-4,
            tolerance: 100e-9,
        };
        assert!(mon.check(0, 1e-4).is_none());
        assert!(mon.check(0, 1e-4 + 50e-9).is_none());
        assert!(mon.check(0, 1e-4 - 99e-9).is_none());
        let a = mon.check(3, 1e-4 + 1e-6).unwrap();
        assert_eq!(a.kind, AlarmKind::Delay);
        assert_eq!(a.pulse_index, 3);
    }
}
