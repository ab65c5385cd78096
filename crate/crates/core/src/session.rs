//! The roundtrip session loop.
//!
//! One slot: Bob emits → outbound leg (optional T1 tap) → Alice modulates →
//! return leg (optional T2 tap or intercept-resend) → Bob derandomizes,
//! measures, runs the monitors → key pulses are decoded against their
//! reference. Channel and oscillator drift advance once per slot.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::adversary::{
    finish_report, AttackReport, AttackerDecode, AttackerReading, AttackerSample, AttackerTally, ErrorBudget,
    InterceptResendAttacker, TappingAttacker,
};
use crate::channel::{advance_slot, tap, traverse, OscillatorState, PathState};
use crate::detection::{ConstellationPoint, Detector, Measurement};
use crate::error::{Error, Result};
use crate::modulation::{ReferenceBook, Scheme, SymbolWord};
use crate::phasespace::{canonical_phase, deg, phase_difference, GlauberState, PhaseShiftGate};
use crate::protocol::{
    compute_ber, extract_key, Alarm, AlarmKind, AliceState, BobState, DelayMonitor, IntensityMonitor, PulseFrame,
    PulseRole, Randomizer, ReferenceSchedule,
};
use crate::seed::{stream, Stream};
use crate::stats::RunningStats;

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Attack {
    #[default]
    None,
    InterceptResend(InterceptResendAttacker),
    Tapping(TappingAttacker),
}

impl Attack {
    pub fn name(&self) -> &'static str {
        match self {
            Attack::None => "none",
            Attack::InterceptResend(_) => "intercept_resend",
            Attack::Tapping(_) => "tapping",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionParams {
    pub master_seed: u64,
    pub session_id: u64,
    pub pulses: u64,
    /// Mean photon number of Bob's emitted pulses.
    pub mean_photon_number: f64,
    pub scheme: Scheme,
    pub randomizer: Randomizer,
    pub schedule: ReferenceSchedule,
    /// Shared reference list; Alice and Bob each get a copy.
    pub references: ReferenceBook,
    pub path: PathState,
    pub bob_detector: Detector,
    pub intensity_window: u64,
    pub intensity_sigmas: f64,
    pub delay_tolerance_s: f64,
    pub attack: Attack,
    pub record_ledger: bool,
    pub record_constellation: bool,
}

impl SessionParams {
    /// Noise-free, frozen, lossless defaults around `scheme`.
    pub fn ideal(scheme: Scheme, pulses: u64, master_seed: u64) -> Self {
        Self {
            master_seed,
            session_id: 0,
            pulses,
            mean_photon_number: 100.0,
            scheme,
            randomizer: Randomizer::default(),
            schedule: ReferenceSchedule::default(),
            references: ReferenceBook::fixed(0.0),
            path: PathState {
                attenuation_db_per_km: 0.0,
                ..PathState::frozen()
            },
            bob_detector: Detector::noiseless(),
            intensity_window: 1000,
            intensity_sigmas: 3.0,
            delay_tolerance_s: 100e-9,
            attack: Attack::None,
            record_ledger: false,
            record_constellation: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pulses == 0 {
            return Err(Error::Config("pulses must be positive".into()));
        }
        if !(self.mean_photon_number.is_finite() && self.mean_photon_number > 0.0) {
            return Err(Error::Config(format!(
                "mean_photon_number must be positive, got {}",
                self.mean_photon_number
            )));
        }
        if !(self.delay_tolerance_s.is_finite() && self.delay_tolerance_s >= 0.0) {
            return Err(Error::Config("delay tolerance must be nonnegative".into()));
        }
        self.path.validate()?;
        IntensityMonitor::new(self.intensity_window, self.intensity_sigmas)?;
        match &self.attack {
            Attack::None => {}
            Attack::InterceptResend(a) => {
                if !(0.0..=1.0).contains(&a.position_fraction) {
                    return Err(Error::Config("attack.position_fraction must lie in [0, 1]".into()));
                }
                if !(a.regeneration_ratio.is_finite() && a.regeneration_ratio >= 0.0) {
                    return Err(Error::Config("attack.regeneration_amplitude_ratio must be nonnegative".into()));
                }
            }
            Attack::Tapping(t) => {
                t.tap1.validate()?;
                t.tap2.validate()?;
            }
        }
        Ok(())
    }

    /// Mean photon count Bob expects from a unit-ring pulse.
    pub fn expected_unit_count(&self) -> f64 {
        let max = self.scheme.max_scale();
        self.mean_photon_number * self.path.power_ratio(2.0) / (max * max)
    }
}

/// One slot of the per-pulse ledger. Fields after `discarded` are debug
/// values that would not be available to any party.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseRecord {
    pub index: u64,
    pub role: PulseRole,
    pub bob_measured_phase: Option<f64>,
    pub decoded: Option<SymbolWord>,
    pub sent: Option<SymbolWord>,
    pub discarded: bool,
    pub randomizer_phase: f64,
    pub reference_phase: f64,
    pub added_phase: f64,
    pub path_phase: f64,
    pub bob_lo: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionResult {
    #[serde(skip)]
    pub alice_bits: Vec<bool>,
    #[serde(skip)]
    pub bob_bits: Vec<bool>,
    pub ber: f64,
    pub bits: u64,
    pub key_pulses: u64,
    pub reference_pulses: u64,
    pub total_pulses: u64,
    pub throughput_fraction: f64,
    #[serde(skip)]
    pub alarms: Vec<Alarm>,
    pub alarm_counts: BTreeMap<String, u64>,
    pub kept_key_pulses: u64,
    pub discarded_key_pulses: u64,
    pub symbol_errors: u64,
    pub symbol_error_rate: f64,
    /// Std of Bob's differential measurement error, radians.
    pub bob_phase_error_std: f64,
    pub intensity_windows: u64,
    pub alarmed_intensity_windows: u64,
    pub min_spacing_deg: f64,
    pub meets_spacing_guideline: bool,
}

impl SessionResult {
    pub fn intensity_alarm_rate(&self) -> f64 {
        if self.intensity_windows == 0 {
            0.0
        } else {
            self.alarmed_intensity_windows as f64 / self.intensity_windows as f64
        }
    }

    pub fn alarm_count(&self, kind: AlarmKind) -> u64 {
        self.alarm_counts.get(kind.as_str()).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub result: SessionResult,
    pub ledger: Vec<PulseRecord>,
    pub constellation: Vec<ConstellationPoint>,
    pub attacker_constellation: Vec<ConstellationPoint>,
    pub attack: Option<AttackReport>,
}

/// Moves a pulse over `[from, to]`; empty spans are a no-op.
fn span(state: GlauberState, path: &PathState, from: f64, to: f64) -> Result<(GlauberState, f64)> {
    if to <= from {
        Ok((state, 0.0))
    } else {
        traverse(&state, path, from, to)
    }
}

struct LastReference {
    index: u64,
    meas: Measurement,
    attacker: Option<AttackerReading>,
}

pub fn run_session(params: &SessionParams) -> Result<SessionOutcome> {
    params.validate()?;
    let seed = params.master_seed;
    let id = params.session_id;
    let mut rng_randomizer = stream(seed, id, Stream::Randomizer);
    let mut rng_channel = stream(seed, id, Stream::Channel);
    let mut rng_bob = stream(seed, id, Stream::BobDetector);
    let mut rng_attacker = stream(seed, id, Stream::Attacker);
    let mut rng_guess = stream(seed, id, Stream::AttackerGuess);

    let scheme = &params.scheme;
    let mut path = params.path.clone();
    let expected_unit_count = params.expected_unit_count();
    let mut bob = BobState::new(
        params.randomizer,
        params.bob_detector.clone(),
        IntensityMonitor::new(params.intensity_window, params.intensity_sigmas)?,
        DelayMonitor {
            baseline: path.roundtrip_delay(),
            tolerance: params.delay_tolerance_s,
        },
        expected_unit_count,
        scheme.rings().len() == 1,
    );
    let mut bob_book = params.references.clone();
    let mut alice = AliceState::new(
        stream(seed, id, Stream::KeySource),
        scheme.clone(),
        params.references.clone(),
        params.schedule,
    );

    let mut attack = params.attack.clone();
    match &mut attack {
        Attack::None => {}
        Attack::InterceptResend(a) => {
            if a.randomize_lo {
                a.detector.oscillator.offset = canonical_phase(rng_guess.random_range(-std::f64::consts::PI..std::f64::consts::PI));
            }
        }
        Attack::Tapping(t) => {
            if t.randomize_lo {
                for osc in t.oscillators_mut() {
                    osc.offset = canonical_phase(rng_guess.random_range(-std::f64::consts::PI..std::f64::consts::PI));
                }
            }
        }
    }
    let (attacker_mode, known_reference) = match &attack {
        Attack::Tapping(t) => {
            let known = if params.references.is_dynamic() {
                0.0
            } else {
                params.references.clone().reference_for(0).0
            };
            (t.decode, known)
        }
        _ => (AttackerDecode::Differential, 0.0),
    };
    let jitter = (path.delay_jitter_s > 0.0).then(|| Normal::new(0.0, path.delay_jitter_s).expect("finite jitter"));

    let amplitude = params.mean_photon_number.sqrt();
    let mut bob_bits = Vec::new();
    let mut alice_bits = Vec::new();
    let mut symbols_kept = 0u64;
    let mut symbol_errors = 0u64;
    let mut discarded = 0u64;
    let mut bob_error = RunningStats::default();
    let mut tally = AttackerTally::default();
    let mut ledger = Vec::new();
    let mut constellation = Vec::new();
    let mut attacker_constellation = Vec::new();
    let mut last_ref: Option<LastReference> = None;

    for index in 0..params.pulses {
        let role = params.schedule.role(index);
        let frame = bob.emit(index, role, amplitude, &mut rng_randomizer)?;
        let randomizer_phase = frame.state.phase();

        // Outbound leg, Bob (0) → Alice (1).
        let mut t1_meas = None;
        let (state, mut elapsed) = match &attack {
            Attack::Tapping(t) => {
                let p = t.tap1.position_fraction;
                let (s, d1) = span(frame.state, &path, 0.0, p)?;
                let (through, diverted) = tap(&s, &t.tap1)?;
                t1_meas = Some(t.tap_phase_t1(&diverted, index, &mut rng_attacker));
                let (s, d2) = span(through, &path, p, 1.0)?;
                (s, d1 + d2)
            }
            _ => span(frame.state, &path, 0.0, 1.0)?,
        };
        let (frame, modulation) = alice.modulate(&PulseFrame { state, elapsed, ..frame })?;
        let mut state = frame.state;
        if let Attack::Tapping(t) = &attack {
            state = state.apply(PhaseShiftGate::new(t.inter_tap.phase));
        }

        // Return leg, Alice (0) → Bob (1); attack positions are distances
        // from Bob.
        let mut attacker_reading = None;
        let mut attacker_delay = 0.0;
        match &attack {
            Attack::None => {
                let (s, d) = span(state, &path, 0.0, 1.0)?;
                state = s;
                elapsed += d;
            }
            Attack::Tapping(t) => {
                let q = 1.0 - t.tap2.position_fraction;
                let (s, d1) = span(state, &path, 0.0, q)?;
                let (through, diverted) = tap(&s, &t.tap2)?;
                let m2 = t.tap_phase_t2(&diverted, index, &mut rng_attacker);
                let (s, d2) = span(through, &path, q, 1.0)?;
                state = s;
                elapsed += d1 + d2;
                let m1 = t1_meas.expect("tapped on the way out");
                attacker_reading = Some(AttackerReading::two_point(&m1, &m2)?);
            }
            Attack::InterceptResend(a) => {
                let q = 1.0 - a.position_fraction;
                let (s, d1) = span(state, &path, 0.0, q)?;
                let intercepted = PulseFrame {
                    state: s,
                    elapsed: 0.0,
                    ..frame
                };
                let (resent, m) = a.intercept_resend(&intercepted, &mut rng_attacker)?;
                let (s, d2) = span(resent.state, &path, q, 1.0)?;
                state = s;
                elapsed += d1 + d2;
                attacker_delay = resent.elapsed;
                attacker_reading = Some(AttackerReading::single(&m));
            }
        }
        let mut observed_rtt = elapsed + attacker_delay + path.excess_delay_s;
        if let Some(j) = &jitter {
            observed_rtt += j.sample(&mut rng_channel);
        }

        let alarms_before = bob.alarms.len();
        let received = bob.receive(
            &PulseFrame {
                state,
                elapsed: observed_rtt,
                ..frame
            },
            observed_rtt,
            &mut rng_bob,
        );
        let delay_failed = bob.alarms[alarms_before..]
            .iter()
            .any(|a| a.kind == AlarmKind::Delay);
        let meas = received.ok().filter(|_| !delay_failed);

        let mut record = PulseRecord {
            index,
            role,
            bob_measured_phase: meas.map(|m| m.measured_phase),
            decoded: None,
            sent: modulation.word,
            discarded: meas.is_none(),
            randomizer_phase,
            reference_phase: modulation.reference_phase,
            added_phase: modulation.added_phase,
            path_phase: path.phase,
            bob_lo: bob.detector.oscillator.offset,
        };

        match role {
            PulseRole::Reference => {
                last_ref = meas.map(|m| LastReference {
                    index,
                    meas: m,
                    attacker: attacker_reading,
                });
            }
            PulseRole::Key => {
                let sent = modulation.word.expect("key slots carry a word");
                let ref_index = params.schedule.reference_index(index);
                let reference = last_ref.as_ref().filter(|r| r.index == ref_index);
                match (meas, reference) {
                    (Some(key_meas), Some(reference)) => {
                        let offset = phase_difference(bob_book.reference_for(index).0, bob_book.reference_for(ref_index).0);
                        let (word, delta, scale) =
                            extract_key(&key_meas, &reference.meas, offset, expected_unit_count, scheme);
                        symbols_kept += 1;
                        if word != sent {
                            symbol_errors += 1;
                        }
                        bob_bits.extend(word.bits());
                        alice_bits.extend(sent.bits());
                        bob_error.push(phase_difference(key_meas.phase_error(), reference.meas.phase_error()));
                        record.decoded = Some(word);
                        if params.record_constellation {
                            constellation.push(ConstellationPoint {
                                pulse_index: index,
                                symbol_true: sent.value(),
                                phase: delta,
                                ring: scale,
                            });
                        }
                        if let (Some(key), Some(reference)) = (attacker_reading, reference.attacker) {
                            let sample = AttackerSample {
                                key,
                                reference,
                                sent,
                                key_phase_debug: modulation.added_phase,
                            };
                            tally.record(&sample, scheme, attacker_mode, known_reference);
                            if params.record_constellation {
                                let scale = if reference.photon_count > 0 {
                                    (key.photon_count as f64 / reference.photon_count as f64).sqrt()
                                } else {
                                    1.0
                                };
                                attacker_constellation.push(ConstellationPoint {
                                    pulse_index: index,
                                    symbol_true: sent.value(),
                                    phase: phase_difference(key.estimate, reference.estimate),
                                    ring: scale,
                                });
                            }
                        }
                    }
                    (key_meas, _) => {
                        if key_meas.is_some() {
                            let alarm = Alarm {
                                pulse_index: index,
                                kind: AlarmKind::MissingReference,
                                observed: ref_index as f64,
                                expected: ref_index as f64,
                            };
                            bob.alarms.push(alarm);
                        }
                        record.discarded = true;
                        discarded += 1;
                    }
                }
            }
        }
        if params.record_ledger {
            ledger.push(record);
        }

        // Drift: path, Bob's LO, then attacker oscillators.
        let attacker_oscillators: Vec<&mut OscillatorState> = match &mut attack {
            Attack::None => Vec::new(),
            Attack::InterceptResend(a) => vec![&mut a.detector.oscillator],
            Attack::Tapping(t) => t.oscillators_mut(),
        };
        advance_slot(
            &mut path,
            std::iter::once(&mut bob.detector.oscillator).chain(attacker_oscillators),
            &mut rng_channel,
        );
        if let Attack::Tapping(t) = &mut attack {
            t.inter_tap.step(&mut rng_channel);
        }
    }

    let (key_pulses, reference_pulses) = params.schedule.counts(params.pulses);
    let ber = compute_ber(&alice_bits, &bob_bits)?;
    let ser = if symbols_kept > 0 {
        symbol_errors as f64 / symbols_kept as f64
    } else {
        0.0
    };
    let result = SessionResult {
        bits: bob_bits.len() as u64,
        alice_bits,
        bob_bits,
        ber,
        key_pulses,
        reference_pulses,
        total_pulses: params.pulses,
        throughput_fraction: key_pulses as f64 / params.pulses as f64,
        alarm_counts: crate::adversary::alarm_counts(&bob.alarms),
        kept_key_pulses: symbols_kept,
        discarded_key_pulses: discarded,
        symbol_errors,
        symbol_error_rate: ser,
        bob_phase_error_std: bob_error.std(),
        intensity_windows: bob.intensity_monitor.windows(),
        alarmed_intensity_windows: bob.intensity_monitor.alarmed_windows(),
        min_spacing_deg: deg(scheme.min_spacing()),
        meets_spacing_guideline: scheme.meets_spacing_guideline(),
        alarms: bob.alarms,
    };

    let attack_report = match &params.attack {
        Attack::None => None,
        other => {
            let budget = attacker_budget(params, other)?;
            Some(finish_report(
                other.name(),
                tally,
                result.ber,
                result.symbol_error_rate,
                &result.alarms,
                budget,
            ))
        }
    };

    Ok(SessionOutcome {
        result,
        ledger,
        constellation,
        attacker_constellation,
        attack: attack_report,
    })
}

/// Nominal per-measurement δφ at the first tap point (tapping only).
fn attacker_budget(params: &SessionParams, attack: &Attack) -> Result<Option<ErrorBudget>> {
    let Attack::Tapping(t) = attack else {
        return Ok(None);
    };
    let n = params.mean_photon_number * params.path.power_ratio(t.tap1.position_fraction) * t.tap1.tap_power_ratio;
    if n <= 0.0 {
        return Ok(None);
    }
    Ok(Some(ErrorBudget::from_sigma(t.detector1.total_sigma(n)?)))
}

/// Per-pulse ledger. Debug columns carry the private and nuisance phases
/// and must never be shared with a protocol party.
pub fn write_ledger_csv<W: Write>(writer: W, records: &[PulseRecord], include_debug: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["index", "role", "bob_measured_phase_deg", "decoded_bits"];
    if include_debug {
        header.extend([
            "sent_bits",
            "discarded",
            "phi_r_deg",
            "phi_reference_deg",
            "phi_alice_deg",
            "path_phase_deg",
            "bob_lo_deg",
        ]);
    }
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.index.to_string(),
            r.role.as_str().to_string(),
            r.bob_measured_phase
                .map(|p| format!("{:.6}", deg(p)))
                .unwrap_or_default(),
            r.decoded.map(|d| d.bit_string()).unwrap_or_default(),
        ];
        if include_debug {
            row.extend([
                r.sent.map(|s| s.bit_string()).unwrap_or_default(),
                r.discarded.to_string(),
                format!("{:.6}", deg(r.randomizer_phase)),
                format!("{:.6}", deg(r.reference_phase)),
                format!("{:.6}", deg(r.added_phase)),
                format!("{:.6}", deg(r.path_phase)),
                format!("{:.6}", deg(r.bob_lo)),
            ]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
