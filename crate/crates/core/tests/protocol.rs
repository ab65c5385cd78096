mod common;

use std::f64::consts::TAU;

use common::*;
use proptest::prelude::*;
use qpke_core::adversary::{AttackerDecode, InterTapPhase, TappingAttacker};
use qpke_core::channel::{OscillatorState, PathState, TapConfig};
use qpke_core::detection::Detector;
use qpke_core::modulation::{ReferenceBook, Scheme};
use qpke_core::phasespace::{canonical_phase, NoiseModel};
use qpke_core::protocol::{AlarmKind, IntensityMonitor, Randomizer, ReferenceSchedule};
use qpke_core::seed::SimRng;
use qpke_core::session::{run_session, write_ledger_csv, Attack, SessionParams};
use rand::SeedableRng;
use rand_distr::{Distribution, Poisson};
use statrs::distribution::{ChiSquared, ContinuousCDF, DiscreteCDF};

fn chi_square_p(stat: f64, df: usize) -> f64 {
    1.0 - ChiSquared::new(df as f64).unwrap().cdf(stat)
}

#[test]
fn randomizer_alphabet_is_uniform() {
    let r = Randomizer::Discrete(1024);
    let mut rng = SimRng::seed_from_u64(21);
    let mut counts = vec![0u64; 1024];
    let draws = 1_000_000;
    for _ in 0..draws {
        let k = (r.draw(&mut rng).rem_euclid(TAU) / (TAU / 1024.0)).round() as usize % 1024;
        counts[k] += 1;
    }
    let e = draws as f64 / 1024.0;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    assert!(chi_square_p(stat, 1023) > 0.01, "χ² = {stat}");
}

#[test]
fn single_phase_alphabet_is_degenerate() {
    let mut rng = SimRng::seed_from_u64(0);
    assert!((0..100).all(|_| Randomizer::Discrete(1).draw(&mut rng) == 0.0));
}

fn schemes() -> Vec<Scheme> {
    vec![
        Scheme::psk(2).unwrap(),
        Scheme::psk(4).unwrap(),
        Scheme::psk(16).unwrap(),
        Scheme::psk(64).unwrap(),
        Scheme::apsk8(),
        Scheme::apsk16(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn perfect_world_has_zero_ber(
        idx in 0usize..6,
        alphabet in prop_oneof![Just(None), Just(Some(1u32)), Just(Some(16)), Just(Some(1024))],
        k in 1u32..6,
        list in prop_oneof![Just(1usize), Just(8)],
        path_phase in -3.0f64..3.0,
        lo in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let mut p = SessionParams::ideal(schemes()[idx].clone(), 600, seed);
        // High photon number keeps Poisson ring estimates unambiguous.
        p.mean_photon_number = 1e4;
        p.randomizer = alphabet.map_or(Randomizer::Continuous, Randomizer::Discrete);
        p.schedule = ReferenceSchedule::new(k).unwrap();
        p.references = ReferenceBook::new(list, 0.4, seed, seed ^ 1, 97).unwrap();
        p.path.phase = path_phase;
        p.bob_detector = Detector::new(NoiseModel::noiseless(), OscillatorState::new(lo, 0.0));
        let r = run_session(&p).unwrap().result;
        prop_assert_eq!(r.ber, 0.0);
        prop_assert!(r.bits > 0);
        prop_assert_eq!(r.key_pulses + r.reference_pulses, r.total_pulses);
        prop_assert_eq!(r.throughput_fraction, r.key_pulses as f64 / r.total_pulses as f64);
    }
}

fn noisy(pulses: u64, seed: u64) -> SessionParams {
    let mut p = SessionParams::ideal(Scheme::psk(16).unwrap(), pulses, seed);
    p.bob_detector = Detector::new(NoiseModel::overall(rad(5.0)), OscillatorState::default());
    p
}

#[test]
fn ber_is_independent_of_slow_nuisance_phases() {
    let frozen = run_session(&noisy(200_000, 4)).unwrap().result;
    let mut drifting = noisy(200_000, 4);
    drifting.path.drift_step_sigma = rad(0.1);
    drifting.path.phase = 2.0;
    drifting.bob_detector.oscillator = OscillatorState::new(1.0, rad(0.1));
    let drifting = run_session(&drifting).unwrap().result;
    // Adjacent-slot drift adds ≈ 0.1°·√2 in quadrature to 7.07°: negligible.
    let tol = 4.0 * (2.0 * frozen.ber / frozen.kept_key_pulses as f64).sqrt();
    assert!((frozen.ber - drifting.ber).abs() < tol, "{} vs {}", frozen.ber, drifting.ber);
}

fn poisson_two_sided_tail(lambda: f64, sigmas: f64) -> f64 {
    let d = statrs::distribution::Poisson::new(lambda).unwrap();
    let lo = (lambda - sigmas * lambda.sqrt()).ceil() as u64;
    let hi = (lambda + sigmas * lambda.sqrt()).floor() as u64;
    // P(X < lo) + P(X > hi)
    d.cdf(lo - 1) + (1.0 - d.cdf(hi))
}

#[test]
fn intensity_false_alarm_rate_matches_poisson_tail() {
    let (window, n) = (20u64, 50.0);
    let oracle = poisson_two_sided_tail(window as f64 * n, 3.0);
    assert!((oracle - 0.0027).abs() < 0.001, "{oracle}");
    let mut monitor = IntensityMonitor::new(window, 3.0).unwrap();
    let mut rng = SimRng::seed_from_u64(8);
    let poisson = Poisson::new(n).unwrap();
    let windows = 100_000u64;
    for i in 0..window * windows {
        monitor.observe(i, poisson.sample(&mut rng) as u64, n);
    }
    let rate = monitor.alarmed_windows() as f64 / monitor.windows() as f64;
    assert!((rate - oracle).abs() < 4.0 * binomial_se(oracle, windows), "{rate} vs {oracle}");
}

#[test]
fn twenty_percent_tap_is_always_seen() {
    let mut p = SessionParams::ideal(Scheme::psk(16).unwrap(), 40_000, 2);
    p.intensity_window = 10_000;
    p.attack = Attack::Tapping(TappingAttacker {
        tap1: TapConfig { position_fraction: 0.9, tap_power_ratio: 0.2 },
        tap2: TapConfig { position_fraction: 0.9, tap_power_ratio: 0.2 },
        detector1: Detector::noiseless(),
        detector2: Detector::noiseless(),
        shared_lo: true,
        inter_tap: InterTapPhase::default(),
        decode: AttackerDecode::Differential,
        randomize_lo: false,
    });
    let r = run_session(&p).unwrap().result;
    assert_eq!(r.intensity_windows, 4);
    assert_eq!(r.alarmed_intensity_windows, 4);
    assert_eq!(r.alarm_count(AlarmKind::IntensityLow), 4);
}

#[test]
fn no_attack_alarms_stay_within_budget() {
    let mut p = noisy(400_000, 12);
    p.intensity_window = 40;
    let r = run_session(&p).unwrap().result;
    let oracle = poisson_two_sided_tail(40.0 * 100.0, 3.0);
    let rate = r.intensity_alarm_rate();
    assert!((rate - oracle).abs() < 4.0 * binomial_se(oracle, r.intensity_windows), "{rate}");
    assert_eq!(r.alarm_count(AlarmKind::Delay), 0);
}

#[test]
fn jitter_within_tolerance_raises_no_delay_alarm() {
    let mut p = noisy(20_000, 1);
    p.path.delay_jitter_s = 10e-9;
    let r = run_session(&p).unwrap().result;
    assert_eq!(r.alarm_count(AlarmKind::Delay), 0);
    assert_eq!(r.discarded_key_pulses, 0);
}

#[test]
fn in_channel_phase_is_independent_of_key() {
    // A single observer on the return leg sees φ_r + φ_k (+ constants).
    // With a continuous randomizer that reading carries no information
    // about the symbol.
    let mut p = SessionParams::ideal(Scheme::psk(4).unwrap(), 80_000, 31);
    p.randomizer = Randomizer::Continuous;
    p.record_ledger = true;
    let out = run_session(&p).unwrap();
    let bins = 8;
    let mut table = vec![vec![0f64; 4]; bins];
    for r in out.ledger.iter().filter(|r| r.sent.is_some()) {
        let observed = canonical_phase(r.randomizer_phase + r.added_phase + 0.5 * r.path_phase);
        let b = ((observed.rem_euclid(TAU) / TAU) * bins as f64) as usize % bins;
        table[b][r.sent.unwrap().value() as usize] += 1.0;
    }
    let total: f64 = table.iter().flatten().sum();
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..4).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let mut stat = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = rows[i] * cols[j] / total;
            stat += (o - e).powi(2) / e;
        }
    }
    assert!(chi_square_p(stat, (bins - 1) * 3) > 0.01, "χ² = {stat}");
}

#[test]
fn public_ledger_never_carries_private_phases() {
    let mut p = SessionParams::ideal(Scheme::psk(16).unwrap(), 50, 3);
    p.record_ledger = true;
    let out = run_session(&p).unwrap();
    let mut buf = Vec::new();
    write_ledger_csv(&mut buf, &out.ledger, false).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, "index,role,bob_measured_phase_deg,decoded_bits");
    let mut debug = Vec::new();
    write_ledger_csv(&mut debug, &out.ledger, true).unwrap();
    assert!(String::from_utf8(debug).unwrap().lines().next().unwrap().contains("phi_r_deg"));
}

#[test]
fn path_state_default_is_valid() {
    PathState::default().validate().unwrap();
}
