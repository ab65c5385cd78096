mod common;

use common::*;
use proptest::prelude::*;
use qpke_core::detection::{Detector};
use qpke_core::channel::OscillatorState;
use qpke_core::modulation::{select_reference, ReferenceList, Scheme};
use qpke_core::phasespace::{canonical_phase, NoiseModel, GlauberState};
use qpke_core::seed::SimRng;
use rand::{Rng, SeedableRng};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn schemes() -> Vec<Scheme> {
    vec![
        Scheme::psk(2).unwrap(),
        Scheme::psk(4).unwrap(),
        Scheme::psk(8).unwrap(),
        Scheme::psk(16).unwrap(),
        Scheme::psk(32).unwrap(),
        Scheme::apsk8(),
        Scheme::apsk16(),
    ]
}

fn chi_square_p(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

proptest! {
    #[test]
    fn encode_decode_round_trip(idx in 0usize..7, value in any::<u32>(), jitter in -0.999f64..0.999) {
        let scheme = &schemes()[idx];
        let word = scheme.word(value % scheme.num_symbols() as u32).unwrap();
        let (phase, scale) = scheme.encode(word).unwrap();
        let (ring, _) = scheme.point_of(word).unwrap();
        let half_cell = scheme.rings()[ring].spacing() / 2.0;
        prop_assert_eq!(scheme.decode(canonical_phase(phase + jitter * half_cell), scale), word);
    }

    #[test]
    fn neighbours_differ_in_one_bit(idx in 0usize..7, pos in 0usize..64) {
        let scheme = &schemes()[idx];
        for (r, ring) in scheme.rings().iter().enumerate() {
            let n = ring.num_phases as usize;
            if n < 2 { continue; }
            let p = pos % n;
            let a = scheme.word_at(r, p).value();
            let b = scheme.word_at(r, (p + 1) % n).value();
            prop_assert_eq!((a ^ b).count_ones(), 1);
        }
    }
}

#[test]
fn sixteen_psk_single_measurement_ser() {
    // One 5° measurement against an 11.25° half-width: P(|N(0,5°)| > 11.25°).
    let oracle = psk_symbol_error_rate(16, rad(5.0));
    assert!((oracle - 0.0245).abs() < 5e-4);
    let scheme = Scheme::psk(16).unwrap();
    let det = Detector::new(NoiseModel::overall(rad(5.0)), OscillatorState::default());
    let mut rng = SimRng::seed_from_u64(3);
    let n = 400_000u64;
    let mut errors = 0u64;
    for i in 0..n {
        let word = scheme.word(rng.random_range(0..16)).unwrap();
        let (phase, _) = scheme.encode(word).unwrap();
        let m = det.measure(&GlauberState::from_mean_photon_number(100.0, phase).unwrap(), i, &mut rng);
        if scheme.decode(m.measured_phase, 1.0) != word {
            errors += 1;
        }
    }
    let ser = errors as f64 / n as f64;
    assert!((ser - oracle).abs() < 4.0 * binomial_se(oracle, n), "{ser} vs {oracle}");
}

#[test]
fn reference_selection_is_uniform() {
    let list = ReferenceList {
        phases: (0..8).map(|i| i as f64 * 0.1).collect(),
        schedule_seed: 99,
        period: 10_000,
    };
    let mut counts = [0u64; 8];
    for i in 0..200_000 {
        counts[select_reference(&list, i).unwrap().1] += 1;
    }
    let p = chi_square_p(&counts);
    assert!(p > 0.01, "p = {p}, counts {counts:?}");
}

#[test]
fn spacing_guideline() {
    assert!(!Scheme::psk(16).unwrap().meets_spacing_guideline());
    assert!(Scheme::psk(32).unwrap().meets_spacing_guideline());
    assert!((deg(Scheme::psk(16).unwrap().min_spacing()) - 22.5).abs() < 1e-12);
}
