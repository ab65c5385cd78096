//! Named, ready-to-run experiments.

use serde::Serialize;

use super::config::{AttackConfig, ExperimentConfig, InterceptResendConfig, TappingConfig};
use super::sweep::SweepSpec;
use crate::detection::{sample_phase_errors, Detector};
use crate::error::Result;
use crate::phasespace::{deg, rad, NoiseModel};
use crate::channel::OscillatorState;
use crate::modulation::SchemeSpec;
use crate::stats::sample_std;

/// Detector-only experiment: phase-error spread at fixed photon numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseNoiseJob {
    pub mean_photon_numbers: Vec<f64>,
    pub draws: usize,
    pub equipment_sigma_deg: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseNoiseRow {
    pub mean_photon_number: f64,
    pub draws: usize,
    pub sample_std_deg: f64,
    pub model_sigma_deg: f64,
}

impl PhaseNoiseJob {
    pub fn run(&self, parallel: bool) -> Result<Vec<PhaseNoiseRow>> {
        let det = Detector::new(
            NoiseModel::default().with_equipment_sigma(rad(self.equipment_sigma_deg)),
            OscillatorState::default(),
        );
        self.mean_photon_numbers
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let errors = sample_phase_errors(&det, n, self.draws, crate::seed::derive(self.seed, &[i as u64]), parallel)?;
                Ok(PhaseNoiseRow {
                    mean_photon_number: n,
                    draws: self.draws,
                    sample_std_deg: deg(sample_std(&errors)),
                    model_sigma_deg: deg(det.total_sigma(n)?),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PresetJob {
    Run(ExperimentConfig),
    /// Several labelled runs reported side by side.
    Compare(Vec<(String, ExperimentConfig)>),
    Sweep(SweepSpec),
    PhaseNoise(PhaseNoiseJob),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub job: PresetJob,
}

/// Lossless, frozen link with 5° overall detector uncertainty everywhere.
fn canonical(seed: u64, pulses: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::minimal(seed);
    c.pulses = pulses;
    c.mean_photon_number = 100.0;
    c.scheme = SchemeSpec::psk(16);
    c.channel.attenuation_db_per_km = 0.0;
    c.channel.path_drift_step_deg = 0.0;
    c.bob.equipment_sigma_deg = 5.0;
    c.bob.quantum_noise = false;
    c.output.ledger = false;
    c.output.constellation = false;
    c
}

fn canonical_tapping(seed: u64, pulses: u64) -> ExperimentConfig {
    let mut c = canonical(seed, pulses);
    c.attack = AttackConfig::Tapping(TappingConfig {
        t1_tap_ratio: 0.1,
        t2_tap_ratio: 0.1,
        equipment_sigma_deg: 5.0,
        quantum_noise: false,
        ..TappingConfig::default()
    });
    c
}

pub fn exact_cancellation_config(scheme: SchemeSpec) -> ExperimentConfig {
    let mut c = canonical(1, 10_000);
    c.scheme = scheme;
    c.bob.equipment_sigma_deg = 0.0;
    c.channel.path_phase_deg = 37.0;
    c.bob.lo_offset_deg = -21.0;
    c
}

pub fn presets() -> Vec<Preset> {
    let intercept = |ratio: f64| {
        let mut c = canonical(7, 200_000);
        c.attack = AttackConfig::InterceptResend(InterceptResendConfig {
            equipment_sigma_deg: 5.0,
            quantum_noise: false,
            regeneration_amplitude_ratio: ratio,
            ..InterceptResendConfig::default()
        });
        c
    };
    let dynamic = |list_size: usize| {
        let mut c = canonical_tapping(9, 200_000);
        c.reference.list_size = list_size;
        c.reference.refresh_period_pulses = 1_000;
        c
    };
    let tap_sweep = {
        let mut base = ExperimentConfig::minimal(8);
        base.pulses = 4_000;
        base.channel.attenuation_db_per_km = 0.0;
        base.channel.path_drift_step_deg = 0.0;
        base.monitor.intensity_window_pulses = 16;
        base.output.ledger = false;
        base.output.constellation = false;
        base.attack = AttackConfig::Tapping(TappingConfig::default());
        SweepSpec {
            parameter: "attack.t1_tap_ratio".into(),
            linked: vec!["attack.t2_tap_ratio".into()],
            values: [0.01, 0.015, 0.02, 0.03, 0.04, 0.05]
                .into_iter()
                .map(toml::Value::Float)
                .collect(),
            replications: 20,
            parallel: true,
            base,
        }
    };
    let throughput = {
        let mut base = canonical(6, 840);
        base.bob.equipment_sigma_deg = 0.0;
        SweepSpec {
            parameter: "reference.keys_per_reference".into(),
            linked: vec![],
            values: [1, 2, 3, 4, 7].into_iter().map(toml::Value::Integer).collect(),
            replications: 1,
            parallel: false,
            base,
        }
    };
    let mut determinism = ExperimentConfig::minimal(10);
    determinism.pulses = 2_000;
    determinism.output.ledger_debug = true;
    determinism.attack = AttackConfig::Tapping(TappingConfig::default());

    vec![
        Preset {
            name: "exact-cancellation",
            description: "zero-noise frozen link, 10^4 pulses: BER must be exactly 0",
            job: PresetJob::Compare(
                [
                    ("4-psk", SchemeSpec::psk(4)),
                    ("16-psk", SchemeSpec::psk(16)),
                    ("64-psk", SchemeSpec::psk(64)),
                    ("8-apsk", SchemeSpec::apsk(vec![1.0, 2.0], vec![4, 4])),
                    ("16-apsk", SchemeSpec::apsk(vec![1.0, 2.57], vec![4, 12])),
                ]
                .into_iter()
                .map(|(l, s)| (l.to_string(), exact_cancellation_config(s)))
                .collect(),
            ),
        },
        Preset {
            name: "uncertainty-anchors",
            description: "detector phase-error spread at n = 0.25, 1, 4.5, 100 with no equipment noise",
            job: PresetJob::PhaseNoise(PhaseNoiseJob {
                mean_photon_numbers: vec![0.25, 1.0, 4.5, 100.0],
                draws: 100_000,
                equipment_sigma_deg: 0.0,
                seed: 2,
            }),
        },
        Preset {
            name: "tap-anchor",
            description: "attacker sigma at diverted n = 10 with 5 deg equipment noise",
            job: PresetJob::PhaseNoise(PhaseNoiseJob {
                mean_photon_numbers: vec![10.0],
                draws: 100_000,
                equipment_sigma_deg: 5.0,
                seed: 3,
            }),
        },
        Preset {
            name: "two-point-composition",
            description: "tapping at 10% with 5 deg per measurement: combined and differential error spreads",
            job: PresetJob::Run(canonical_tapping(4, 200_000)),
        },
        Preset {
            name: "attacker-disadvantage",
            description: "16-PSK, n = 100, tap 0.1, 5 deg: attacker vs Bob symbol error rate over 10^6 symbols",
            job: PresetJob::Run(canonical_tapping(5, 2_000_000)),
        },
        Preset {
            name: "throughput",
            description: "key fraction for 1, 2, 3, 4, 7 keys per reference",
            job: PresetJob::Sweep(throughput),
        },
        Preset {
            name: "intercept-resend",
            description: "baseline, exact intercept-resend, and half-amplitude regeneration",
            job: PresetJob::Compare(vec![
                ("baseline".into(), canonical(7, 200_000)),
                ("intercept-resend".into(), intercept(1.0)),
                ("half-amplitude".into(), intercept(0.5)),
            ]),
        },
        Preset {
            name: "tap-sweep",
            description: "tap ratio 1%..5% at n = 100: attacker error spread vs intensity alarm rate",
            job: PresetJob::Sweep(tap_sweep),
        },
        Preset {
            name: "dynamic-reference",
            description: "tapping attacker against a fixed reference and an 8-entry secret list",
            job: PresetJob::Compare(vec![("fixed".into(), dynamic(1)), ("dynamic-8".into(), dynamic(8))]),
        },
        Preset {
            name: "determinism",
            description: "small tapped run with full outputs for byte-for-byte comparison",
            job: PresetJob::Run(determinism),
        },
    ]
}

pub fn preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}
