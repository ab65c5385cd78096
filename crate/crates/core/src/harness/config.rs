//! Experiment configuration file.
//!
//! ```toml
//! master_seed = 7
//! pulses = 20000
//! mean_photon_number = 100.0
//!
//! [scheme]
//! kind = "psk"
//! phases = 16
//!
//! [attack]
//! kind = "tapping"
//! t1_tap_ratio = 0.1
//! t2_tap_ratio = 0.1
//! ```
//!
//! Only `master_seed` is required. Angles are in degrees, delays in
//! nanoseconds, lengths in kilometres; the unit is part of every field name.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversary::{AttackerDecode, InterTapPhase, InterceptResendAttacker, TappingAttacker};
use crate::channel::{OscillatorState, PathState, TapConfig};
use crate::detection::Detector;
use crate::error::{Error, Result};
use crate::modulation::{ReferenceBook, SchemeSpec, DEFAULT_REFRESH_PERIOD};
use crate::phasespace::{rad, NoiseModel, TailRule, DEFAULT_EQUIPMENT_SIGMA_DEG};
use crate::protocol::{Randomizer, ReferenceSchedule};
use crate::seed::{derive, Stream};
use crate::session::{Attack, SessionParams};

fn default_pulses() -> u64 {
    10_000
}
fn default_mean_photon_number() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    #[serde(default)]
    pub session_id: u64,
    #[serde(default = "default_pulses")]
    pub pulses: u64,
    #[serde(default = "default_mean_photon_number")]
    pub mean_photon_number: f64,
    #[serde(default)]
    pub scheme: SchemeSpec,
    #[serde(default)]
    pub randomizer: RandomizerConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub bob: DetectorConfig,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizerConfig {
    pub alphabet_size: u32,
    /// Uniform on the circle instead of a discrete alphabet.
    pub continuous: bool,
}

impl Default for RandomizerConfig {
    fn default() -> Self {
        Self {
            alphabet_size: 1024,
            continuous: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    pub keys_per_reference: u32,
    /// 1 = fixed reference phase; larger = secret dynamic list.
    pub list_size: usize,
    pub fixed_phase_deg: f64,
    pub refresh_period_pulses: u64,
    /// Seed Alice and Bob agree on for the list; derived from
    /// `master_seed` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shared_seed: Option<u64>,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            keys_per_reference: 1,
            list_size: 1,
            fixed_phase_deg: 0.0,
            refresh_period_pulses: DEFAULT_REFRESH_PERIOD,
            shared_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub length_km: f64,
    pub attenuation_db_per_km: f64,
    pub path_phase_deg: f64,
    pub path_drift_step_deg: f64,
    pub excess_delay_ns: f64,
    pub delay_jitter_ns: f64,
    pub double_pass_phase: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let p = PathState::default();
        Self {
            length_km: p.length_km,
            attenuation_db_per_km: p.attenuation_db_per_km,
            path_phase_deg: 0.0,
            path_drift_step_deg: p.drift_step_sigma.to_degrees(),
            excess_delay_ns: 0.0,
            delay_jitter_ns: 0.0,
            double_pass_phase: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub equipment_sigma_deg: f64,
    /// Add the photon-number-dependent term; when false the equipment
    /// sigma is the whole per-measurement uncertainty.
    pub quantum_noise: bool,
    pub tail: TailRule,
    pub lo_offset_deg: f64,
    pub lo_drift_step_deg: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            equipment_sigma_deg: DEFAULT_EQUIPMENT_SIGMA_DEG,
            quantum_noise: true,
            tail: TailRule::InverseSqrt,
            lo_offset_deg: 0.0,
            lo_drift_step_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    pub intensity_window_pulses: u64,
    pub intensity_sigmas: f64,
    pub delay_tolerance_ns: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            intensity_window_pulses: 1000,
            intensity_sigmas: 3.0,
            delay_tolerance_ns: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackConfig {
    #[default]
    None,
    InterceptResend(InterceptResendConfig),
    Tapping(TappingConfig),
}

pub const SUPPORTED_ATTACKS: [&str; 3] = ["none", "intercept_resend", "tapping"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterceptResendConfig {
    pub equipment_sigma_deg: f64,
    pub quantum_noise: bool,
    pub regeneration_amplitude_ratio: f64,
    /// Defaults to the attacker's equipment sigma.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regeneration_sigma_deg: Option<f64>,
    pub position_fraction: f64,
    pub processing_delay_ns: f64,
    /// Fixed LO offset; drawn uniformly per session when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo_offset_deg: Option<f64>,
}

impl Default for InterceptResendConfig {
    fn default() -> Self {
        Self {
            equipment_sigma_deg: DEFAULT_EQUIPMENT_SIGMA_DEG,
            quantum_noise: true,
            regeneration_amplitude_ratio: 1.0,
            regeneration_sigma_deg: None,
            position_fraction: 0.5,
            processing_delay_ns: 0.0,
            lo_offset_deg: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterTapMode {
    #[default]
    Constant,
    Drift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TappingConfig {
    pub t1_position_fraction: f64,
    pub t1_tap_ratio: f64,
    pub t2_position_fraction: f64,
    pub t2_tap_ratio: f64,
    pub equipment_sigma_deg: f64,
    pub quantum_noise: bool,
    pub shared_lo: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo_offset_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo2_offset_deg: Option<f64>,
    pub inter_tap_mode: InterTapMode,
    pub inter_tap_phase_deg: f64,
    /// Random-walk step in drift mode.
    pub inter_tap_drift_step_deg: f64,
    pub decode: AttackerDecode,
}

impl Default for TappingConfig {
    fn default() -> Self {
        Self {
            t1_position_fraction: 0.9,
            t1_tap_ratio: 0.1,
            t2_position_fraction: 0.9,
            t2_tap_ratio: 0.1,
            equipment_sigma_deg: DEFAULT_EQUIPMENT_SIGMA_DEG,
            quantum_noise: true,
            shared_lo: true,
            lo_offset_deg: None,
            lo2_offset_deg: None,
            inter_tap_mode: InterTapMode::Constant,
            inter_tap_phase_deg: 0.0,
            inter_tap_drift_step_deg: 1.0,
            decode: AttackerDecode::Differential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub ledger: bool,
    /// Include private and nuisance phases in the ledger.
    pub ledger_debug: bool,
    pub constellation: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("qpke-out"),
            ledger: true,
            ledger_debug: false,
            constellation: true,
        }
    }
}

fn check(cond: bool, field: &str, msg: impl std::fmt::Display) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(format!("{field}: {msg}")))
    }
}

fn nonneg(v: f64, field: &str) -> Result<()> {
    check(v.is_finite() && v >= 0.0, field, format!("must be finite and nonnegative, got {v}"))
}

fn fraction_open(v: f64, field: &str) -> Result<()> {
    check(v > 0.0 && v < 1.0, field, format!("must lie strictly between 0 and 1, got {v}"))
}

fn noise(equipment_deg: f64, quantum: bool, tail: TailRule) -> NoiseModel {
    let mut model = NoiseModel::default().with_equipment_sigma(rad(equipment_deg));
    model.tail = tail;
    if quantum {
        model
    } else {
        NoiseModel::overall(rad(equipment_deg))
    }
}

impl ExperimentConfig {
    /// Defaults everywhere except the seed.
    pub fn minimal(master_seed: u64) -> Self {
        toml::from_str(&format!("master_seed = {master_seed}")).expect("defaults parse")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.pulses > 0, "pulses", "must be positive")?;
        check(
            self.mean_photon_number.is_finite() && self.mean_photon_number > 0.0,
            "mean_photon_number",
            format!("must be positive, got {}", self.mean_photon_number),
        )?;
        self.scheme
            .build()
            .map_err(|e| Error::Config(format!("scheme: {e}")))?;
        check(
            self.randomizer.continuous || self.randomizer.alphabet_size > 0,
            "randomizer.alphabet_size",
            "must be positive",
        )?;
        let r = &self.reference;
        check(r.keys_per_reference > 0, "reference.keys_per_reference", "must be positive")?;
        check(r.list_size > 0, "reference.list_size", "must be positive")?;
        check(r.refresh_period_pulses > 0, "reference.refresh_period_pulses", "must be positive")?;
        check(r.fixed_phase_deg.is_finite(), "reference.fixed_phase_deg", "must be finite")?;
        let c = &self.channel;
        nonneg(c.length_km, "channel.length_km")?;
        nonneg(c.attenuation_db_per_km, "channel.attenuation_db_per_km")?;
        check(c.path_phase_deg.is_finite(), "channel.path_phase_deg", "must be finite")?;
        nonneg(c.path_drift_step_deg, "channel.path_drift_step_deg")?;
        nonneg(c.excess_delay_ns, "channel.excess_delay_ns")?;
        nonneg(c.delay_jitter_ns, "channel.delay_jitter_ns")?;
        nonneg(self.bob.equipment_sigma_deg, "bob.equipment_sigma_deg")?;
        check(self.bob.lo_offset_deg.is_finite(), "bob.lo_offset_deg", "must be finite")?;
        nonneg(self.bob.lo_drift_step_deg, "bob.lo_drift_step_deg")?;
        let m = &self.monitor;
        check(m.intensity_window_pulses > 0, "monitor.intensity_window_pulses", "must be positive")?;
        check(
            m.intensity_sigmas.is_finite() && m.intensity_sigmas > 0.0,
            "monitor.intensity_sigmas",
            "must be positive",
        )?;
        nonneg(m.delay_tolerance_ns, "monitor.delay_tolerance_ns")?;
        match &self.attack {
            AttackConfig::None => {}
            AttackConfig::InterceptResend(a) => {
                nonneg(a.equipment_sigma_deg, "attack.equipment_sigma_deg")?;
                nonneg(a.regeneration_amplitude_ratio, "attack.regeneration_amplitude_ratio")?;
                if let Some(s) = a.regeneration_sigma_deg {
                    nonneg(s, "attack.regeneration_sigma_deg")?;
                }
                check(
                    (0.0..=1.0).contains(&a.position_fraction),
                    "attack.position_fraction",
                    format!("must lie in [0, 1], got {}", a.position_fraction),
                )?;
                nonneg(a.processing_delay_ns, "attack.processing_delay_ns")?;
            }
            AttackConfig::Tapping(t) => {
                fraction_open(t.t1_position_fraction, "attack.t1_position_fraction")?;
                fraction_open(t.t1_tap_ratio, "attack.t1_tap_ratio")?;
                fraction_open(t.t2_position_fraction, "attack.t2_position_fraction")?;
                fraction_open(t.t2_tap_ratio, "attack.t2_tap_ratio")?;
                nonneg(t.equipment_sigma_deg, "attack.equipment_sigma_deg")?;
                nonneg(t.inter_tap_drift_step_deg, "attack.inter_tap_drift_step_deg")?;
                check(t.inter_tap_phase_deg.is_finite(), "attack.inter_tap_phase_deg", "must be finite")?;
            }
        }
        Ok(())
    }

    pub fn reference_book(&self) -> Result<ReferenceBook> {
        let r = &self.reference;
        let shared = r
            .shared_seed
            .unwrap_or_else(|| derive(self.master_seed, &[Stream::ReferenceList as u64]));
        ReferenceBook::new(
            r.list_size,
            rad(r.fixed_phase_deg),
            derive(shared, &[0]),
            derive(shared, &[1]),
            r.refresh_period_pulses,
        )
    }

    pub fn session_params(&self) -> Result<SessionParams> {
        self.validate()?;
        let c = &self.channel;
        let path = PathState {
            phase: rad(c.path_phase_deg),
            drift_step_sigma: rad(c.path_drift_step_deg),
            length_km: c.length_km,
            attenuation_db_per_km: c.attenuation_db_per_km,
            excess_delay_s: c.excess_delay_ns * 1e-9,
            delay_jitter_s: c.delay_jitter_ns * 1e-9,
            double_pass_phase: c.double_pass_phase,
        };
        let bob_detector = Detector::new(
            noise(self.bob.equipment_sigma_deg, self.bob.quantum_noise, self.bob.tail),
            OscillatorState::new(rad(self.bob.lo_offset_deg), rad(self.bob.lo_drift_step_deg)),
        );
        let attack = match &self.attack {
            AttackConfig::None => Attack::None,
            AttackConfig::InterceptResend(a) => Attack::InterceptResend(InterceptResendAttacker {
                detector: Detector::new(
                    noise(a.equipment_sigma_deg, a.quantum_noise, TailRule::InverseSqrt),
                    OscillatorState::new(rad(a.lo_offset_deg.unwrap_or(0.0)), 0.0),
                ),
                regeneration_ratio: a.regeneration_amplitude_ratio,
                regeneration_sigma: rad(a.regeneration_sigma_deg.unwrap_or(a.equipment_sigma_deg)),
                position_fraction: a.position_fraction,
                processing_delay_s: a.processing_delay_ns * 1e-9,
                randomize_lo: a.lo_offset_deg.is_none(),
            }),
            AttackConfig::Tapping(t) => {
                let model = noise(t.equipment_sigma_deg, t.quantum_noise, TailRule::InverseSqrt);
                let lo1 = t.lo_offset_deg.unwrap_or(0.0);
                let lo2 = t.lo2_offset_deg.unwrap_or(lo1);
                Attack::Tapping(TappingAttacker {
                    tap1: TapConfig {
                        position_fraction: t.t1_position_fraction,
                        tap_power_ratio: t.t1_tap_ratio,
                    },
                    tap2: TapConfig {
                        position_fraction: t.t2_position_fraction,
                        tap_power_ratio: t.t2_tap_ratio,
                    },
                    detector1: Detector::new(model.clone(), OscillatorState::new(rad(lo1), 0.0)),
                    detector2: Detector::new(model, OscillatorState::new(rad(lo2), 0.0)),
                    shared_lo: t.shared_lo,
                    inter_tap: InterTapPhase {
                        phase: rad(t.inter_tap_phase_deg),
                        drift_step_sigma: match t.inter_tap_mode {
                            InterTapMode::Constant => 0.0,
                            InterTapMode::Drift => rad(t.inter_tap_drift_step_deg),
                        },
                    },
                    decode: t.decode,
                    randomize_lo: t.lo_offset_deg.is_none(),
                })
            }
        };
        Ok(SessionParams {
            master_seed: self.master_seed,
            session_id: self.session_id,
            pulses: self.pulses,
            mean_photon_number: self.mean_photon_number,
            scheme: self.scheme.build()?,
            randomizer: if self.randomizer.continuous {
                Randomizer::Continuous
            } else {
                Randomizer::Discrete(self.randomizer.alphabet_size)
            },
            schedule: ReferenceSchedule::new(self.reference.keys_per_reference)?,
            references: self.reference_book()?,
            path,
            bob_detector,
            intensity_window: self.monitor.intensity_window_pulses,
            intensity_sigmas: self.monitor.intensity_sigmas,
            delay_tolerance_s: self.monitor.delay_tolerance_ns * 1e-9,
            attack,
            record_ledger: self.output.ledger,
            record_constellation: self.output.constellation,
        })
    }

    /// Returns a copy with the dotted field `path` set to `value`, checked
    /// against the schema.
    pub fn with_field(&self, path: &str, value: toml::Value) -> Result<Self> {
        let mut root = toml::Value::try_from(self)?;
        let mut node = &mut root;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("{path}: `{}` is not a table", parts[..i].join("."))))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), value.clone());
                break;
            }
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()));
        }
        let cfg: Self = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{path}: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
