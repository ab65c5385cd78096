//! Parameter sweeps with Monte-Carlo replications.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::phasespace::deg;
use crate::protocol::AlarmKind;
use crate::seed::derive;
use crate::session::run_session;

/// ```toml
/// parameter = "attack.t1_tap_ratio"
/// linked = ["attack.t2_tap_ratio"]
/// values = [0.01, 0.02, 0.05]
/// replications = 20
///
/// [base]
/// master_seed = 1
/// ...
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: String,
    /// Further fields that receive the same value at every point.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub linked: Vec<String>,
    pub values: Vec<toml::Value>,
    #[serde(default = "one")]
    pub replications: u32,
    #[serde(default)]
    pub parallel: bool,
    pub base: ExperimentConfig,
}

fn one() -> u32 {
    1
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("values: sweep needs at least one value".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications: must be positive".into()));
        }
        self.base.validate()
    }

    /// The configuration for every (point, replication), each with its own
    /// derived seed. Ledger and constellation recording are turned off.
    pub fn configs(&self) -> Result<Vec<(usize, u32, ExperimentConfig)>> {
        self.validate()?;
        let mut out = Vec::new();
        for (point, value) in self.values.iter().enumerate() {
            let mut cfg = self.base.with_field(&self.parameter, value.clone())?;
            for field in &self.linked {
                cfg = cfg.with_field(field, value.clone())?;
            }
            cfg.output.ledger = false;
            cfg.output.constellation = false;
            for rep in 0..self.replications {
                let mut c = cfg.clone();
                c.master_seed = derive(self.base.master_seed, &[point as u64, rep as u64]);
                out.push((point, rep, c));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: usize,
    pub replication: u32,
    pub value: String,
    pub seed: u64,
    pub ber: f64,
    pub symbol_error_rate: f64,
    pub attacker_ber: Option<f64>,
    pub attacker_symbol_error_rate: Option<f64>,
    pub bob_phase_error_std_deg: f64,
    pub attacker_phase_error_std_deg: Option<f64>,
    pub intensity_alarm_rate: f64,
    pub delay_alarms: u64,
    pub throughput_fraction: f64,
    pub min_spacing_deg: f64,
    pub meets_spacing_guideline: bool,
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Runs every point and replication; rows come back sorted by
/// (point, replication) whatever the execution mode.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let jobs = spec.configs()?;
    let params = jobs
        .iter()
        .map(|(_, _, c)| c.session_params())
        .collect::<Result<Vec<_>>>()?;
    let results = map_indexed(jobs.len(), spec.parallel, |i| run_session(&params[i]));
    let mut rows = Vec::with_capacity(jobs.len());
    for ((point, rep, cfg), outcome) in jobs.iter().zip(results) {
        let outcome = outcome?;
        let r = &outcome.result;
        let a = outcome.attack.as_ref();
        rows.push(SweepRow {
            point: *point,
            replication: *rep,
            value: value_label(&spec.values[*point]),
            seed: cfg.master_seed,
            ber: r.ber,
            symbol_error_rate: r.symbol_error_rate,
            attacker_ber: a.map(|a| a.attacker_ber_vs_alice),
            attacker_symbol_error_rate: a.map(|a| a.attacker_symbol_error_rate),
            bob_phase_error_std_deg: deg(r.bob_phase_error_std),
            attacker_phase_error_std_deg: a.map(|a| deg(a.phase_error_std)),
            intensity_alarm_rate: r.intensity_alarm_rate(),
            delay_alarms: r.alarm_count(AlarmKind::Delay),
            throughput_fraction: r.throughput_fraction,
            min_spacing_deg: r.min_spacing_deg,
            meets_spacing_guideline: r.meets_spacing_guideline,
        });
    }
    rows.sort_by_key(|r| (r.point, r.replication));
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-point means over replications: (value, mean ber, mean attacker
/// std in degrees, mean alarm rate, mean attacker ber).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub point: usize,
    pub value: String,
    pub replications: usize,
    pub ber: f64,
    pub attacker_ber: Option<f64>,
    pub attacker_phase_error_std_deg: Option<f64>,
    pub intensity_alarm_rate: f64,
}

pub fn summarize(rows: &[SweepRow]) -> Vec<PointSummary> {
    let mut out: Vec<PointSummary> = Vec::new();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let mut i = 0;
    while i < rows.len() {
        let point = rows[i].point;
        let group: Vec<&SweepRow> = rows[i..].iter().take_while(|r| r.point == point).collect();
        let opt = |f: &dyn Fn(&SweepRow) -> Option<f64>| {
            let xs: Option<Vec<f64>> = group.iter().map(|r| f(r)).collect();
            xs.map(|xs| mean(&xs))
        };
        out.push(PointSummary {
            point,
            value: rows[i].value.clone(),
            replications: group.len(),
            ber: mean(&group.iter().map(|r| r.ber).collect::<Vec<_>>()),
            attacker_ber: opt(&|r| r.attacker_ber),
            attacker_phase_error_std_deg: opt(&|r| r.attacker_phase_error_std_deg),
            intensity_alarm_rate: mean(&group.iter().map(|r| r.intensity_alarm_rate).collect::<Vec<_>>()),
        });
        i += group.len();
    }
    out
}
