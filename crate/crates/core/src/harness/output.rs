//! Report and CSV files for a finished run.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::adversary::AttackReport;
use crate::detection::{constellation_dump, write_constellation_csv, ClusterStats};
use crate::error::Result;
use crate::modulation::Scheme;
use crate::session::{write_ledger_csv, SessionOutcome, SessionResult};

/// Overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "QPKE_OUT_DIR";

pub fn resolve_out_dir(configured: &Path) -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| configured.to_path_buf())
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub config: &'a ExperimentConfig,
    pub result: &'a SessionResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack: Option<&'a AttackReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub clusters: Vec<ClusterStats>,
}

pub fn summary<'a>(config: &'a ExperimentConfig, outcome: &'a SessionOutcome, scheme: &Scheme) -> Result<Summary<'a>> {
    let clusters = if outcome.constellation.is_empty() {
        Vec::new()
    } else {
        constellation_dump(&outcome.constellation, scheme)?
    };
    Ok(Summary {
        config,
        result: &outcome.result,
        attack: outcome.attack.as_ref(),
        clusters,
    })
}

/// Writes `summary.json`, `ledger.csv`, `constellation.csv` and (under
/// attack) `attacker_constellation.csv`. Returns the files written.
pub fn write_outputs(config: &ExperimentConfig, outcome: &SessionOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let scheme = config.scheme.build()?;
    let mut written = Vec::new();

    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary(config, outcome, &scheme)?)?;
    text.push('\n');
    fs::write(&path, text)?;
    written.push(path);

    if config.output.ledger {
        let path = dir.join("ledger.csv");
        write_ledger_csv(BufWriter::new(File::create(&path)?), &outcome.ledger, config.output.ledger_debug)?;
        written.push(path);
    }
    if config.output.constellation {
        let path = dir.join("constellation.csv");
        write_constellation_csv(BufWriter::new(File::create(&path)?), &outcome.constellation)?;
        written.push(path);
        if outcome.attack.is_some() {
            let path = dir.join("attacker_constellation.csv");
            write_constellation_csv(BufWriter::new(File::create(&path)?), &outcome.attacker_constellation)?;
            written.push(path);
        }
    }
    Ok(written)
}
