use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("symbol width {got} does not match scheme width {expected}")]
    WidthMismatch { expected: u32, got: u32 },
    #[error("reference list is empty")]
    EmptyReferenceList,
    #[error("segment bounds must satisfy 0 <= from < to <= 1 (from = {from}, to = {to})")]
    SegmentBounds { from: f64, to: f64 },
    #[error("pulse {0} was already emitted")]
    DuplicatePulse(u64),
    #[error("measurements belong to different pulses ({0} and {1})")]
    IndexMismatch(u64, u64),
    #[error("bit strings differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialization error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
