//! Configuration, sweeps, presets and output files.

pub mod config;
pub mod output;
pub mod presets;
pub mod sweep;

pub use config::ExperimentConfig;
pub use presets::{preset, presets, Preset, PresetJob};
pub use sweep::{run_sweep, SweepSpec};
