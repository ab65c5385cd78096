//! Simulation of quantum public-key envelope key distribution over a
//! roundtrip fiber link, with intercept-resend and two-point tapping
//! attackers.

pub mod adversary;
pub mod channel;
pub mod detection;
pub mod error;
pub mod exec;
pub mod harness;
pub mod modulation;
pub mod phasespace;
pub mod protocol;
pub mod seed;
pub mod session;
pub mod stats;

pub use error::{Error, Result};
