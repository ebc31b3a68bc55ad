//! Bayesian quantum phase estimation lab.
//!
//! Simulates the single-ancilla controlled-`U^M` experiment under phase noise
//! and decoherence, runs rejection filtering phase estimation (RFPE) and
//! iterative phase estimation (IPEA) against it, and provides the fringe
//! calibration and majority-vote breakdown analyses around them.

pub mod analysis;
pub mod calibration;
pub mod device;
pub mod error;
pub mod harness;
pub mod ipea;
pub mod noise;
pub mod oracle;
pub mod phase;
pub mod rfpe;

pub use error::{Error, Result};
pub use phase::{circular_distance, likelihood, wrap_phase, ExperimentSetting, Outcome, Phase};
pub use rfpe::{GaussianBelief, RfpeConfig};
