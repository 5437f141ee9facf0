//! GPS L1 C/A software receiver with auxiliary-peak spoofing detection,
//! maneuver-based adversarial peak identification, successive interference
//! cancellation and pseudorange rectification.

pub mod error;
pub mod acquisition;
pub mod api;
pub mod dsp;
pub mod exec;
pub mod lsr;
pub mod pvt;
pub mod receiver;
pub mod rectifier;
pub mod scenario;
pub mod signal;
pub mod tracking;

pub use error::{Error, Result};
pub use exec::Execution;
