use thiserror::Error;

use crate::lsr::RecoveryReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("tracking failure for PRN {prn}: {reason}")]
    TrackingFailure { prn: u8, reason: String },

    #[error("loss of lock on PRN {prn} after {after_ms} ms")]
    LossOfLock { prn: u8, after_ms: usize },

    #[error("preamble not found in {bits} bits")]
    PreambleNotFound { bits: usize },

    #[error("recovery failed for PRN {} after {} iteration(s)", report.prn, report.iterations)]
    RecoveryFailure { report: Box<RecoveryReport> },

    #[error("insufficient satellites: {have} available, {need} required")]
    InsufficientSatellites { have: usize, need: usize },

    #[error("missing delay offset for PRN(s) {0:?}")]
    PartialRectification(Vec<u8>),

    #[error("PVT solver failed: {0}")]
    Solver(String),

    #[error("unsupported UTM zone at latitude {lat_deg:.3} deg")]
    UnsupportedZone { lat_deg: f64 },

    #[error("invalid maneuver constraints: {0}")]
    InvalidConstraints(String),

    #[error("insufficient track data: {0}")]
    InsufficientData(String),

    #[error("{state}: {source}")]
    Receiver {
        state: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Wraps an error with the receiver state it was raised in.
    pub fn in_state(self, state: &'static str) -> Self {
        Error::Receiver {
            state,
            source: Box::new(self),
        }
    }
}
