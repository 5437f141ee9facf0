//! End-to-end receiver: detection, peak identification, recovery and
//! rectification over 1 s epochs.

mod bench;
mod report;
mod run;
mod sic;
mod source;
mod sweep;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::acquisition::AcquisitionConfig;
use crate::api::ManeuverConstraints;
use crate::error::{Error, Result};
use crate::lsr::LsrConfig;
use crate::rectifier::DEFAULT_T_REF;
use crate::tracking::TrackingConfig;

pub use bench::{benchmark, benchmark_buffer, BenchReport};
pub use report::{Accuracy, EpochReport, FixKind, FixReport, Identification, RunReport, Timing};
pub use run::{run, run_scenario, Receiver};
pub use source::{IqFileSource, SampleSource, ScenarioSource};
pub use sweep::{sweep, write_sweep_csv, SweepKind, SweepParams, SweepRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverMode {
    Clean,
    SpoofDetected,
    Identifying,
    Recovering,
    Rectifying,
    Recovered,
    Failure,
}

impl ReceiverMode {
    pub fn can_move_to(self, to: ReceiverMode) -> bool {
        use ReceiverMode::*;
        matches!(
            (self, to),
            (Clean, SpoofDetected)
                | (SpoofDetected, Identifying)
                | (Identifying, Recovering)
                | (Identifying, Clean)
                | (Recovering, Recovered)
                | (Recovering, Rectifying)
                | (Recovering, Failure)
                | (Rectifying, Recovered)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReceiverMode::Clean => "clean",
            ReceiverMode::SpoofDetected => "spoof_detected",
            ReceiverMode::Identifying => "identifying",
            ReceiverMode::Recovering => "recovering",
            ReceiverMode::Rectifying => "rectifying",
            ReceiverMode::Recovered => "recovered",
            ReceiverMode::Failure => "failure",
        }
    }
}

impl fmt::Display for ReceiverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub time: f64,
    pub from: ReceiverMode,
    pub to: ReceiverMode,
}

/// Mode with its transition log; rejects illegal moves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMachine {
    pub mode: ReceiverMode,
    pub transitions: Vec<Transition>,
}

impl Default for ModeMachine {
    fn default() -> Self {
        ModeMachine {
            mode: ReceiverMode::Clean,
            transitions: Vec::new(),
        }
    }
}

impl ModeMachine {
    pub fn go(&mut self, to: ReceiverMode, time: f64) -> Result<()> {
        if !self.mode.can_move_to(to) {
            return Err(Error::invalid(format!("illegal mode change {} -> {to}", self.mode))
                .in_state(self.mode.as_str()));
        }
        self.transitions.push(Transition {
            time,
            from: self.mode,
            to,
        });
        self.mode = to;
        Ok(())
    }
}

/// When the pseudorange rectifier is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RectifierMode {
    /// After successive cancellation when the attacker is too strong or the
    /// legitimate channels cannot decode their frames.
    #[default]
    Auto,
    /// Always, right after identification.
    On,
    /// Never.
    Off,
}

impl std::str::FromStr for RectifierMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(RectifierMode::Auto),
            "on" => Ok(RectifierMode::On),
            "off" => Ok(RectifierMode::Off),
            _ => Err(Error::invalid(format!("rectifier mode {s:?} is not auto, on or off"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverConfig {
    /// Epoch length, s.
    pub epoch: f64,
    /// Streaming chunk length, s.
    pub chunk: f64,
    /// Buffer handed to the cancellation loop, s.
    pub recovery_window: f64,
    /// PRNs searched at cold start; every PRN when empty.
    pub prns: Vec<u8>,
    pub rectifier: RectifierMode,
    /// Estimated attacker advantage at which `auto` skips cancellation, dB.
    pub handoff_advantage_db: f64,
    /// Time a legitimate channel may run without frame sync before `auto`
    /// hands off, s.
    pub preamble_deadline: f64,
    pub t_ref: f64,
    /// Mean track deviation above which the tracked peak is adversarial, m.
    pub api_threshold: f64,
    /// Label supplied from outside instead of a simulated maneuver.
    pub external_label: Option<bool>,
    pub seed: u64,
    /// Cold-start search over every PRN.
    pub acquisition: AcquisitionConfig,
    /// Per-epoch spoofing check on acquired PRNs.
    pub detection: AcquisitionConfig,
    /// Half-width of the per-epoch search around a tracked Doppler, Hz.
    pub detection_span: f64,
    pub tracking: TrackingConfig,
    pub lsr: LsrConfig,
    pub maneuver: ManeuverConstraints,
    #[serde(skip)]
    pub sequential: bool,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        ReceiverConfig {
            epoch: 1.0,
            chunk: 0.1,
            recovery_window: 0.04,
            prns: Vec::new(),
            rectifier: RectifierMode::Auto,
            handoff_advantage_db: 12.0,
            preamble_deadline: 8.0,
            t_ref: DEFAULT_T_REF,
            api_threshold: crate::api::DEFAULT_THRESHOLD,
            external_label: None,
            seed: 0,
            acquisition: AcquisitionConfig::default(),
            detection: AcquisitionConfig::sensitive(),
            detection_span: 1500.0,
            tracking: TrackingConfig::default(),
            lsr: LsrConfig::default(),
            maneuver: ManeuverConstraints::default(),
            sequential: false,
        }
    }
}

impl ReceiverConfig {
    pub fn execution(&self) -> crate::Execution {
        if self.sequential {
            crate::Execution::Sequential
        } else {
            crate::Execution::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epoch > 0.0) || !(self.chunk > 0.0) || self.chunk > self.epoch {
            return Err(Error::invalid("need 0 < chunk <= epoch"));
        }
        if !(self.recovery_window >= 0.004) || self.recovery_window > self.epoch {
            return Err(Error::invalid("recovery window must lie in [4 ms, epoch]"));
        }
        if let Some(p) = self.prns.iter().find(|p| !(1..=32).contains(*p)) {
            return Err(Error::invalid(format!("PRN {p} out of range")));
        }
        Ok(())
    }
}
