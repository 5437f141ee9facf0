use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RectifierMode, ReceiverMode, Transition};
use crate::api::PeakLabel;
use crate::api::trajectory::csv_err;
use crate::error::Result;
use crate::lsr::RecoveryReport;
use crate::pvt::geodesy::ecef_to_enu;
use crate::pvt::PvtSolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixKind {
    /// No spoofing detected.
    Standard,
    /// Spoofing detected and not yet recovered.
    Unverified,
    /// From legitimate channels after cancellation.
    Recovered,
    /// From adversarial channels with rectified pseudoranges.
    Rectified,
}

impl FixKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FixKind::Standard => "standard",
            FixKind::Unverified => "unverified",
            FixKind::Recovered => "recovered",
            FixKind::Rectified => "rectified",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixReport {
    pub kind: FixKind,
    pub solution: PvtSolution,
    /// East, north, up error against the true position, m.
    pub error_enu: Option<[f64; 3]>,
}

impl FixReport {
    pub fn new(kind: FixKind, solution: PvtSolution, truth: Option<[f64; 3]>) -> Self {
        let error_enu = truth.map(|t| ecef_to_enu(t, solution.position));
        FixReport {
            kind,
            solution,
            error_enu,
        }
    }

    pub fn horizontal_error(&self) -> Option<f64> {
        self.error_enu.map(|e| e[0].hypot(e[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Receiver time of the fix, s.
    pub time: f64,
    pub mode: ReceiverMode,
    /// PRNs with a spoofing verdict at the start of the epoch.
    pub spoofed_prns: Vec<u8>,
    /// The receiver's output.
    pub fix: Option<FixReport>,
    /// Fix from the channels tracking the strongest peaks.
    pub tracked_fix: Option<FixReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub time: f64,
    pub adversarial: bool,
    /// `maneuver`, `external` or `power`.
    pub source: String,
    pub label: Option<PeakLabel>,
}

/// Error statistics of a set of fixes against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub fixes: usize,
    pub mean_east: f64,
    pub mean_north: f64,
    pub mean_up: f64,
    /// Mean horizontal distance, m.
    pub mean_offset: f64,
    pub max_offset: f64,
}

impl Accuracy {
    pub fn of<'a>(fixes: impl Iterator<Item = &'a FixReport>) -> Option<Accuracy> {
        let errs: Vec<[f64; 3]> = fixes.filter_map(|f| f.error_enu).collect();
        if errs.is_empty() {
            return None;
        }
        let n = errs.len() as f64;
        let h: Vec<f64> = errs.iter().map(|e| e[0].hypot(e[1])).collect();
        Some(Accuracy {
            fixes: errs.len(),
            mean_east: errs.iter().map(|e| e[0]).sum::<f64>() / n,
            mean_north: errs.iter().map(|e| e[1]).sum::<f64>() / n,
            mean_up: errs.iter().map(|e| e[2]).sum::<f64>() / n,
            mean_offset: h.iter().sum::<f64>() / n,
            max_offset: h.iter().cloned().fold(0.0, f64::max),
        })
    }
}

/// Wall-clock measurements; excluded from determinism comparisons.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub total: f64,
    pub acquisition: f64,
    /// One entry per cancellation iteration, s.
    pub cancellation_iterations: Vec<f64>,
    pub samples_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub sample_rate: f64,
    pub duration: f64,
    pub seed: Option<u64>,
    pub rectifier: RectifierMode,
    pub final_mode: ReceiverMode,
    pub transitions: Vec<Transition>,
    pub epochs: Vec<EpochReport>,
    pub identification: Vec<Identification>,
    pub recovery: Vec<RecoveryReport>,
    /// PRNs whose pseudoranges were rectified.
    pub rectified_prns: Vec<u8>,
    /// Output fixes labelled recovered or rectified, against ground truth.
    pub accuracy: Option<Accuracy>,
    /// Fixes from the tracked peaks while under attack, against ground truth.
    pub spoofed_accuracy: Option<Accuracy>,
    /// Output fixes before any attack was detected, against ground truth.
    pub clean_accuracy: Option<Accuracy>,
    pub timing: Timing,
}

impl RunReport {
    /// 0 when clean or recovered, 2 when spoofing was left unrecovered.
    pub fn exit_code(&self) -> i32 {
        match self.final_mode {
            ReceiverMode::Clean | ReceiverMode::Recovered => 0,
            _ => 2,
        }
    }

    /// Copy with wall-clock fields zeroed.
    pub fn without_timing(&self) -> RunReport {
        let mut r = self.clone();
        r.timing = Timing::default();
        for rec in &mut r.recovery {
            rec.steps.iter_mut().for_each(|s| s.elapsed = 0.0);
        }
        r
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| crate::error::Error::format(e.to_string()))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    /// One row per epoch with the output fix and its error.
    pub fn write_track_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "epoch", "time", "mode", "kind", "x", "y", "z", "easting", "northing", "zone",
            "east_error", "north_error", "up_error", "tracked_east_error", "tracked_north_error",
        ])
        .map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_default();
        for e in &self.epochs {
            let f = e.fix.as_ref();
            let p = f.map(|f| f.solution.position);
            let utm = f.and_then(|f| f.solution.utm);
            let err = f.and_then(|f| f.error_enu);
            let terr = e.tracked_fix.as_ref().and_then(|f| f.error_enu);
            w.write_record([
                e.epoch.to_string(),
                format!("{:.3}", e.time),
                e.mode.to_string(),
                f.map(|f| f.kind.as_str().to_string()).unwrap_or_default(),
                opt(p.map(|p| p[0])),
                opt(p.map(|p| p[1])),
                opt(p.map(|p| p[2])),
                opt(utm.map(|u| u.easting)),
                opt(utm.map(|u| u.northing)),
                utm.map(|u| u.zone.to_string()).unwrap_or_default(),
                opt(err.map(|e| e[0])),
                opt(err.map(|e| e[1])),
                opt(err.map(|e| e[2])),
                opt(terr.map(|e| e[0])),
                opt(terr.map(|e| e[1])),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_track_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_track_csv(std::fs::File::create(path)?)
    }
}
