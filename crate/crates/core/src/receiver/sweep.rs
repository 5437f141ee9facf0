use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{run_scenario, ReceiverConfig, ReceiverMode};
use crate::acquisition::delay_separation;
use crate::api::trajectory::csv_err;
use crate::error::Result;
use crate::scenario::{Scenario, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Varies the spoofed displacement, m.
    PeakSeparation,
    /// Varies the attacker power advantage, dB.
    PowerAdvantage,
}

impl std::str::FromStr for SweepKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "peak_separation" | "peak-separation" => Ok(SweepKind::PeakSeparation),
            "power_advantage" | "power-advantage" => Ok(SweepKind::PowerAdvantage),
            _ => Err(crate::Error::invalid(format!("unknown sweep kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    pub kind: SweepKind,
    /// Grid values: offsets in m or advantages in dB.
    pub values: Vec<f64>,
    /// Scenario seeds run at every grid value.
    pub seeds: Vec<u64>,
    /// Fixed displacement of a power sweep, m.
    pub offset_m: f64,
    /// Fixed advantage of a separation sweep, dB.
    pub advantage_db: f64,
    /// Scenario length, s.
    pub duration: f64,
    pub sample_rate: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams::new(SweepKind::PeakSeparation)
    }
}

impl SweepParams {
    /// Offsets 500..=3500 m at +3 dB, or advantages 3..=15 dB at 1500 m.
    pub fn new(kind: SweepKind) -> Self {
        let values = match kind {
            SweepKind::PeakSeparation => (1..=7).map(|i| 500.0 * i as f64).collect(),
            SweepKind::PowerAdvantage => vec![3.0, 6.0, 9.0, 12.0, 15.0],
        };
        let base = ScenarioConfig::default();
        SweepParams {
            kind,
            values,
            seeds: vec![1, 2, 3],
            offset_m: 1500.0,
            advantage_db: 3.0,
            duration: base.duration,
            sample_rate: base.sample_rate,
        }
    }

    pub fn scenario(&self, value: f64, seed: u64) -> ScenarioConfig {
        let (offset, adv) = match self.kind {
            SweepKind::PeakSeparation => (value, self.advantage_db),
            SweepKind::PowerAdvantage => (self.offset_m, value),
        };
        ScenarioConfig {
            seed,
            duration: self.duration,
            sample_rate: self.sample_rate,
            ..ScenarioConfig::static_attack(offset, adv)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: SweepKind,
    pub value: f64,
    pub seed: u64,
    /// Smallest legitimate/adversarial delay gap over the spoofed PRNs, ns.
    pub min_separation_ns: Option<f64>,
    pub final_mode: Option<ReceiverMode>,
    /// `rectifier` when the rectifier was engaged, else `cancellation` if
    /// recovered, else `none`.
    pub path: String,
    /// Mean horizontal offset of recovered fixes from truth, m.
    pub recovered_error_m: Option<f64>,
    /// Mean horizontal offset of the spoofed fixes from truth, m.
    pub spoofed_error_m: Option<f64>,
    pub iterations: usize,
    pub error: Option<String>,
}

fn min_separation(s: &Scenario) -> Option<f64> {
    let t = 1.0_f64.min(s.config.duration / 2.0);
    s.spoofed_prns()
        .iter()
        .filter_map(|&p| Some(delay_separation(s.legit_code_delay(p, t)?, s.attacker_code_delay(p, t)?)))
        .min_by(f64::total_cmp)
        .map(|d| d * 1e9)
}

fn cell(params: &SweepParams, value: f64, seed: u64, config: &ReceiverConfig) -> SweepRow {
    let mut row = SweepRow {
        kind: params.kind,
        value,
        seed,
        min_separation_ns: None,
        final_mode: None,
        path: "none".into(),
        recovered_error_m: None,
        spoofed_error_m: None,
        iterations: 0,
        error: None,
    };
    let out = Scenario::new(params.scenario(value, seed)).and_then(|s| {
        row.min_separation_ns = min_separation(&s);
        run_scenario(&s, config)
    });
    match out {
        Ok(r) => {
            row.final_mode = Some(r.final_mode);
            if r.transitions.iter().any(|t| t.to == ReceiverMode::Rectifying) {
                row.path = "rectifier".into();
            } else if r.final_mode == ReceiverMode::Recovered {
                row.path = "cancellation".into();
            }
            row.recovered_error_m = r.accuracy.map(|a| a.mean_offset);
            row.spoofed_error_m = r.spoofed_accuracy.map(|a| a.mean_offset);
            row.iterations = r.recovery.iter().map(|x| x.iterations).sum();
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs every (value, seed) cell; a failing cell is recorded and skipped.
pub fn sweep(params: &SweepParams, config: &ReceiverConfig) -> Vec<SweepRow> {
    params
        .values
        .iter()
        .flat_map(|&v| params.seeds.iter().map(move |&s| (v, s)))
        .map(|(v, s)| cell(params, v, s, config))
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "kind", "value", "seed", "min_separation_ns", "final_mode", "path", "recovered_error_m",
        "spoofed_error_m", "iterations", "error",
    ])
    .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_default();
    for r in rows {
        let kind = match r.kind {
            SweepKind::PeakSeparation => "peak_separation",
            SweepKind::PowerAdvantage => "power_advantage",
        };
        w.write_record([
            kind.to_string(),
            r.value.to_string(),
            r.seed.to_string(),
            opt(r.min_separation_ns),
            r.final_mode.map(|m| m.to_string()).unwrap_or_default(),
            r.path.clone(),
            opt(r.recovered_error_m),
            opt(r.spoofed_error_m),
            r.iterations.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
