//! Declarative scenario description (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{CHIP_RATE, DEFAULT_SAMPLE_RATE};

/// With the default clock offset, the closest auxiliary peak sits this many
/// code-delay meters per meter of spoofed displacement (about 1.6 ns/m).
pub const MIN_SEPARATION_FACTOR: f64 = 0.48;

/// GPS time of the first sample: the first frame boundary then arrives
/// about half a second into the stream.
pub const DEFAULT_START_TIME: f64 = 34.775;
/// Displacement speed of the seamless preset, m/s.
pub const SEAMLESS_SPEED: f64 = 150.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Seconds of samples.
    pub duration: f64,
    pub sample_rate: f64,
    /// GPS time at the first sample, seconds.
    pub start_time: f64,
    /// Legitimate carrier-to-noise density, dB-Hz; sets the noise level
    /// unless `noise_density` is given.
    pub cn0_dbhz: f64,
    /// Complex noise variance per sample.
    pub noise_density: Option<f64>,
    /// Legitimate signal amplitude.
    pub amplitude: f64,
    pub receiver: ReceiverConfig,
    pub satellites: Vec<SatelliteConfig>,
    pub attacker: Option<AttackerConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverConfig {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatelliteConfig {
    pub prn: u8,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Line-of-sight range rate, m/s (positive receding).
    pub range_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TakeoverMode {
    Hard,
    Seamless,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NavMode {
    Identical,
    Modified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampPoint {
    /// Stream time, seconds.
    pub time: f64,
    /// Spoofed displacement, meters.
    pub offset_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackerConfig {
    pub power_advantage_db: f64,
    pub takeover: TakeoverMode,
    /// Hard takeover: stream time at which the attacker appears.
    pub onset: f64,
    /// Hard takeover: spoofed displacement, meters.
    pub offset_m: f64,
    /// Seamless takeover: displacement schedule, linear between points.
    pub ramp: Vec<RampPoint>,
    /// Azimuth of the spoofed displacement, degrees from north.
    pub direction_deg: f64,
    /// Attacker-imposed clock offset per meter of displacement; defaults to
    /// a value that keeps every auxiliary peak at least
    /// `MIN_SEPARATION_FACTOR * d / c` from its legitimate peak.
    pub clock_offset_factor: Option<f64>,
    pub nav: NavMode,
    /// Spoofed PRNs; empty means every legitimate PRN.
    pub prns: Vec<u8>,
}

impl Default for AttackerConfig {
    fn default() -> Self {
        AttackerConfig {
            power_advantage_db: 3.0,
            takeover: TakeoverMode::Hard,
            onset: 0.0,
            offset_m: 1500.0,
            ramp: Vec::new(),
            direction_deg: 90.0,
            clock_offset_factor: None,
            nav: NavMode::Identical,
            prns: Vec::new(),
        }
    }
}

impl AttackerConfig {
    /// Largest displacement the attack reaches.
    pub fn max_offset(&self) -> f64 {
        match self.takeover {
            TakeoverMode::Hard => self.offset_m,
            TakeoverMode::Seamless => self.ramp.iter().map(|p| p.offset_m).fold(0.0, f64::max),
        }
    }

    fn validate(&self, legit: &[u8]) -> Result<()> {
        if !(-10.0..=20.0).contains(&self.power_advantage_db) {
            return Err(Error::invalid(format!(
                "power advantage {} dB outside [-10, 20]",
                self.power_advantage_db
            )));
        }
        match self.takeover {
            TakeoverMode::Hard => {
                if !(self.onset >= 0.0) || !self.offset_m.is_finite() {
                    return Err(Error::invalid("hard takeover needs onset >= 0 and a finite offset"));
                }
            }
            TakeoverMode::Seamless => {
                if self.ramp.is_empty() {
                    return Err(Error::invalid("seamless takeover needs a ramp"));
                }
                if self.ramp.windows(2).any(|w| !(w[1].time > w[0].time)) {
                    return Err(Error::invalid("ramp times must increase"));
                }
                if self.ramp.iter().any(|p| !p.offset_m.is_finite() || !(p.time >= 0.0)) {
                    return Err(Error::invalid("ramp points must be finite with time >= 0"));
                }
            }
        }
        if let Some(p) = self.prns.iter().find(|p| !legit.contains(p)) {
            return Err(Error::invalid(format!(
                "attacker PRN {p} has no legitimate counterpart"
            )));
        }
        Ok(())
    }
}

/// Eight satellites spread in azimuth, none more than 0.35 along east
/// (cosine elevation times sine azimuth).
const DEFAULT_SKY: [(u8, f64, f64, f64); 8] = [
    (2, 0.0, 30.0, -420.0),
    (5, 90.0, 70.0, 130.0),
    (7, 180.0, 40.0, 560.0),
    (12, 270.0, 25.0, -610.0),
    (15, 30.0, 60.0, 250.0),
    (19, 315.0, 50.0, -300.0),
    (24, 135.0, 65.0, 40.0),
    (29, 225.0, 15.0, 650.0),
];

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            duration: 6.0,
            sample_rate: DEFAULT_SAMPLE_RATE,
            start_time: DEFAULT_START_TIME,
            cn0_dbhz: 45.0,
            noise_density: None,
            amplitude: 1.0,
            receiver: ReceiverConfig {
                lat_deg: 37.7749,
                lon_deg: -122.4194,
                height: 16.0,
            },
            satellites: DEFAULT_SKY
                .iter()
                .map(|&(prn, az, el, rate)| SatelliteConfig {
                    prn,
                    azimuth_deg: az,
                    elevation_deg: el,
                    range_rate: rate,
                })
                .collect(),
            attacker: None,
        }
    }
}

impl ScenarioConfig {
    /// Attacker present from the first sample at a fixed displacement.
    pub fn static_attack(offset_m: f64, advantage_db: f64) -> Self {
        ScenarioConfig {
            attacker: Some(AttackerConfig {
                power_advantage_db: advantage_db,
                takeover: TakeoverMode::Hard,
                onset: 0.0,
                offset_m,
                ..AttackerConfig::default()
            }),
            ..ScenarioConfig::default()
        }
    }

    /// Attacker aligned with the legitimate signals at start, then dragging
    /// the fix at [`SEAMLESS_SPEED`] from 0.5 s until `final_offset_m`, and
    /// holding it for 3 s.
    pub fn seamless(advantage_db: f64, final_offset_m: f64) -> Self {
        let end = 0.5 + final_offset_m.abs() / SEAMLESS_SPEED;
        ScenarioConfig {
            duration: end + 3.0,
            attacker: Some(AttackerConfig {
                power_advantage_db: advantage_db,
                takeover: TakeoverMode::Seamless,
                ramp: vec![
                    RampPoint {
                        time: 0.0,
                        offset_m: 0.0,
                    },
                    RampPoint {
                        time: 0.5,
                        offset_m: 0.0,
                    },
                    RampPoint {
                        time: end,
                        offset_m: final_offset_m,
                    },
                ],
                ..AttackerConfig::default()
            }),
            ..ScenarioConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) {
            return Err(Error::invalid("duration must be positive"));
        }
        if !(self.sample_rate >= 2.0 * CHIP_RATE) || !self.sample_rate.is_finite() {
            return Err(Error::invalid(format!(
                "sample rate {} below 2x chip rate",
                self.sample_rate
            )));
        }
        if !(self.amplitude >= 0.0) {
            return Err(Error::invalid("amplitude must be >= 0"));
        }
        if let Some(n) = self.noise_density {
            if !(n >= 0.0) {
                return Err(Error::invalid("noise density must be >= 0"));
            }
        } else if self.cn0_dbhz.is_nan() {
            return Err(Error::invalid("cn0_dbhz is NaN"));
        }
        if self.satellites.len() < 4 {
            return Err(Error::invalid(format!(
                "{} legitimate satellites, at least 4 required",
                self.satellites.len()
            )));
        }
        let mut prns: Vec<u8> = self.satellites.iter().map(|s| s.prn).collect();
        prns.sort_unstable();
        if prns.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate satellite PRN"));
        }
        for s in &self.satellites {
            if !(1..=32).contains(&s.prn) {
                return Err(Error::invalid(format!("PRN {} outside 1..=32", s.prn)));
            }
            if !(0.0..=90.0).contains(&s.elevation_deg) {
                return Err(Error::invalid(format!("PRN {} elevation out of range", s.prn)));
            }
            if !(s.range_rate.abs() < 1500.0) {
                return Err(Error::invalid(format!("PRN {} range rate too large", s.prn)));
            }
        }
        if let Some(a) = &self.attacker {
            a.validate(&prns)?;
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: ScenarioConfig =
            toml::from_str(s).map_err(|e| Error::format(format!("scenario config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::format(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}
