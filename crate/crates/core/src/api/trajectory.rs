use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timestamped positions in a local north-east-down frame, meters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrackPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub t: f64,
    pub position: [f64; 3],
}

impl Trajectory {
    /// Builds a trajectory, rejecting non-increasing timestamps.
    pub fn new(samples: Vec<TrackPoint>) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::invalid("trajectory timestamps must increase strictly"));
        }
        Ok(Trajectory { samples })
    }

    /// A point held still over `[t0, t1]` at `rate` Hz.
    pub fn stationary(position: [f64; 3], t0: f64, t1: f64, rate: f64) -> Self {
        let n = ((t1 - t0) * rate).floor() as usize + 1;
        Trajectory {
            samples: (0..n)
                .map(|i| TrackPoint {
                    t: t0 + i as f64 / rate,
                    position,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Linear interpolation at `t`; `None` outside the covered span.
    pub fn position_at(&self, t: f64) -> Option<[f64; 3]> {
        let s = &self.samples;
        if s.is_empty() || t < s[0].t || t > s[s.len() - 1].t {
            return None;
        }
        let i = s.partition_point(|p| p.t <= t);
        if i == 0 {
            return Some(s[0].position);
        }
        if i == s.len() {
            return Some(s[s.len() - 1].position);
        }
        let (a, b) = (&s[i - 1], &s[i]);
        let w = (t - a.t) / (b.t - a.t);
        Some([0, 1, 2].map(|k| a.position[k] + w * (b.position[k] - a.position[k])))
    }

    /// Writes `t,x,y,z` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "z"]).map_err(csv_err)?;
        for p in &self.samples {
            w.serialize((p.t, p.position[0], p.position[1], p.position[2]))
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format(format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_and_bounds() {
        let t = Trajectory::new(vec![
            TrackPoint { t: 0.0, position: [0.0, 0.0, 0.0] },
            TrackPoint { t: 1.0, position: [2.0, -4.0, 1.0] },
        ])
        .unwrap();
        assert_eq!(t.position_at(0.25), Some([0.5, -1.0, 0.25]));
        assert_eq!(t.position_at(1.5), None);
        assert!(Trajectory::new(vec![t.samples[1], t.samples[0]]).is_err());
    }

    #[test]
    fn csv_export() {
        let t = Trajectory::stationary([1.0, 2.0, 3.0], 0.0, 0.4, 5.0);
        assert_eq!(t.len(), 3);
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(s.starts_with("t,x,y,z\n0.0,1.0,2.0,3.0\n"));
    }
}
