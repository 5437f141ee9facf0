//! Pseudoranges by common reception time, and their rectification with
//! legitimate/adversarial delay offsets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{CODE_PERIOD, L1_FREQUENCY, SPEED_OF_LIGHT};

pub const DEFAULT_T_REF: f64 = 0.070;
const T_REF_BAND: (f64, f64) = (0.065, 0.085);

/// Transmit time of one channel at a common receive sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelMeasurement {
    pub prn: u8,
    /// Receiver sample index of the epoch.
    pub sample_counter: u64,
    /// Receiver time of the epoch, seconds.
    pub receive_time: f64,
    /// Satellite transmit time of the signal arriving at the epoch, seconds.
    pub transmit_time: f64,
}

/// Offset between the adversarial and legitimate code delays of one PRN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayOffset {
    pub prn: u8,
    pub tau_at: f64,
    pub tau_l: f64,
    /// `tau_at - tau_l`, reduced modulo the code period into `(-0.5, 0.5]` ms.
    pub delta: f64,
}

impl DelayOffset {
    pub fn new(prn: u8, tau_at: f64, tau_l: f64) -> Self {
        let mut delta = tau_at - tau_l;
        if delta > CODE_PERIOD / 2.0 {
            delta -= CODE_PERIOD;
        } else if delta <= -CODE_PERIOD / 2.0 {
            delta += CODE_PERIOD;
        }
        DelayOffset {
            prn,
            tau_at,
            tau_l,
            delta,
        }
    }

    /// Carries the offset forward by `dt` seconds when the two signals have
    /// different Doppler (code delay changes at `-f_D / f_L1`).
    pub fn propagate(&self, dt: f64, doppler_at: f64, doppler_l: f64) -> DelayOffset {
        let tau_at = self.tau_at - doppler_at / L1_FREQUENCY * dt;
        let tau_l = self.tau_l - doppler_l / L1_FREQUENCY * dt;
        DelayOffset {
            prn: self.prn,
            tau_at,
            tau_l,
            delta: self.delta - (doppler_at - doppler_l) / L1_FREQUENCY * dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pseudorange {
    pub prn: u8,
    /// Meters.
    pub pseudorange: f64,
    pub rectified: bool,
    /// Transmit time used for the satellite position, seconds.
    pub transmit_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudorangeSet {
    pub entries: Vec<Pseudorange>,
    pub t_ref: f64,
    /// Receiver time of the epoch, seconds.
    pub t_rx: f64,
    pub sample_counter: u64,
    /// Set when `t_ref` lies outside the usual 65-85 ms band.
    pub t_ref_warning: bool,
}

impl PseudorangeSet {
    /// True when every pseudorange lies within `[c 60 ms, c 100 ms]`.
    pub fn plausible(&self) -> bool {
        self.entries.iter().all(|e| {
            (SPEED_OF_LIGHT * 0.060..=SPEED_OF_LIGHT * 0.100).contains(&e.pseudorange)
        })
    }

    pub fn get(&self, prn: u8) -> Option<&Pseudorange> {
        self.entries.iter().find(|e| e.prn == prn)
    }
}

/// Pseudoranges anchored on the nearest satellite (latest transmit time),
/// which is assigned a propagation time of `t_ref`.
pub fn compute_pseudoranges(channels: &[ChannelMeasurement], t_ref: f64) -> Result<PseudorangeSet> {
    build(channels, t_ref, &BTreeMap::new())
}

/// As [`compute_pseudoranges`] on channels tracking adversarial peaks, with
/// each transmit time moved by its PRN's offset.
pub fn rectify(
    channels: &[ChannelMeasurement],
    offsets: &[DelayOffset],
    t_ref: f64,
) -> Result<PseudorangeSet> {
    let map: BTreeMap<u8, f64> = offsets.iter().map(|o| (o.prn, o.delta)).collect();
    let missing: Vec<u8> = channels
        .iter()
        .filter(|c| !map.contains_key(&c.prn))
        .map(|c| c.prn)
        .collect();
    if !missing.is_empty() {
        return Err(Error::PartialRectification(missing));
    }
    build(channels, t_ref, &map)
}

fn build(
    channels: &[ChannelMeasurement],
    t_ref: f64,
    offsets: &BTreeMap<u8, f64>,
) -> Result<PseudorangeSet> {
    if channels.len() < 4 {
        return Err(Error::InsufficientSatellites {
            have: channels.len(),
            need: 4,
        });
    }
    let epoch = channels[0].sample_counter;
    if channels.iter().any(|c| c.sample_counter != epoch) {
        return Err(Error::invalid("channels do not share one sample epoch"));
    }
    let tx: Vec<f64> = channels
        .iter()
        .map(|c| c.transmit_time + offsets.get(&c.prn).copied().unwrap_or(0.0))
        .collect();
    let latest = tx.iter().copied().fold(f64::MIN, f64::max);
    let entries = channels
        .iter()
        .zip(&tx)
        .map(|(c, &t)| Pseudorange {
            prn: c.prn,
            pseudorange: SPEED_OF_LIGHT * (t_ref + (latest - t)),
            rectified: offsets.contains_key(&c.prn),
            transmit_time: t,
        })
        .collect();
    Ok(PseudorangeSet {
        entries,
        t_ref,
        t_rx: channels[0].receive_time,
        sample_counter: epoch,
        t_ref_warning: !(T_REF_BAND.0..=T_REF_BAND.1).contains(&t_ref),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meas(prn: u8, tx: f64) -> ChannelMeasurement {
        ChannelMeasurement {
            prn,
            sample_counter: 40_000_000,
            receive_time: 4.0,
            transmit_time: tx,
        }
    }

    #[test]
    fn reference_channel_gets_t_ref() {
        let ch: Vec<_> = (1..=4).map(|p| meas(p, 35.0)).collect();
        let set = compute_pseudoranges(&ch, 0.070).unwrap();
        for e in &set.entries {
            assert!((e.pseudorange - 20_985_472.06).abs() < 1e-3);
        }
        assert!(!set.t_ref_warning);
        assert!(set.plausible());
        assert!(compute_pseudoranges(&ch, 0.090).unwrap().t_ref_warning);
        assert!(compute_pseudoranges(&ch, 0.060).unwrap().t_ref_warning);
    }

    #[test]
    fn range_differences_follow_transmit_times() {
        let dt = 300.0 / SPEED_OF_LIGHT;
        let ch = vec![meas(1, 35.0), meas(2, 35.0 - dt), meas(3, 35.0 - 2e-3), meas(4, 35.0)];
        let set = compute_pseudoranges(&ch, 0.075).unwrap();
        let d = set.get(2).unwrap().pseudorange - set.get(1).unwrap().pseudorange;
        assert!((d - 300.0).abs() < 1e-6);
    }

    #[test]
    fn errors() {
        let ch: Vec<_> = (1..=3).map(|p| meas(p, 35.0)).collect();
        assert!(matches!(
            compute_pseudoranges(&ch, 0.07),
            Err(Error::InsufficientSatellites { have: 3, .. })
        ));
        let mut ch: Vec<_> = (1..=4).map(|p| meas(p, 35.0)).collect();
        let offsets: Vec<_> = (1..=3).map(|p| DelayOffset::new(p, 1e-4, 1e-4)).collect();
        match rectify(&ch, &offsets, 0.07) {
            Err(Error::PartialRectification(v)) => assert_eq!(v, vec![4]),
            other => panic!("{other:?}"),
        }
        ch[1].sample_counter += 1;
        assert!(compute_pseudoranges(&ch, 0.07).is_err());
    }

    #[test]
    fn zero_offsets_are_identity() {
        let ch: Vec<_> = (1..=5).map(|p| meas(p, 35.0 - p as f64 * 1e-3)).collect();
        let offsets: Vec<_> = (1..=5).map(|p| DelayOffset::new(p, 2e-4, 2e-4)).collect();
        let a = compute_pseudoranges(&ch, 0.07).unwrap();
        let b = rectify(&ch, &offsets, 0.07).unwrap();
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!(x.pseudorange, y.pseudorange);
            assert!(y.rectified && !x.rectified);
        }
    }

    #[test]
    fn offset_wraps_into_half_period() {
        let o = DelayOffset::new(1, 0.05e-3, 0.95e-3);
        assert!((o.delta - 0.1e-3).abs() < 1e-15);
        let o = DelayOffset::new(1, 0.3e-3, 0.1e-3);
        assert_eq!(o.delta, 0.3e-3 - 0.1e-3);
        let p = o.propagate(1.0, 1000.0, 1000.0);
        assert_eq!(p.delta, o.delta);
    }

    proptest! {
        #[test]
        fn rectified_equals_legitimate(
            base in 30.0f64..60.0,
            travel in proptest::collection::vec(0.066f64..0.086, 4..9),
            delays in proptest::collection::vec(1e-7f64..4e-5, 9),
        ) {
            // legitimate transmit times and adversarial ones delayed by delta
            let legit: Vec<_> = travel.iter().enumerate()
                .map(|(i, t)| meas(i as u8 + 1, base - t)).collect();
            let adv: Vec<_> = legit.iter().zip(&delays)
                .map(|(m, d)| ChannelMeasurement { transmit_time: m.transmit_time - d, ..*m }).collect();
            let offsets: Vec<_> = legit.iter().zip(&delays)
                .map(|(m, d)| DelayOffset { prn: m.prn, tau_at: 2e-4 + d, tau_l: 2e-4, delta: *d }).collect();
            let a = compute_pseudoranges(&legit, 0.07).unwrap();
            let b = rectify(&adv, &offsets, 0.07).unwrap();
            for (x, y) in a.entries.iter().zip(&b.entries) {
                prop_assert!((x.pseudorange - y.pseudorange).abs() < 1e-5);
            }
        }
    }
}
