//! Simplified navigation frames.
//!
//! A frame is 176 bits at 50 bps (3.52 s):
//!
//! | bits      | field                                               |
//! |-----------|-----------------------------------------------------|
//! | 0..8      | preamble `10001011`                                 |
//! | 8..32     | transmission time of the frame start, in 20 ms bits |
//! | 32..128   | satellite ECEF position x, y, z: i32, 0.02 m LSB     |
//! | 128..176  | satellite ECEF velocity x, y, z: i16, 0.05 m/s LSB   |
//!
//! Bits are logic-level (0/1); modulation maps 0 to +1 and 1 to -1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::BIT_PERIOD;

pub const PREAMBLE: [u8; 8] = [1, 0, 0, 0, 1, 0, 1, 1];
pub const FRAME_BITS: usize = 176;
pub const FRAME_DURATION: f64 = FRAME_BITS as f64 * BIT_PERIOD;

const TOW_BITS: usize = 24;
const POS_LSB: f64 = 0.02;
const VEL_LSB: f64 = 0.05;

/// Satellite state carried by one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavMessage {
    pub prn: u8,
    /// Transmission time of the first preamble bit, seconds.
    pub tow: f64,
    /// ECEF position at `tow`, meters.
    pub position: [f64; 3],
    /// ECEF velocity, m/s.
    pub velocity: [f64; 3],
}

impl NavMessage {
    pub fn frame_length_bits(&self) -> usize {
        FRAME_BITS
    }

    /// Satellite position at transmission time `t`.
    pub fn position_at(&self, t: f64) -> [f64; 3] {
        let dt = t - self.tow;
        [
            self.position[0] + self.velocity[0] * dt,
            self.position[1] + self.velocity[1] * dt,
            self.position[2] + self.velocity[2] * dt,
        ]
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let tow_bits = (self.tow / BIT_PERIOD).round();
        if !(0.0..(1u64 << TOW_BITS) as f64).contains(&tow_bits) {
            return Err(Error::invalid(format!("tow {} s out of range", self.tow)));
        }
        let mut out = Vec::with_capacity(FRAME_BITS);
        out.extend_from_slice(&PREAMBLE);
        push_bits(&mut out, tow_bits as u64, TOW_BITS);
        for p in self.position {
            let q = quantize(p, POS_LSB, i32::MIN as f64, i32::MAX as f64)?;
            push_bits(&mut out, q as i32 as u32 as u64, 32);
        }
        for v in self.velocity {
            let q = quantize(v, VEL_LSB, i16::MIN as f64, i16::MAX as f64)?;
            push_bits(&mut out, q as i16 as u16 as u64, 16);
        }
        debug_assert_eq!(out.len(), FRAME_BITS);
        Ok(out)
    }

    /// Decodes a frame starting at its preamble. Bits must be logic-level
    /// with polarity already resolved.
    pub fn decode(prn: u8, bits: &[u8]) -> Result<NavMessage> {
        if bits.len() < FRAME_BITS {
            return Err(Error::format(format!(
                "frame needs {FRAME_BITS} bits, got {}",
                bits.len()
            )));
        }
        if bits[..8] != PREAMBLE {
            return Err(Error::format("frame does not start with preamble"));
        }
        let mut pos = 8;
        let tow = read_bits(bits, &mut pos, TOW_BITS) as f64 * BIT_PERIOD;
        let mut position = [0.0; 3];
        for p in position.iter_mut() {
            *p = read_bits(bits, &mut pos, 32) as u32 as i32 as f64 * POS_LSB;
        }
        let mut velocity = [0.0; 3];
        for v in velocity.iter_mut() {
            *v = read_bits(bits, &mut pos, 16) as u16 as i16 as f64 * VEL_LSB;
        }
        Ok(NavMessage {
            prn,
            tow,
            position,
            velocity,
        })
    }

    /// Reads only the transmission-time field of a frame starting at `start`.
    pub fn peek_tow(bits: &[u8], start: usize) -> Option<f64> {
        if bits.len() < start + 8 + TOW_BITS {
            return None;
        }
        let mut pos = start + 8;
        Some(read_bits(bits, &mut pos, TOW_BITS) as f64 * BIT_PERIOD)
    }
}

fn quantize(v: f64, lsb: f64, lo: f64, hi: f64) -> Result<f64> {
    let q = (v / lsb).round();
    if !(lo..=hi).contains(&q) || !q.is_finite() {
        return Err(Error::invalid(format!("value {v} does not fit the frame field")));
    }
    Ok(q)
}

fn push_bits(out: &mut Vec<u8>, value: u64, width: usize) {
    for i in (0..width).rev() {
        out.push(((value >> i) & 1) as u8);
    }
}

fn read_bits(bits: &[u8], pos: &mut usize, width: usize) -> u64 {
    let v = bits[*pos..*pos + width]
        .iter()
        .fold(0u64, |acc, &b| (acc << 1) | u64::from(b & 1));
    *pos += width;
    v
}

/// Bit stream for one satellite covering consecutive frames.
///
/// `first_frame_tow` is the transmission time of bit 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NavStream {
    pub first_frame_tow: f64,
    pub bits: Vec<u8>,
}

impl NavStream {
    /// Frames for a satellite moving linearly from `position` (at transmission
    /// time 0) with `velocity`, covering transmission times `[t_from, t_to]`.
    pub fn for_satellite(
        prn: u8,
        position_at_zero: [f64; 3],
        velocity: [f64; 3],
        t_from: f64,
        t_to: f64,
    ) -> Result<NavStream> {
        let first = (t_from / FRAME_DURATION).floor().max(0.0) as u64;
        let last = (t_to / FRAME_DURATION).floor().max(0.0) as u64;
        let mut bits = Vec::with_capacity((last - first + 1) as usize * FRAME_BITS);
        for k in first..=last {
            let tow = k as f64 * FRAME_DURATION;
            let msg = NavMessage {
                prn,
                tow,
                position: [
                    position_at_zero[0] + velocity[0] * tow,
                    position_at_zero[1] + velocity[1] * tow,
                    position_at_zero[2] + velocity[2] * tow,
                ],
                velocity,
            };
            bits.extend(msg.encode()?);
        }
        Ok(NavStream {
            first_frame_tow: first as f64 * FRAME_DURATION,
            bits,
        })
    }
}
