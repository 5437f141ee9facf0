//! C/A spreading codes, navigation frames and per-satellite baseband
//! synthesis.
//!
//! A satellite's received signal at stream time `u` (seconds since the first
//! sample) is
//!
//! ```text
//! a * c(u - tau(u)) * d(u - tau(u)) * exp(j(2 pi f_D u + phi))
//! ```
//!
//! where `c` is the 1 ms C/A code, `d` the ±1 nav symbol stream and
//! `tau(u) = tau_0 - (f_D / f_L1) u` carries the code Doppler implied by the
//! carrier Doppler. `u - tau(u)` is called *code time* below; code periods
//! start at integer milliseconds of code time.

pub mod ca_code;
pub mod nav;

use std::f64::consts::TAU;

use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ca_code::{all_codes, generate_ca_code, PrnCode};
pub use nav::{NavMessage, NavStream, FRAME_BITS, FRAME_DURATION, PREAMBLE};

pub use rustfft::num_complex;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const L1_FREQUENCY: f64 = 1_575.42e6;
pub const CHIP_RATE: f64 = 1.023e6;
pub const CODE_LENGTH: usize = 1023;
pub const CODE_PERIOD: f64 = 1e-3;
pub const BIT_PERIOD: f64 = 20e-3;
pub const PERIODS_PER_BIT: usize = 20;
pub const DEFAULT_SAMPLE_RATE: f64 = 10e6;
pub const MAX_DOPPLER: f64 = 10e3;

const CHIPS_PER_BIT: f64 = CODE_LENGTH as f64 * PERIODS_PER_BIT as f64;

/// Complex baseband samples with their sampling metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer {
    pub samples: Vec<Complex32>,
    pub sample_rate: f64,
    /// Receiver time of the first sample, seconds.
    pub start_time: f64,
}

impl IqBuffer {
    pub fn new(samples: Vec<Complex32>, sample_rate: f64, start_time: f64) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::invalid(format!("sample rate {sample_rate} must be > 0")));
        }
        Ok(IqBuffer {
            samples,
            sample_rate,
            start_time,
        })
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Result<Self> {
        Self::new(vec![Complex32::new(0.0, 0.0); len], sample_rate, 0.0)
    }

    pub fn from_f64(samples: &[Complex64], sample_rate: f64, start_time: f64) -> Result<Self> {
        let s = samples
            .iter()
            .map(|z| Complex32::new(z.re as f32, z.im as f32))
            .collect();
        Self::new(s, sample_rate, start_time)
    }

    pub fn to_f64(&self) -> Vec<Complex64> {
        self.samples
            .iter()
            .map(|z| Complex64::new(z.re as f64, z.im as f64))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Samples per C/A code period at this rate.
    pub fn samples_per_code(&self) -> usize {
        samples_per_code(self.sample_rate)
    }

    /// Copy of `len` samples starting at `offset`, with `start_time` advanced.
    pub fn slice(&self, offset: usize, len: usize) -> IqBuffer {
        let end = (offset + len).min(self.samples.len());
        let offset = offset.min(end);
        IqBuffer {
            samples: self.samples[offset..end].to_vec(),
            sample_rate: self.sample_rate,
            start_time: self.start_time + offset as f64 / self.sample_rate,
        }
    }

    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|z| z.norm_sqr() as f64).sum::<f64>() / self.samples.len() as f64
    }
}

pub fn samples_per_code(sample_rate: f64) -> usize {
    (sample_rate * CODE_PERIOD).round() as usize
}

/// ±1 nav symbols laid out in code time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NavModulation {
    pub symbols: Vec<i8>,
    /// Code time at which `symbols[0]` starts, seconds.
    pub first_edge: f64,
}

impl NavModulation {
    /// No data modulation: every symbol reads +1.
    pub fn unmodulated() -> Self {
        NavModulation::default()
    }

    /// Maps a frame stream whose transmission time relates to code time by
    /// `code_time = transmit_time + offset`.
    pub fn from_stream(stream: &NavStream, offset: f64) -> Self {
        NavModulation {
            symbols: stream.bits.iter().map(|&b| if b == 0 { 1 } else { -1 }).collect(),
            first_edge: stream.first_frame_tow + offset,
        }
    }

    #[inline]
    fn symbol_at_chip(&self, chip_time: f64, edge_chips: f64) -> f64 {
        if self.symbols.is_empty() {
            return 1.0;
        }
        let idx = ((chip_time - edge_chips) / CHIPS_PER_BIT).floor();
        if idx < 0.0 || idx >= self.symbols.len() as f64 {
            1.0
        } else {
            self.symbols[idx as usize] as f64
        }
    }

    /// Symbol in effect at `code_time` seconds.
    pub fn symbol_at(&self, code_time: f64) -> i8 {
        self.symbol_at_chip(code_time * CHIP_RATE, self.first_edge * CHIP_RATE) as i8
    }
}

/// Physical parameters of one emitter as seen at the receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteSignalParams {
    pub prn: u8,
    /// Linear amplitude.
    pub amplitude: f64,
    /// Code delay at the first sample, seconds in `[0, 1 ms)`.
    pub code_delay: f64,
    /// Carrier Doppler, Hz.
    pub doppler: f64,
    /// Carrier phase at the first sample, radians in `[0, 2 pi)`.
    pub carrier_phase: f64,
    pub nav: NavModulation,
}

impl SatelliteSignalParams {
    /// Builds params, wrapping delay and phase into their canonical ranges.
    pub fn new(prn: u8, amplitude: f64, code_delay: f64, doppler: f64, carrier_phase: f64) -> Self {
        SatelliteSignalParams {
            prn,
            amplitude,
            code_delay: code_delay.rem_euclid(CODE_PERIOD),
            doppler,
            carrier_phase: carrier_phase.rem_euclid(TAU),
            nav: NavModulation::unmodulated(),
        }
    }

    pub fn with_nav(mut self, nav: NavModulation) -> Self {
        self.nav = nav;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=32).contains(&self.prn) {
            return Err(Error::invalid(format!("PRN {} outside 1..=32", self.prn)));
        }
        if !(self.amplitude >= 0.0) {
            return Err(Error::invalid("amplitude must be >= 0"));
        }
        if !(self.doppler.abs() <= MAX_DOPPLER) {
            return Err(Error::invalid(format!("doppler {} exceeds 10 kHz", self.doppler)));
        }
        if !(0.0..CODE_PERIOD).contains(&self.code_delay) {
            return Err(Error::invalid(format!("code delay {} outside [0, 1 ms)", self.code_delay)));
        }
        if !(0.0..TAU).contains(&self.carrier_phase) {
            return Err(Error::invalid("carrier phase outside [0, 2 pi)"));
        }
        Ok(())
    }

    /// Code delay at stream time `u`, unwrapped.
    pub fn code_delay_at(&self, u: f64) -> f64 {
        self.code_delay - self.doppler / L1_FREQUENCY * u
    }

    /// Code time at stream time `u`.
    pub fn code_time_at(&self, u: f64) -> f64 {
        u - self.code_delay_at(u)
    }
}

fn check_rate(sample_rate: f64) -> Result<()> {
    if !(sample_rate >= 2.0 * CHIP_RATE) {
        return Err(Error::invalid(format!(
            "sample rate {sample_rate} below 2x chip rate"
        )));
    }
    Ok(())
}

/// Synthesizes one emitter into a new buffer starting at stream time 0.
pub fn synthesize_signal(
    params: &SatelliteSignalParams,
    duration: f64,
    sample_rate: f64,
) -> Result<IqBuffer> {
    check_rate(sample_rate)?;
    if !(duration >= CODE_PERIOD - 1e-12) {
        return Err(Error::invalid("duration must be at least 1 ms"));
    }
    params.validate()?;
    let code = generate_ca_code(params.prn)?;
    let n = (duration * sample_rate).round() as usize;
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    add_signal(params, &code, sample_rate, 0, &mut acc);
    IqBuffer::from_f64(&acc, sample_rate, 0.0)
}

/// Adds the emitter's samples `first_sample..first_sample + out.len()`
/// (indices from the stream origin) into `out`.
pub fn add_signal(
    params: &SatelliteSignalParams,
    code: &PrnCode,
    sample_rate: f64,
    first_sample: u64,
    out: &mut [Complex64],
) {
    add_scaled_signal(params, code, sample_rate, first_sample, Complex64::new(1.0, 0.0), out);
}

/// As [`add_signal`] with an extra complex gain applied (use `-1` to subtract).
pub fn add_scaled_signal(
    params: &SatelliteSignalParams,
    code: &PrnCode,
    sample_rate: f64,
    first_sample: u64,
    gain: Complex64,
    out: &mut [Complex64],
) {
    if params.amplitude == 0.0 || gain == Complex64::new(0.0, 0.0) {
        return;
    }
    const BLOCK: usize = 4096;
    let code_rate = 1.0 + params.doppler / L1_FREQUENCY;
    let chips_per_sample = CHIP_RATE * code_rate / sample_rate;
    let omega = TAU * params.doppler / sample_rate;
    let rot = Complex64::from_polar(1.0, omega);
    let edge_chips = params.nav.first_edge * CHIP_RATE;
    let delay_chips = params.code_delay * CHIP_RATE;
    let chips = code.unrolled();
    let chip_at = |n: u64| n as f64 * chips_per_sample - delay_chips;

    for (b, block) in out.chunks_mut(BLOCK).enumerate() {
        let n0 = first_sample + (b * BLOCK) as u64;
        let mut ph = gain
            * Complex64::from_polar(params.amplitude, omega * n0 as f64 + params.carrier_phase);
        // absolute index keeps chip edges identical however the stream is split;
        // subtracting a whole number of periods from a larger float is exact
        let first_pos = chip_at(n0);
        let mut base = (first_pos / CODE_LENGTH as f64).floor() * CODE_LENGTH as f64;
        if first_pos < base {
            base -= CODE_LENGTH as f64;
        }
        let last_pos = chip_at(n0 + block.len() as u64 - 1);
        let sym0 = params.nav.symbol_at_chip(first_pos, edge_chips);
        let constant = sym0 == params.nav.symbol_at_chip(last_pos, edge_chips);
        for (i, s) in block.iter_mut().enumerate() {
            let chip_pos = chip_at(n0 + i as u64);
            // non-negative, so truncation is floor
            let ci = (chip_pos - base) as usize;
            let sym = if constant {
                sym0
            } else {
                params.nav.symbol_at_chip(chip_pos, edge_chips)
            };
            *s += ph * (chips[ci] * sym);
            ph *= rot;
        }
    }
}

/// Local replica of one code period sampled at `sample_rate`, starting at
/// code phase zero, as ±1 values.
pub fn sampled_code(code: &PrnCode, sample_rate: f64, len: usize) -> Vec<f64> {
    let step = CHIP_RATE / sample_rate;
    (0..len)
        .map(|n| {
            let ci = ((n as f64 * step).floor() as usize) % CODE_LENGTH;
            code.chip(ci) as f64
        })
        .collect()
}
