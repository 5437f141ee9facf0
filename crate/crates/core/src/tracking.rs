//! Code and carrier tracking, bit synchronization and frame search.
//!
//! A [`Channel`] consumes contiguous sample chunks. Its integrations follow
//! the local code: period `m` covers local code time `[m, m + 1)` ms, so
//! integrations line up with data bit edges once the code loop has settled.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::acquisition::AcqPeak;
use crate::error::{Error, Result};
use crate::rectifier::ChannelMeasurement;
use crate::signal::num_complex::Complex64;
use crate::signal::{
    generate_ca_code, IqBuffer, NavMessage, PrnCode, BIT_PERIOD, CHIP_RATE, CODE_LENGTH,
    CODE_PERIOD, FRAME_BITS, FRAME_DURATION, L1_FREQUENCY, PERIODS_PER_BIT, PREAMBLE,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingConfig {
    /// Code loop noise bandwidth, Hz.
    pub dll_bandwidth: f64,
    /// Code loop bandwidth during pull-in, Hz.
    pub dll_pull_in_bandwidth: f64,
    /// Carrier loop noise bandwidth, Hz.
    pub pll_bandwidth: f64,
    pub pll_damping: f64,
    /// Frequency-assist gain per period while pulling in.
    pub fll_gain: f64,
    pub pull_in_ms: usize,
    /// Early-to-late spacing, chips.
    pub correlator_spacing: f64,
    /// Carrier-to-noise estimate below which the channel counts as unlocked.
    pub lock_cn0_dbhz: f64,
    /// Periods in the lock detector window.
    pub lock_window: usize,
    /// Unlocked periods tolerated before loss of lock is declared.
    pub hysteresis_ms: usize,
    /// Transitions needed before the bit phase is fixed.
    pub bit_sync_transitions: u32,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        TrackingConfig {
            dll_bandwidth: 2.0,
            dll_pull_in_bandwidth: 10.0,
            pll_bandwidth: 25.0,
            pll_damping: 0.707,
            fll_gain: 0.05,
            pull_in_ms: 100,
            correlator_spacing: 0.5,
            lock_cn0_dbhz: 30.0,
            lock_window: 20,
            hysteresis_ms: 50,
            bit_sync_transitions: 12,
        }
    }
}

/// Channel snapshot at the start of one integration period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub prn: u8,
    /// Receiver sample index of the period start.
    pub sample_counter: u64,
    /// Local code time at `sample_counter`, seconds.
    pub code_time: f64,
    /// Code delay at `sample_counter`, seconds in `[0, 1 ms)`.
    pub code_delay: f64,
    /// Carrier NCO frequency over the period, Hz.
    pub doppler: f64,
    /// Carrier NCO phase at `sample_counter`, radians in `[0, 2 pi)`.
    pub carrier_phase: f64,
    /// Code time advanced per sample over the period.
    pub code_step: f64,
    /// Samples in the period.
    pub samples: u32,
    pub prompt: Complex64,
    pub locked: bool,
}

impl ChannelState {
    /// Period index in local code time.
    pub fn period(&self) -> i64 {
        (self.code_time / CODE_PERIOD).round() as i64
    }
}

/// One demodulated data bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitRecord {
    /// Receiver sample index of the bit's first period.
    pub sample_index: u64,
    /// Local code time at the bit edge, seconds.
    pub code_time: f64,
    /// Sum of the in-phase prompt over the bit.
    pub soft: f64,
}

impl BitRecord {
    /// Logic level (0 for a positive symbol).
    pub fn bit(&self) -> u8 {
        u8::from(self.soft < 0.0)
    }
}

/// Where bit 0 of a sequence sits in the sample stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitAnchor {
    pub sample_index: u64,
    pub code_time: f64,
    pub sample_rate: f64,
    /// Code seconds per receiver second.
    pub code_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSync {
    pub preamble_sample_index: u64,
    /// Local code time at the preamble edge, seconds.
    pub preamble_code_time: f64,
    pub inverted: bool,
    pub message: NavMessage,
    /// Receiver time at which the preamble edge arrived, seconds.
    pub toa: f64,
}

impl FrameSync {
    /// Transmit time of the signal at local code time `code_time`.
    pub fn transmit_time(&self, code_time: f64) -> f64 {
        self.message.tow + (code_time - self.preamble_code_time)
    }
}

const TOW_FIELD: usize = 24;

/// Locates a frame: a preamble at `i` and `i + 176` (same polarity) whose
/// frames carry transmission times exactly one frame apart.
pub fn find_preamble(bits: &[u8], anchor: BitAnchor) -> Result<FrameSync> {
    let need = FRAME_BITS + 8 + TOW_FIELD;
    if bits.len() < need {
        return Err(Error::PreambleNotFound { bits: bits.len() });
    }
    for inverted in [false, true] {
        let level: Vec<u8> = bits.iter().map(|&b| b ^ u8::from(inverted)).collect();
        for i in 0..=level.len() - need {
            if level[i..i + 8] != PREAMBLE || level[i + FRAME_BITS..i + FRAME_BITS + 8] != PREAMBLE
            {
                continue;
            }
            let (Ok(a), Some(next_tow)) = (
                NavMessage::decode(0, &level[i..]),
                NavMessage::peek_tow(&level, i + FRAME_BITS),
            ) else {
                continue;
            };
            if (next_tow - a.tow - FRAME_DURATION).abs() > 1e-6 {
                continue;
            }
            let preamble_code_time = anchor.code_time + i as f64 * BIT_PERIOD;
            let elapsed = i as f64 * BIT_PERIOD / anchor.code_rate;
            return Ok(FrameSync {
                preamble_sample_index: anchor.sample_index
                    + (elapsed * anchor.sample_rate).round() as u64,
                preamble_code_time,
                inverted,
                message: a,
                toa: anchor.sample_index as f64 / anchor.sample_rate + elapsed,
            });
        }
    }
    Err(Error::PreambleNotFound { bits: bits.len() })
}

/// Carrier-to-noise density (dB-Hz) from phase-locked prompts integrated
/// over `t` seconds each: in-phase magnitude against quadrature noise.
pub fn estimate_cn0(prompts: impl Iterator<Item = Complex64>, t: f64) -> f64 {
    let (mut n, mut abs_i, mut q2) = (0usize, 0.0, 0.0);
    for p in prompts {
        n += 1;
        abs_i += p.re.abs();
        q2 += p.im * p.im;
    }
    if n == 0 {
        return f64::NEG_INFINITY;
    }
    let (abs_i, q2) = (abs_i / n as f64, q2 / n as f64);
    if q2 == 0.0 {
        return f64::INFINITY;
    }
    let snr = (abs_i * abs_i - q2) / (2.0 * q2);
    if snr > 0.0 {
        10.0 * (snr / t).log10()
    } else {
        f64::NEG_INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Lock {
    PullIn,
    Locked,
    Lost,
}

#[derive(Debug, Clone)]
struct Integration {
    start_sample: u64,
    code_time: f64,
    phase: f64,
    freq: f64,
    code_step: f64,
    len: usize,
    done: usize,
    early: Complex64,
    prompt: Complex64,
    late: Complex64,
}

/// Streaming tracking channel for one PRN.
#[derive(Debug, Clone)]
pub struct Channel {
    prn: u8,
    code: PrnCode,
    table: Vec<f64>,
    sample_rate: f64,
    config: TrackingConfig,
    /// Next sample to consume.
    sample: u64,
    code_time: f64,
    phase: f64,
    freq: f64,
    freq_int: f64,
    current: Option<Integration>,
    last_prompt: Option<Complex64>,
    lock: Lock,
    unlocked_run: usize,
    transitions: [u32; PERIODS_PER_BIT],
    bit_phase: Option<usize>,
    history: Vec<ChannelState>,
    bits: Vec<BitRecord>,
    /// History index of the first period not yet folded into `bits`.
    bit_cursor: usize,
    frame: Option<FrameSync>,
    next_frame_try: usize,
}

impl Channel {
    /// Starts from an acquisition peak whose delay refers to sample
    /// `first_sample`.
    pub fn new(
        peak: &AcqPeak,
        first_sample: u64,
        sample_rate: f64,
        config: TrackingConfig,
    ) -> Result<Channel> {
        let code = generate_ca_code(peak.prn)?;
        let code_time = (first_sample as f64 / sample_rate - peak.code_delay).rem_euclid(CODE_PERIOD)
            + CODE_PERIOD;
        Ok(Channel::with_state(
            peak.prn,
            code,
            sample_rate,
            config,
            first_sample,
            code_time,
            0.0,
            peak.doppler,
        ))
    }

    /// Starts from an explicit NCO state: code time and carrier phase at
    /// sample `first_sample`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_state(
        prn: u8,
        code: PrnCode,
        sample_rate: f64,
        config: TrackingConfig,
        first_sample: u64,
        code_time: f64,
        carrier_phase: f64,
        doppler: f64,
    ) -> Channel {
        Channel {
            prn,
            table: code.unrolled(),
            code,
            sample_rate,
            config,
            sample: first_sample,
            code_time,
            phase: carrier_phase.rem_euclid(TAU),
            freq: doppler,
            freq_int: doppler,
            current: None,
            last_prompt: None,
            lock: Lock::PullIn,
            unlocked_run: 0,
            transitions: [0; PERIODS_PER_BIT],
            bit_phase: None,
            history: Vec::new(),
            bits: Vec::new(),
            bit_cursor: 0,
            frame: None,
            next_frame_try: FRAME_BITS + 8 + TOW_FIELD,
        }
    }

    pub fn prn(&self) -> u8 {
        self.prn
    }

    pub fn code(&self) -> &PrnCode {
        &self.code
    }

    /// Three code periods, indexed by chip position without wrapping.
    pub(crate) fn unrolled_code(&self) -> &[f64] {
        &self.table
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Next sample index the channel expects.
    pub fn sample_counter(&self) -> u64 {
        self.sample
    }

    pub fn is_locked(&self) -> bool {
        self.lock == Lock::Locked
    }

    pub fn is_lost(&self) -> bool {
        self.lock == Lock::Lost
    }

    pub fn doppler(&self) -> f64 {
        self.freq
    }

    pub fn history(&self) -> &[ChannelState] {
        &self.history
    }

    pub fn bits(&self) -> &[BitRecord] {
        &self.bits
    }

    pub fn bit_phase(&self) -> Option<usize> {
        self.bit_phase
    }

    pub fn frame(&self) -> Option<&FrameSync> {
        self.frame.as_ref()
    }

    /// Adopts a frame alignment derived elsewhere (for example from a
    /// channel tracking a delayed copy of the same broadcast).
    pub fn set_frame(&mut self, frame: FrameSync) {
        self.frame = Some(frame);
    }

    /// Local code time at sample `n`, extrapolated from the NCO.
    pub fn code_time_at(&self, n: u64) -> f64 {
        let step = (1.0 + self.freq / L1_FREQUENCY) / self.sample_rate;
        match &self.current {
            Some(c) => c.code_time + (n as f64 - c.start_sample as f64) * c.code_step,
            None => self.code_time + (n as f64 - self.sample as f64) * step,
        }
    }

    /// Code delay at sample `n`, seconds in `[0, 1 ms)`.
    pub fn code_delay_at(&self, n: u64) -> f64 {
        (n as f64 / self.sample_rate - self.code_time_at(n)).rem_euclid(CODE_PERIOD)
    }

    /// Transmit time at sample `n`; needs frame sync.
    pub fn measurement(&self, n: u64) -> Option<ChannelMeasurement> {
        let f = self.frame.as_ref()?;
        Some(ChannelMeasurement {
            prn: self.prn,
            sample_counter: n,
            receive_time: n as f64 / self.sample_rate,
            transmit_time: f.transmit_time(self.code_time_at(n)),
        })
    }

    /// Consumes `samples`, whose first element is stream sample
    /// `first_sample`. Chunks must arrive in order; samples before the
    /// channel's start are skipped.
    pub fn process(&mut self, samples: &[Complex64], first_sample: u64) -> Result<()> {
        if self.lock == Lock::Lost {
            return Ok(());
        }
        let end = first_sample + samples.len() as u64;
        if self.sample < first_sample {
            return Err(Error::invalid(format!(
                "PRN {}: chunk starts at {first_sample}, channel expects {}",
                self.prn, self.sample
            )));
        }
        while self.sample < end {
            if self.current.is_none() {
                if !self.start_period(end) {
                    break;
                }
                continue;
            }
            let offset = (self.sample - first_sample) as usize;
            let finished = self.integrate(&samples[offset..]);
            if finished {
                self.close_period()?;
                if self.lock == Lock::Lost {
                    break;
                }
            }
        }
        Ok(())
    }

    /// Aligns the NCO to the next period boundary. Returns false when the
    /// boundary lies past `end`.
    fn start_period(&mut self, end: u64) -> bool {
        let step = (1.0 + self.freq / L1_FREQUENCY) / self.sample_rate;
        // continue on the boundary just reached, or wait for the next one
        let r = (self.code_time / CODE_PERIOD).round();
        let m = if (self.code_time - r * CODE_PERIOD).abs() < 0.1 * CODE_PERIOD {
            r
        } else {
            (self.code_time / CODE_PERIOD).ceil()
        };
        let boundary = m * CODE_PERIOD;
        let skip = ((boundary - self.code_time) / step).ceil().max(0.0) as u64;
        if self.sample + skip >= end {
            // move to the end and retry with the next chunk
            let n = end - self.sample;
            self.code_time += n as f64 * step;
            self.phase = (self.phase + TAU * self.freq * n as f64 / self.sample_rate).rem_euclid(TAU);
            self.sample = end;
            return false;
        }
        self.code_time += skip as f64 * step;
        self.phase = (self.phase + TAU * self.freq * skip as f64 / self.sample_rate).rem_euclid(TAU);
        self.sample += skip;
        let next = boundary + CODE_PERIOD;
        let len = ((next - self.code_time) / step).ceil().max(1.0) as usize;
        self.current = Some(Integration {
            start_sample: self.sample,
            code_time: self.code_time,
            phase: self.phase,
            freq: self.freq,
            code_step: step,
            len,
            done: 0,
            early: Complex64::new(0.0, 0.0),
            prompt: Complex64::new(0.0, 0.0),
            late: Complex64::new(0.0, 0.0),
        });
        true
    }

    /// Accumulates as much of the open period as `samples` holds.
    fn integrate(&mut self, samples: &[Complex64]) -> bool {
        let fs = self.sample_rate;
        let half = self.config.correlator_spacing / 2.0;
        let chips = &self.table;
        let cur = self.current.as_mut().expect("open period");
        let take = (cur.len - cur.done).min(samples.len());
        let chips_per_sample = cur.code_step * CHIP_RATE;
        let base = (cur.code_time / CODE_PERIOD).round() * CODE_PERIOD;
        let chip0 = (cur.code_time - base) * CHIP_RATE + CODE_LENGTH as f64;
        let omega = TAU * cur.freq / fs;
        let rot = Complex64::from_polar(1.0, -omega);
        let mut ph = Complex64::from_polar(1.0, -(cur.phase + omega * cur.done as f64));
        let (mut e, mut p, mut l) = (cur.early, cur.prompt, cur.late);
        for (j, x) in samples[..take].iter().enumerate() {
            let i = cur.done + j;
            let pos = chip0 + i as f64 * chips_per_sample;
            let w = x * ph;
            p += w * chips[pos as usize];
            e += w * chips[(pos + half) as usize];
            l += w * chips[(pos - half) as usize];
            ph *= rot;
            if j % 2048 == 2047 {
                ph = Complex64::from_polar(1.0, -(cur.phase + omega * (i + 1) as f64));
            }
        }
        cur.early = e;
        cur.prompt = p;
        cur.late = l;
        cur.done += take;
        self.sample += take as u64;
        cur.done == cur.len
    }

    fn close_period(&mut self) -> Result<()> {
        let cur = self.current.take().expect("open period");
        let t = CODE_PERIOD;
        let fs = self.sample_rate;
        let n = cur.len as f64;
        let prompt = cur.prompt;

        // NCO state at the first sample after the period
        self.code_time = cur.code_time + n * cur.code_step;
        self.phase = (cur.phase + TAU * cur.freq * n / fs).rem_euclid(TAU);

        let k = self.history.len();
        let pulling_in = k < self.config.pull_in_ms;

        // carrier: Costas discriminator, second-order loop, frequency assist
        let pll_err = if prompt.re != 0.0 { (prompt.im / prompt.re).atan() } else { 0.0 };
        let zeta = self.config.pll_damping;
        let wn = self.config.pll_bandwidth * 8.0 * zeta / (4.0 * zeta * zeta + 1.0);
        self.freq_int += wn * wn * t * pll_err / TAU;
        if pulling_in {
            if let Some(prev) = self.last_prompt {
                let c = prev.conj() * prompt;
                if c.re != 0.0 {
                    let df = (c.im / c.re).atan() / (TAU * t);
                    self.freq_int += self.config.fll_gain * df;
                }
            }
        }
        self.freq = self.freq_int + 2.0 * zeta * wn * pll_err / TAU;

        // code: normalized early-minus-late envelope, carrier aided
        let (ea, la) = (cur.early.norm(), cur.late.norm());
        let half = self.config.correlator_spacing / 2.0;
        let dll_err = if ea + la > 0.0 { (1.0 - half) * (ea - la) / (ea + la) } else { 0.0 };
        let bw = if pulling_in { self.config.dll_pull_in_bandwidth } else { self.config.dll_bandwidth };
        self.code_time += 4.0 * bw * t * dll_err / CHIP_RATE;

        // lock detector
        self.last_prompt = Some(prompt);
        let locked_now = self.update_lock();
        self.history.push(ChannelState {
            prn: self.prn,
            sample_counter: cur.start_sample,
            code_time: cur.code_time,
            code_delay: (cur.start_sample as f64 / fs - cur.code_time).rem_euclid(CODE_PERIOD),
            doppler: cur.freq,
            carrier_phase: cur.phase,
            code_step: cur.code_step,
            samples: cur.len as u32,
            prompt,
            locked: locked_now,
        });
        if self.lock == Lock::Lost {
            return Err(Error::LossOfLock {
                prn: self.prn,
                after_ms: self.history.len(),
            });
        }
        self.update_bits();
        Ok(())
    }

    fn update_lock(&mut self) -> bool {
        let w = self.config.lock_window;
        let k = self.history.len() + 1;
        if k < w {
            return false;
        }
        let window = self.history[k - w..]
            .iter()
            .map(|s| s.prompt)
            .chain(self.last_prompt);
        let cn0 = estimate_cn0(window, CODE_PERIOD);
        let good = cn0 >= self.config.lock_cn0_dbhz;
        match (self.lock, good) {
            (_, true) => {
                self.lock = Lock::Locked;
                self.unlocked_run = 0;
            }
            (Lock::Locked, false) => {
                self.unlocked_run += 1;
                if self.unlocked_run > self.config.hysteresis_ms {
                    self.lock = Lock::Lost;
                }
            }
            (Lock::PullIn, false) => {
                self.unlocked_run += 1;
                if k > self.config.pull_in_ms && self.unlocked_run > self.config.hysteresis_ms + w {
                    self.lock = Lock::Lost;
                }
            }
            (Lock::Lost, false) => {}
        }
        self.lock == Lock::Locked
    }

    fn update_bits(&mut self) {
        let k = self.history.len();
        if k >= 2 {
            let (a, b) = (self.history[k - 2], self.history[k - 1]);
            if a.locked && b.locked && (a.prompt.re > 0.0) != (b.prompt.re > 0.0) {
                let m = b.period().rem_euclid(PERIODS_PER_BIT as i64) as usize;
                self.transitions[m] += 1;
            }
        }
        if self.bit_phase.is_none() {
            let total: u32 = self.transitions.iter().sum();
            let (best, &count) = self
                .transitions
                .iter()
                .enumerate()
                .max_by_key(|(_, c)| **c)
                .expect("20 bins");
            if count >= self.config.bit_sync_transitions && count * 10 >= total * 8 {
                self.bit_phase = Some(best);
            } else {
                return;
            }
        }
        let phase = self.bit_phase.expect("set above") as i64;
        // fold complete bits
        while self.bit_cursor < k {
            let s = self.history[self.bit_cursor];
            if (s.period() - phase).rem_euclid(PERIODS_PER_BIT as i64) != 0 {
                self.bit_cursor += 1;
                continue;
            }
            if self.bit_cursor + PERIODS_PER_BIT > k {
                break;
            }
            let span = &self.history[self.bit_cursor..self.bit_cursor + PERIODS_PER_BIT];
            let contiguous = span[PERIODS_PER_BIT - 1].period() - s.period()
                == PERIODS_PER_BIT as i64 - 1;
            if contiguous {
                if let Some(last) = self.bits.last() {
                    if (s.code_time - last.code_time - BIT_PERIOD).abs() > 1e-4 {
                        // gap in the bit sequence: restart it
                        self.bits.clear();
                        self.next_frame_try = FRAME_BITS + 8 + TOW_FIELD;
                    }
                }
                self.bits.push(BitRecord {
                    sample_index: s.sample_counter,
                    code_time: (s.code_time / CODE_PERIOD).round() * CODE_PERIOD,
                    soft: span.iter().map(|x| x.prompt.re).sum(),
                });
            }
            self.bit_cursor += PERIODS_PER_BIT;
        }
        if self.frame.is_none() && self.bits.len() >= self.next_frame_try {
            self.next_frame_try = self.bits.len() + 10;
            let b0 = self.bits[0];
            let anchor = BitAnchor {
                sample_index: b0.sample_index,
                code_time: b0.code_time,
                sample_rate: self.sample_rate,
                code_rate: 1.0 + self.freq / L1_FREQUENCY,
            };
            let logic: Vec<u8> = self.bits.iter().map(BitRecord::bit).collect();
            if let Ok(f) = find_preamble(&logic, anchor) {
                self.frame = Some(f);
            }
        }
    }
}

/// Result of tracking a buffer from one peak.
#[derive(Debug, Clone)]
pub struct TrackOutput {
    pub states: Vec<ChannelState>,
    pub bits: Vec<BitRecord>,
    pub frame: Option<FrameSync>,
}

impl TrackOutput {
    /// Logic-level bits.
    pub fn nav_bits(&self) -> Vec<u8> {
        self.bits.iter().map(BitRecord::bit).collect()
    }
}

/// Tracks `duration` seconds of `buffer` starting from `start`.
pub fn track(buffer: &IqBuffer, start: &AcqPeak, duration: f64) -> Result<TrackOutput> {
    track_with(buffer, start, duration, TrackingConfig::default())
}

pub fn track_with(
    buffer: &IqBuffer,
    start: &AcqPeak,
    duration: f64,
    config: TrackingConfig,
) -> Result<TrackOutput> {
    let n = ((duration * buffer.sample_rate).round() as usize).min(buffer.len());
    let mut ch = Channel::new(start, 0, buffer.sample_rate, config)?;
    const CHUNK: usize = 1 << 20;
    let mut first = 0usize;
    while first < n {
        let len = CHUNK.min(n - first);
        let chunk: Vec<Complex64> = buffer.samples[first..first + len]
            .iter()
            .map(|z| Complex64::new(z.re as f64, z.im as f64))
            .collect();
        ch.process(&chunk, first as u64)?;
        first += len;
    }
    Ok(TrackOutput {
        states: ch.history.clone(),
        bits: ch.bits.clone(),
        frame: ch.frame,
    })
}

/// Unwrapped phase difference helper: wraps into `(-pi, pi]`.
pub(crate) fn wrap_pi(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(TAU) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}
