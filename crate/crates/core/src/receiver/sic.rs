//! Streaming cancellation of tracked adversarial signals.
//!
//! Each adversarial signal is re-synthesized period by period from its
//! tracking channel: the channel's code and carrier NCO give the waveform,
//! and the prompt correlations, averaged over neighbouring periods with the
//! data sign aligned, give the complex gain. The sum of replicas is
//! subtracted from the raw stream.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use crate::signal::num_complex::Complex64;
use crate::signal::{CHIP_RATE, CODE_LENGTH, CODE_PERIOD};
use crate::tracking::{Channel, ChannelState};

/// Periods either side averaged into each period's gain.
const HALF_WINDOW: usize = 2;

#[derive(Debug, Clone)]
struct Target {
    next: usize,
    done: u64,
    finished: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Canceller {
    start: u64,
    pending: Vec<Complex64>,
    targets: BTreeMap<u8, Target>,
}

fn gain(h: &[ChannelState], m: usize) -> Complex64 {
    let y = |j: usize| h[j].prompt / h[j].samples.max(1) as f64;
    let r = y(m);
    let lo = m.saturating_sub(HALF_WINDOW);
    let hi = (m + HALF_WINDOW).min(h.len() - 1);
    let mut g = Complex64::new(0.0, 0.0);
    for j in lo..=hi {
        let v = y(j);
        g += if (v * r.conj()).re >= 0.0 { v } else { -v };
    }
    g / (hi - lo + 1) as f64
}

fn subtract_period(
    out: &mut [Complex64],
    st: &ChannelState,
    skip: usize,
    g: Complex64,
    chips: &[f64],
    fs: f64,
) {
    let base = (st.code_time / CODE_PERIOD).round() * CODE_PERIOD;
    let chip0 = (st.code_time - base) * CHIP_RATE + CODE_LENGTH as f64;
    let cps = st.code_step * CHIP_RATE;
    let omega = TAU * st.doppler / fs;
    let rot = Complex64::from_polar(1.0, omega);
    let mut ph = g * Complex64::from_polar(1.0, st.carrier_phase + omega * skip as f64);
    for (j, o) in out.iter_mut().enumerate() {
        let i = skip + j;
        let pos = chip0 + i as f64 * cps;
        *o -= ph * chips[pos as usize];
        ph *= rot;
        if j % 2048 == 2047 {
            ph = g * Complex64::from_polar(1.0, st.carrier_phase + omega * (i + 1) as f64);
        }
    }
}

impl Canceller {
    pub fn new(start: u64) -> Self {
        Canceller {
            start,
            pending: Vec::new(),
            targets: BTreeMap::new(),
        }
    }

    /// Starts cancelling the signal tracked by `channel` from the current
    /// position on.
    pub fn add_target(&mut self, channel: &Channel) {
        let h = channel.history();
        let next = h.partition_point(|s| s.sample_counter + s.samples as u64 <= self.start);
        self.targets.insert(
            channel.prn(),
            Target {
                next,
                done: self.start,
                finished: false,
            },
        );
    }

    /// Appends raw samples starting at stream index `first`.
    pub fn push(&mut self, first: u64, raw: &[Complex64]) {
        debug_assert_eq!(first, self.start + self.pending.len() as u64);
        self.pending.extend_from_slice(raw);
    }

    /// Subtracts every period of `channel` that is ready.
    pub fn subtract(&mut self, channel: &Channel) {
        let Some(t) = self.targets.get_mut(&channel.prn()) else {
            return;
        };
        if t.finished {
            return;
        }
        let h = channel.history();
        let lost = channel.is_lost();
        let fs = channel.sample_rate();
        let chips = channel.unrolled_code();
        let end = self.start + self.pending.len() as u64;
        while t.next < h.len() && (lost || t.next + HALF_WINDOW < h.len()) {
            let st = &h[t.next];
            let s = st.sample_counter;
            let e = s + st.samples as u64;
            if e > end {
                break;
            }
            let from = s.max(self.start);
            if e > from {
                let g = gain(h, t.next);
                let lo = (from - self.start) as usize;
                let hi = (e - self.start) as usize;
                subtract_period(&mut self.pending[lo..hi], st, (from - s) as usize, g, chips, fs);
            }
            t.done = t.done.max(e);
            t.next += 1;
        }
        if lost && t.next >= h.len() {
            t.finished = true;
        }
    }

    /// Removes and returns the cleaned prefix: `(first sample, samples)`.
    pub fn drain(&mut self) -> (u64, Vec<Complex64>) {
        let end = self.start + self.pending.len() as u64;
        let ready = self
            .targets
            .values()
            .map(|t| if t.finished { end } else { t.done })
            .min()
            .unwrap_or(end)
            .clamp(self.start, end);
        let n = (ready - self.start) as usize;
        let rest = self.pending.split_off(n);
        let out = std::mem::replace(&mut self.pending, rest);
        let first = self.start;
        self.start = ready;
        (first, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::AcqPeak;
    use crate::signal::{add_signal, generate_ca_code, NavModulation, SatelliteSignalParams};
    use crate::tracking::TrackingConfig;

    #[test]
    fn tracked_signal_is_removed_and_weaker_one_kept() {
        let fs = 5e6;
        let n = (0.6 * fs) as usize;
        let strong = SatelliteSignalParams::new(3, 2.0, 0.3e-3, 1200.0, 0.4).with_nav(NavModulation {
            symbols: vec![1, -1, 1, 1, -1, -1, 1, -1, 1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, -1, 1, -1, 1, 1, -1, -1, 1, -1, 1, 1, 1],
            first_edge: -0.007,
        });
        let weak = SatelliteSignalParams::new(3, 1.0, 0.3e-3 + 2.5e-6, 1200.0, 2.0);
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        add_signal(&strong, &generate_ca_code(3).unwrap(), fs, 0, &mut x);
        let mut weak_only = vec![Complex64::new(0.0, 0.0); n];
        add_signal(&weak, &generate_ca_code(3).unwrap(), fs, 0, &mut weak_only);
        x.iter_mut().zip(&weak_only).for_each(|(a, b)| *a += b);
        let peak = AcqPeak {
            prn: 3,
            code_delay: strong.code_delay,
            doppler: 1205.0,
            peak_metric: 1.0,
            estimated_amplitude: 2.0,
            ratio: 10.0,
        };
        let mut ch = Channel::new(&peak, 0, fs, TrackingConfig::default()).unwrap();
        let mut sic = Canceller::new(0);
        sic.add_target(&ch);
        let mut cleaned = Vec::new();
        for (i, chunk) in x.chunks(50_000).enumerate() {
            let first = (i * 50_000) as u64;
            ch.process(chunk, first).unwrap();
            sic.push(first, chunk);
            sic.subtract(&ch);
            let (f, out) = sic.drain();
            assert_eq!(f, cleaned.len() as u64);
            cleaned.extend(out);
        }
        // output lags by at most the open period plus the gain window
        assert!(cleaned.len() + 4 * 5000 > n, "{}", cleaned.len());
        // after pull-in the residual is small next to the weak signal
        let from = (0.3 * fs) as usize;
        let to = cleaned.len();
        let err: f64 = (from..to).map(|i| (cleaned[i] - weak_only[i]).norm_sqr()).sum();
        let weak_power: f64 = (from..to).map(|i| weak_only[i].norm_sqr()).sum();
        let ratio_db = 10.0 * (weak_power / err).log10();
        assert!(ratio_db > 10.0, "{ratio_db}");
    }
}
