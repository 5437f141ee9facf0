//! Cross-ambiguity search, peak extraction and auxiliary-peak detection.

use std::f64::consts::TAU;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lsr::estimate_amplitude;
use crate::signal::num_complex::Complex64;
use crate::signal::{sampled_code, IqBuffer, PrnCode, CHIP_RATE, CODE_PERIOD};

/// Default detection ratio: peak metric over the mean grid value away from
/// the strongest peak. Calibrated so that a pure-noise 41 x 10000 grid
/// stays below it in at least 999 of 1000 draws.
pub const DEFAULT_THRESHOLD: f64 = 7.5;
/// Auxiliary peaks closer than this are treated as multipath.
pub const DEFAULT_MIN_SEPARATION: f64 = 500e-9;
pub const DEFAULT_PERIODS: usize = 4;
/// Periods averaged by [`AcquisitionConfig::sensitive`].
pub const SENSITIVE_PERIODS: usize = 16;
/// Ratio for [`SENSITIVE_PERIODS`]; a pure-noise 41 x 10000 grid exceeds it
/// with probability below 1e-7.
pub const SENSITIVE_THRESHOLD: f64 = 4.0;
/// Secondary peaks must also clear this fraction of the strongest one, above
/// the combined Gold-code sidelobes of two co-Doppler signals.
const SIDELOBE_GUARD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    pub doppler_min: f64,
    pub doppler_max: f64,
    pub doppler_step: f64,
    /// Code periods accumulated non-coherently.
    pub periods: usize,
    pub threshold: f64,
    pub max_peaks: usize,
    /// Minimum top-two separation that counts as spoofing, seconds.
    pub min_separation: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            doppler_min: -5000.0,
            doppler_max: 5000.0,
            doppler_step: 250.0,
            periods: DEFAULT_PERIODS,
            threshold: DEFAULT_THRESHOLD,
            max_peaks: 3,
            min_separation: DEFAULT_MIN_SEPARATION,
        }
    }
}

impl AcquisitionConfig {
    /// Longer averaging and a lower ratio: finds weak peaks under strong
    /// interference at the same false-alarm rate.
    pub fn sensitive() -> Self {
        AcquisitionConfig {
            periods: SENSITIVE_PERIODS,
            threshold: SENSITIVE_THRESHOLD,
            ..AcquisitionConfig::default()
        }
    }

    pub fn doppler_bins(&self) -> Vec<f64> {
        doppler_bins(self.doppler_min, self.doppler_max, self.doppler_step)
    }
}

/// Inclusive Doppler grid `min, min + step, ..., max`.
pub fn doppler_bins(min: f64, max: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || max < min {
        return vec![min];
    }
    let n = ((max - min) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| min + i as f64 * step).collect()
}

/// Squared correlation magnitudes over Doppler bins x code delay samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CafGrid {
    pub prn: u8,
    /// Row-major, one row of `k` delays per Doppler bin.
    pub values: Vec<f64>,
    pub doppler_bins: Vec<f64>,
    pub k: usize,
    pub sample_rate: f64,
    /// Periods averaged into each value.
    pub periods: usize,
}

impl CafGrid {
    #[inline]
    pub fn value(&self, doppler_idx: usize, delay_idx: usize) -> f64 {
        self.values[doppler_idx * self.k + delay_idx]
    }

    pub fn row(&self, doppler_idx: usize) -> &[f64] {
        &self.values[doppler_idx * self.k..(doppler_idx + 1) * self.k]
    }

    /// `(doppler_idx, delay_idx, value)` of the largest cell.
    pub fn max_cell(&self) -> (usize, usize, f64) {
        let (i, v) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        (i / self.k, i % self.k, v)
    }

    /// Samples in one chip, rounded up.
    pub fn chip_samples(&self) -> usize {
        (self.sample_rate / CHIP_RATE).ceil() as usize
    }

    /// Circular distance between two delay indices.
    pub fn delay_distance(&self, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b);
        d.min(self.k - d)
    }

    /// Mean of all cells more than one chip away (in delay) from `delay_idx`.
    pub fn noise_floor(&self, delay_idx: usize) -> f64 {
        let excl = self.chip_samples();
        let mut sum = 0.0;
        let mut n = 0usize;
        for t in 0..self.k {
            if self.delay_distance(t, delay_idx) <= excl {
                continue;
            }
            for d in 0..self.doppler_bins.len() {
                sum += self.value(d, t);
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// One acquisition peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcqPeak {
    pub prn: u8,
    /// Code phase at the buffer's first sample, seconds in `[0, 1 ms)`.
    pub code_delay: f64,
    pub doppler: f64,
    /// Peak value of the squared correlation magnitude.
    pub peak_metric: f64,
    pub estimated_amplitude: f64,
    /// `peak_metric` over the grid noise floor.
    pub ratio: f64,
}

/// Verdict on one PRN's peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpoofVerdict {
    pub spoofing: bool,
    /// Peaks ordered by decreasing metric.
    pub peaks: Vec<AcqPeak>,
    /// Separation of the top two peaks, seconds (0 with fewer than two).
    pub separation: f64,
}

/// Circular separation of two code delays, seconds.
pub fn delay_separation(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(CODE_PERIOD);
    d.min(CODE_PERIOD - d)
}

/// CAF with the default number of accumulated periods.
pub fn compute_caf(buffer: &IqBuffer, code: &PrnCode, doppler_bins: &[f64]) -> Result<CafGrid> {
    compute_caf_with(buffer, code, doppler_bins, DEFAULT_PERIODS, Execution::default())
}

/// CAF averaging `|R|^2` over up to `periods` consecutive code periods
/// (fewer if the buffer is shorter).
pub fn compute_caf_with(
    buffer: &IqBuffer,
    code: &PrnCode,
    doppler_bins: &[f64],
    periods: usize,
    exec: Execution,
) -> Result<CafGrid> {
    let k = buffer.samples_per_code();
    if k == 0 || buffer.len() < k {
        return Err(Error::invalid(format!(
            "buffer of {} samples shorter than one code period ({k})",
            buffer.len()
        )));
    }
    if doppler_bins.is_empty() {
        return Err(Error::invalid("empty Doppler grid"));
    }
    let periods = periods.clamp(1, buffer.len() / k);
    let fs = buffer.sample_rate;

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(k);
    let inv = planner.plan_fft_inverse(k);

    let mut replica: Vec<Complex64> = sampled_code(code, fs, k)
        .into_iter()
        .map(|c| Complex64::new(c, 0.0))
        .collect();
    fwd.process(&mut replica);
    let replica_conj: Vec<Complex64> = replica.iter().map(|z| z.conj()).collect();

    let samples = &buffer.samples[..periods * k];
    let rows = exec.map(doppler_bins.to_vec(), |f| {
        caf_row(samples, k, periods, f, fs, &replica_conj, &fwd, &inv)
    });

    let mut values = Vec::with_capacity(doppler_bins.len() * k);
    for r in rows {
        values.extend(r);
    }
    Ok(CafGrid {
        prn: code.prn(),
        values,
        doppler_bins: doppler_bins.to_vec(),
        k,
        sample_rate: fs,
        periods,
    })
}

#[allow(clippy::too_many_arguments)]
fn caf_row(
    samples: &[crate::signal::num_complex::Complex32],
    k: usize,
    periods: usize,
    doppler: f64,
    fs: f64,
    replica_conj: &[Complex64],
    fwd: &Arc<dyn Fft<f64>>,
    inv: &Arc<dyn Fft<f64>>,
) -> Vec<f64> {
    let mut acc = vec![0.0; k];
    let mut buf = vec![Complex64::new(0.0, 0.0); k];
    let mut scratch =
        vec![Complex64::new(0.0, 0.0); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
    let omega = TAU * doppler / fs;
    let rot = Complex64::from_polar(1.0, -omega);
    let norm = 1.0 / (k as f64 * k as f64);
    for p in 0..periods {
        let seg = &samples[p * k..(p + 1) * k];
        let mut ph = Complex64::from_polar(1.0, -omega * (p * k) as f64);
        for (i, (o, x)) in buf.iter_mut().zip(seg).enumerate() {
            if i % 1024 == 0 {
                ph = Complex64::from_polar(1.0, -omega * (p * k + i) as f64);
            }
            *o = Complex64::new(x.re as f64, x.im as f64) * ph;
            ph *= rot;
        }
        fwd.process_with_scratch(&mut buf, &mut scratch);
        for (b, c) in buf.iter_mut().zip(replica_conj) {
            *b *= c;
        }
        inv.process_with_scratch(&mut buf, &mut scratch);
        // the unnormalized inverse carries a factor k
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr() * norm;
        }
    }
    let inv_p = 1.0 / periods as f64;
    acc.iter_mut().for_each(|a| *a *= inv_p);
    acc
}

/// Peaks above [`DEFAULT_THRESHOLD`].
pub fn find_peaks(grid: &CafGrid, max_peaks: usize) -> Vec<AcqPeak> {
    find_peaks_with(grid, max_peaks, DEFAULT_THRESHOLD)
}

/// Up to `max_peaks` local maxima whose ratio to the noise floor exceeds
/// `threshold`, each more than one chip from every stronger peak.
pub fn find_peaks_with(grid: &CafGrid, max_peaks: usize, threshold: f64) -> Vec<AcqPeak> {
    let k = grid.k;
    if k == 0 || grid.doppler_bins.is_empty() || max_peaks == 0 {
        return Vec::new();
    }
    // strongest Doppler per delay
    let mut col = vec![(0.0f64, 0usize); k];
    for d in 0..grid.doppler_bins.len() {
        for (t, c) in grid.row(d).iter().zip(col.iter_mut()) {
            if *t > c.0 {
                *c = (*t, d);
            }
        }
    }
    let (_, top, top_value) = grid.max_cell();
    let floor = grid.noise_floor(top);
    let guard = SIDELOBE_GUARD * top_value;
    let excl = grid.chip_samples();
    let mut excluded = vec![false; k];
    let mut out = Vec::new();
    while out.len() < max_peaks {
        let Some((t, &(v, d))) = col
            .iter()
            .enumerate()
            .filter(|(t, _)| !excluded[*t])
            .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        else {
            break;
        };
        if !(v > 0.0) || v <= guard || (floor > 0.0 && v / floor <= threshold) {
            break;
        }
        let left = col[(t + k - 1) % k].0;
        let right = col[(t + 1) % k].0;
        mark(&mut excluded, t, excl, k);
        if v < left || v < right {
            // slope of an excluded peak
            continue;
        }
        out.push(make_peak(grid, d, t, v, floor));
    }
    out
}

fn mark(excluded: &mut [bool], t: usize, excl: usize, k: usize) {
    for o in 0..=excl.min(k / 2) {
        excluded[(t + o) % k] = true;
        excluded[(t + k - o) % k] = true;
    }
}

fn make_peak(grid: &CafGrid, d: usize, t: usize, v: f64, floor: f64) -> AcqPeak {
    let k = grid.k;
    let row = grid.row(d);
    let m0 = row[t].sqrt();
    let ml = row[(t + k - 1) % k].sqrt();
    let mr = row[(t + 1) % k].sqrt();
    let denom = ml - 2.0 * m0 + mr;
    let frac = if denom < 0.0 {
        (0.5 * (ml - mr) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    let delay = ((t as f64 + frac) / grid.sample_rate).rem_euclid(k as f64 / grid.sample_rate);
    AcqPeak {
        prn: grid.prn,
        code_delay: delay.rem_euclid(CODE_PERIOD),
        doppler: grid.doppler_bins[d],
        peak_metric: v,
        estimated_amplitude: estimate_amplitude(v, k).unwrap_or(0.0),
        ratio: if floor > 0.0 { v / floor } else { f64::INFINITY },
    }
}

/// Verdict at the default 500 ns separation.
pub fn detect_spoofing(peaks: &[AcqPeak]) -> SpoofVerdict {
    detect_spoofing_with(peaks, DEFAULT_MIN_SEPARATION)
}

pub fn detect_spoofing_with(peaks: &[AcqPeak], min_separation: f64) -> SpoofVerdict {
    let mut peaks = peaks.to_vec();
    peaks.sort_by(|a, b| b.peak_metric.total_cmp(&a.peak_metric));
    let separation = if peaks.len() >= 2 {
        delay_separation(peaks[0].code_delay, peaks[1].code_delay)
    } else {
        0.0
    };
    SpoofVerdict {
        spoofing: peaks.len() >= 2 && separation > min_separation,
        peaks,
        separation,
    }
}

/// Acquisition front end bundling a config and execution mode.
#[derive(Debug, Clone, Default)]
pub struct Acquirer {
    pub config: AcquisitionConfig,
    pub execution: Execution,
}

impl Acquirer {
    pub fn new(config: AcquisitionConfig, execution: Execution) -> Self {
        Acquirer { config, execution }
    }

    pub fn grid(&self, buffer: &IqBuffer, code: &PrnCode) -> Result<CafGrid> {
        compute_caf_with(
            buffer,
            code,
            &self.config.doppler_bins(),
            self.config.periods,
            self.execution,
        )
    }

    /// Searches one PRN and returns its verdict.
    pub fn acquire(&self, buffer: &IqBuffer, code: &PrnCode) -> Result<SpoofVerdict> {
        let grid = self.grid(buffer, code)?;
        let peaks = find_peaks_with(&grid, self.config.max_peaks, self.config.threshold);
        Ok(detect_spoofing_with(&peaks, self.config.min_separation))
    }

    /// Searches several PRNs, fanning out across them.
    pub fn acquire_all(&self, buffer: &IqBuffer, codes: &[PrnCode]) -> Result<Vec<SpoofVerdict>> {
        let inner = Acquirer {
            config: self.config.clone(),
            execution: Execution::Sequential,
        };
        self.execution
            .map(codes.to_vec(), |c| inner.acquire(buffer, &c))
            .into_iter()
            .collect()
    }
}
