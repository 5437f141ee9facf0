//! Legitimate signal retrieval by successive interference cancellation.
//!
//! The adversarial peak is refined, its phase and data bits are read with an
//! open-loop tracker, a replica is synthesized and subtracted, and the PRN is
//! searched again. This repeats until the adversarial peak no longer
//! dominates.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::acquisition::{
    compute_caf_with, delay_separation, detect_spoofing_with, find_peaks_with, AcqPeak,
    AcquisitionConfig, SpoofVerdict,
};
use crate::dsp::correlate;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::signal::num_complex::Complex64;
use crate::signal::{
    add_scaled_signal, generate_ca_code, IqBuffer, NavModulation, PrnCode,
    SatelliteSignalParams, CHIP_RATE, CODE_PERIOD, L1_FREQUENCY, PERIODS_PER_BIT,
};

/// Amplitude from a peak metric `|R|^2` over `k` samples.
pub fn estimate_amplitude(peak_metric: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("K must be positive"));
    }
    Ok(peak_metric.max(0.0).sqrt() / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LsrConfig {
    pub max_iterations: usize,
    /// Uniform phase offsets tried before the golden-section pass.
    pub phase_steps: usize,
    /// Doppler step of the refined search, Hz.
    pub refine_step: f64,
    /// Half-width of the refined Doppler search, Hz.
    pub refine_span: f64,
    /// Periods averaged by the refined search.
    pub refine_periods: usize,
    /// Radius within which a peak counts as the same emitter, chips.
    pub same_peak_chips: f64,
    /// Search used between iterations.
    pub acquisition: AcquisitionConfig,
    /// Peaks this far below the first adversarial peak are treated as
    /// cancellation residue, dB.
    pub residue_floor_db: f64,
}

impl Default for LsrConfig {
    fn default() -> Self {
        LsrConfig {
            max_iterations: 5,
            phase_steps: 16,
            refine_step: 25.0,
            refine_span: 250.0,
            refine_periods: 4,
            same_peak_chips: 0.5,
            acquisition: AcquisitionConfig::sensitive(),
            residue_floor_db: 60.0,
        }
    }
}

/// Attacker replica parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryEstimate {
    pub params: SatelliteSignalParams,
    /// Logic-level bits, one per 20 ms group overlapping the buffer.
    pub nav_bits: Vec<u8>,
    /// Metric at the adversarial cell left after subtraction.
    pub residual_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Metric drop at the adversarial cell, dB.
    pub attenuation_db: f64,
    pub accepted: bool,
    /// Peaks found after the iteration.
    pub peaks: Vec<AcqPeak>,
    /// Wall-clock time of the iteration, seconds.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub prn: u8,
    pub iterations: usize,
    pub steps: Vec<IterationRecord>,
    pub final_verdict: SpoofVerdict,
    /// The legitimate peak, when recovery succeeded.
    pub recovered_peak: Option<AcqPeak>,
    /// Estimated adversarial-over-legitimate power, dB, from the first pass.
    pub estimated_advantage_db: Option<f64>,
}

impl RecoveryReport {
    /// Total attenuation over accepted iterations, dB.
    pub fn total_attenuation_db(&self) -> f64 {
        self.steps.iter().filter(|s| s.accepted).map(|s| s.attenuation_db).sum()
    }
}

/// Output of [`extract_phase_and_bits`].
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseAndBits {
    /// Carrier phase at the buffer's first sample, radians in `[0, 2 pi)`.
    pub carrier_phase: f64,
    /// Carrier frequency refined from the phase slope, Hz.
    pub doppler: f64,
    /// Logic-level bits.
    pub nav_bits: Vec<u8>,
    /// Modulation matching `nav_bits`, in the replica's code time.
    pub modulation: NavModulation,
    /// Coherent amplitude estimate.
    pub amplitude: f64,
}

fn to_f64(buffer: &IqBuffer) -> Vec<Complex64> {
    buffer.to_f64()
}

/// Windows `[start, end)` of whole code periods for a signal with the given
/// delay (at sample 0) and Doppler. Window `j` holds code period `j`.
fn period_windows(len: usize, fs: f64, delay: f64, doppler: f64) -> Vec<(usize, usize)> {
    let rate = 1.0 + doppler / L1_FREQUENCY;
    let edge = |j: usize| ((j as f64 * CODE_PERIOD + delay) * fs / rate).ceil() as usize;
    let mut out = Vec::new();
    let mut j = 0;
    loop {
        let (a, b) = (edge(j), edge(j + 1));
        if b > len {
            break;
        }
        out.push((a, b));
        j += 1;
    }
    out
}

fn metric(
    x: &[Complex64],
    code: &PrnCode,
    fs: f64,
    k: usize,
    periods: usize,
    delay: f64,
    doppler: f64,
) -> f64 {
    let p = periods.min(x.len() / k).max(1);
    (0..p)
        .map(|m| correlate(x, 0, m * k, k, code, fs, delay, doppler).norm_sqr())
        .sum::<f64>()
        / p as f64
}

/// Peak delay from samples around a triangular correlation peak: lines
/// through the two samples on each side, intersected.
fn kink_offset(v: &[f64; 5]) -> f64 {
    let (l2, l1, c, r1, r2) = (v[0], v[1], v[2], v[3], v[4]);
    let sl = l1 - l2;
    let sr = r2 - r1;
    // left line: l1 + sl (x + 1); right line: r1 + sr (x - 1)
    if sl > 0.0 && sr < 0.0 {
        let x = (r1 - l1 - sr - sl) / (sl - sr);
        if x.abs() <= 1.0 {
            return x;
        }
    }
    let denom = l1 - 2.0 * c + r1;
    if denom < 0.0 {
        (0.5 * (l1 - r1) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Fine search around a coarse peak: Doppler over one coarse bin either
/// side, delay over neighbouring samples, with interpolation in both.
pub fn refine_acquisition(buffer: &IqBuffer, coarse: &AcqPeak) -> AcqPeak {
    refine_with(buffer, coarse, &LsrConfig::default())
}

pub fn refine_with(buffer: &IqBuffer, coarse: &AcqPeak, config: &LsrConfig) -> AcqPeak {
    let x = to_f64(buffer);
    refine_samples(&x, buffer.sample_rate, coarse, config)
}

fn refine_samples(x: &[Complex64], fs: f64, coarse: &AcqPeak, config: &LsrConfig) -> AcqPeak {
    let Ok(code) = generate_ca_code(coarse.prn) else {
        return coarse.clone();
    };
    let k = crate::signal::samples_per_code(fs);
    if x.len() < k {
        return coarse.clone();
    }
    let periods = config.refine_periods;
    let ts = 1.0 / fs;
    let step = config.refine_step.min(25.0).max(1.0);
    let n = (config.refine_span / step).round() as i64;
    let d0 = (coarse.code_delay * fs).round();
    let at = |d: f64, f: f64| metric(x, &code, fs, k, periods, d * ts, f);

    // Doppler scan at the nearest delay samples
    let mut best = (f64::MIN, coarse.doppler, d0);
    for i in -n..=n {
        let f = coarse.doppler + i as f64 * step;
        for dd in -1..=1 {
            let v = at(d0 + dd as f64, f);
            if v > best.0 {
                best = (v, f, d0 + dd as f64);
            }
        }
    }
    let (_, mut f, d) = best;
    // parabolic Doppler interpolation on magnitudes
    let (fl, fc, fr) = (at(d, f - step).sqrt(), at(d, f).sqrt(), at(d, f + step).sqrt());
    let den = fl - 2.0 * fc + fr;
    if den < 0.0 {
        f += step * (0.5 * (fl - fr) / den).clamp(-0.5, 0.5);
    }
    let around: [f64; 5] = std::array::from_fn(|i| at(d + i as f64 - 2.0, f).sqrt());
    let delay = ((d + kink_offset(&around)) * ts).rem_euclid(CODE_PERIOD);
    let value = metric(x, &code, fs, k, periods, delay, f);
    let coarse_value = metric(x, &code, fs, k, periods, coarse.code_delay, coarse.doppler);
    if value < coarse_value {
        return AcqPeak {
            peak_metric: coarse_value,
            estimated_amplitude: estimate_amplitude(coarse_value, k).unwrap_or(0.0),
            ..coarse.clone()
        };
    }
    AcqPeak {
        prn: coarse.prn,
        code_delay: delay,
        doppler: f,
        peak_metric: value,
        estimated_amplitude: estimate_amplitude(value, k).unwrap_or(0.0),
        ratio: coarse.ratio * value / coarse.peak_metric.max(f64::MIN_POSITIVE),
    }
}

/// Reads the carrier phase and data bits of the signal at `peak` over the
/// first `duration` seconds of `buffer`.
///
/// Prompt correlations over whole code periods are squared to strip the
/// data, their unwrapped phase is fitted with a line (phase and frequency),
/// and bits are the signs of 20 ms sums after bit synchronization by
/// transition histogram. The sign ambiguity is resolved by taking the
/// first bit as positive.
pub fn extract_phase_and_bits(
    buffer: &IqBuffer,
    peak: &AcqPeak,
    duration: f64,
) -> Result<PhaseAndBits> {
    let x = to_f64(buffer);
    extract_samples(&x, buffer.sample_rate, peak, duration)
}

fn extract_samples(
    x: &[Complex64],
    fs: f64,
    peak: &AcqPeak,
    duration: f64,
) -> Result<PhaseAndBits> {
    let code = generate_ca_code(peak.prn)?;
    let len = ((duration * fs).round() as usize).min(x.len());
    let windows = period_windows(len, fs, peak.code_delay, peak.doppler);
    if windows.len() < 2 {
        return Err(Error::TrackingFailure {
            prn: peak.prn,
            reason: "fewer than two code periods".into(),
        });
    }
    let prompts: Vec<Complex64> = windows
        .iter()
        .map(|&(a, b)| correlate(x, 0, a, b - a, &code, fs, peak.code_delay, peak.doppler))
        .collect();
    let mids: Vec<f64> = windows.iter().map(|&(a, b)| (a + b) as f64 / 2.0 / fs).collect();

    // phase of the squared prompts, unwrapped, fitted by least squares
    let mut psi = Vec::with_capacity(prompts.len());
    let mut prev = 0.0;
    for (i, p) in prompts.iter().enumerate() {
        let a = (p * p).arg();
        let v = if i == 0 { a } else { prev + crate::tracking::wrap_pi(a - prev) };
        psi.push(v);
        prev = v;
    }
    let n = psi.len() as f64;
    let tm = mids.iter().sum::<f64>() / n;
    let pm = psi.iter().sum::<f64>() / n;
    let sxx: f64 = mids.iter().map(|t| (t - tm).powi(2)).sum();
    let sxy: f64 = mids.iter().zip(&psi).map(|(t, p)| (t - tm) * (p - pm)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = pm - slope * tm;
    let df = slope / (2.0 * TAU);
    let mut phase0 = intercept / 2.0;
    let phase_at = |t: f64, p0: f64| p0 + TAU * df * t;

    // per-period in-phase values and bit synchronization
    let inphase: Vec<f64> = prompts
        .iter()
        .zip(&mids)
        .map(|(p, &t)| (p * Complex64::from_polar(1.0, -phase_at(t, phase0))).re)
        .collect();
    let mut hist = [0u32; PERIODS_PER_BIT];
    for j in 1..inphase.len() {
        if (inphase[j] > 0.0) != (inphase[j - 1] > 0.0) {
            hist[j % PERIODS_PER_BIT] += 1;
        }
    }
    let bit_phase = if hist.iter().all(|&h| h == 0) {
        0
    } else {
        hist.iter().enumerate().max_by_key(|(_, h)| **h).map(|(i, _)| i).unwrap_or(0)
    };
    // group g covers periods [bit_phase - 20 + 20 g, bit_phase + 20 g)
    let first = bit_phase as i64 - PERIODS_PER_BIT as i64;
    let groups = (inphase.len() as i64 - first + PERIODS_PER_BIT as i64 - 1) / PERIODS_PER_BIT as i64;
    let mut soft = vec![0.0; groups as usize];
    for (j, v) in inphase.iter().enumerate() {
        soft[((j as i64 - first) / PERIODS_PER_BIT as i64) as usize] += v;
    }
    // empty leading group (bit phase 0) takes the next group's value
    if soft.len() > 1 && soft[0] == 0.0 {
        soft[0] = soft[1];
    }
    if soft[0] < 0.0 {
        phase0 += PI;
        soft.iter_mut().for_each(|s| *s = -*s);
    }
    let mut symbols: Vec<i8> = soft.iter().map(|&s| if s < 0.0 { -1 } else { 1 }).collect();
    let nav_bits = symbols.iter().map(|&s| u8::from(s < 0)).collect();
    // cover the partial period after the last whole one
    symbols.push(*symbols.last().expect("non-empty"));
    let amplitude = inphase.iter().map(|v| v.abs()).sum::<f64>()
        / windows.iter().map(|&(a, b)| (b - a) as f64).sum::<f64>();
    Ok(PhaseAndBits {
        carrier_phase: phase0.rem_euclid(TAU),
        doppler: peak.doppler + df,
        nav_bits,
        modulation: NavModulation {
            symbols,
            first_edge: first as f64 * CODE_PERIOD,
        },
        amplitude,
    })
}

/// Builds the replica estimate for the signal at `peak`.
pub fn estimate_replica(buffer: &IqBuffer, peak: &AcqPeak) -> Result<RecoveryEstimate> {
    let x = to_f64(buffer);
    estimate_samples(&x, buffer.sample_rate, peak)
}

fn estimate_samples(x: &[Complex64], fs: f64, peak: &AcqPeak) -> Result<RecoveryEstimate> {
    let k = crate::signal::samples_per_code(fs);
    let pb = extract_samples(x, fs, peak, x.len() as f64 / fs)?;
    let amplitude = estimate_amplitude(peak.peak_metric, k)?;
    let params = SatelliteSignalParams::new(
        peak.prn,
        amplitude,
        peak.code_delay,
        pb.doppler,
        pb.carrier_phase,
    )
    .with_nav(pb.modulation);
    Ok(RecoveryEstimate {
        params,
        nav_bits: pb.nav_bits,
        residual_metric: f64::NAN,
    })
}

/// Outcome of [`cancel_with_report`].
#[derive(Debug, Clone)]
pub struct Cancellation {
    pub buffer: IqBuffer,
    /// Phase offset applied to the replica, radians.
    pub phase_offset: f64,
    pub metric_before: f64,
    pub metric_after: f64,
    pub estimate: RecoveryEstimate,
}

impl Cancellation {
    pub fn attenuation_db(&self) -> f64 {
        10.0 * (self.metric_before / self.metric_after.max(f64::MIN_POSITIVE)).log10()
    }
}

/// Subtracts the replica described by `estimate` (`S_R - S'_AT`).
pub fn cancel(buffer: &IqBuffer, estimate: &RecoveryEstimate) -> IqBuffer {
    cancel_with_report(buffer, estimate, LsrConfig::default().phase_steps).buffer
}

/// As [`cancel`], reporting the phase offset and the metric at the
/// adversarial cell before and after. The offset is picked from
/// `phase_steps` uniform candidates and polished by golden-section search.
/// If no offset lowers the metric nothing is subtracted.
pub fn cancel_with_report(
    buffer: &IqBuffer,
    estimate: &RecoveryEstimate,
    phase_steps: usize,
) -> Cancellation {
    let mut x = to_f64(buffer);
    let c = cancel_samples(&mut x, buffer.sample_rate, estimate, phase_steps);
    Cancellation {
        buffer: IqBuffer::from_f64(&x, buffer.sample_rate, buffer.start_time)
            .expect("same rate as input"),
        phase_offset: c.0,
        metric_before: c.1,
        metric_after: c.2,
        estimate: RecoveryEstimate {
            residual_metric: c.2,
            ..estimate.clone()
        },
    }
}

fn cancel_samples(
    x: &mut [Complex64],
    fs: f64,
    estimate: &RecoveryEstimate,
    phase_steps: usize,
) -> (f64, f64, f64) {
    let p = &estimate.params;
    let Ok(code) = generate_ca_code(p.prn) else {
        return (0.0, f64::NAN, f64::NAN);
    };
    let mut replica = vec![Complex64::new(0.0, 0.0); x.len()];
    add_scaled_signal(p, &code, fs, 0, Complex64::new(1.0, 0.0), &mut replica);
    let k = crate::signal::samples_per_code(fs);
    let periods = (x.len() / k).max(1);
    let cx: Vec<Complex64> = (0..periods)
        .map(|m| correlate(x, 0, m * k, k, &code, fs, p.code_delay, p.doppler))
        .collect();
    let cr: Vec<Complex64> = (0..periods)
        .map(|m| correlate(&replica, 0, m * k, k, &code, fs, p.code_delay, p.doppler))
        .collect();
    let residual = |d: f64| {
        let g = Complex64::from_polar(1.0, d);
        cx.iter().zip(&cr).map(|(a, b)| (a - g * b).norm_sqr()).sum::<f64>() / periods as f64
    };
    let before = cx.iter().map(|a| a.norm_sqr()).sum::<f64>() / periods as f64;
    let steps = phase_steps.max(1);
    let h = TAU / steps as f64;
    let (mut best_d, mut best_v) = (0.0, f64::MAX);
    for i in 0..steps {
        let d = i as f64 * h;
        let v = residual(d);
        if v < best_v {
            (best_d, best_v) = (d, v);
        }
    }
    // golden-section pass over the bracket around the best candidate
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (best_d - h, best_d + h);
    let mut c1 = b - g * (b - a);
    let mut c2 = a + g * (b - a);
    let (mut f1, mut f2) = (residual(c1), residual(c2));
    for _ in 0..40 {
        if f1 < f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - g * (b - a);
            f1 = residual(c1);
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + g * (b - a);
            f2 = residual(c2);
        }
    }
    let d = 0.5 * (a + b);
    let v = residual(d);
    if v < best_v {
        (best_d, best_v) = (d, v);
    }
    if !(best_v < before) {
        return (0.0, before, before);
    }
    let g = Complex64::from_polar(1.0, best_d);
    for (s, r) in x.iter_mut().zip(&replica) {
        *s -= g * r;
    }
    (best_d.rem_euclid(TAU), before, best_v)
}

/// Iterative recovery with the default configuration.
pub fn recover(
    buffer: &IqBuffer,
    verdict: &SpoofVerdict,
    adversarial: usize,
    max_iters: usize,
) -> Result<(IqBuffer, RecoveryReport)> {
    let config = LsrConfig {
        max_iterations: max_iters,
        ..LsrConfig::default()
    };
    recover_with(buffer, verdict, adversarial, &config)
}

/// Cancels the peak `verdict.peaks[adversarial]` until the strongest peak
/// left is not the adversarial one.
pub fn recover_with(
    buffer: &IqBuffer,
    verdict: &SpoofVerdict,
    adversarial: usize,
    config: &LsrConfig,
) -> Result<(IqBuffer, RecoveryReport)> {
    let Some(adv0) = verdict.peaks.get(adversarial) else {
        return Err(Error::invalid(format!(
            "adversarial peak {adversarial} out of {} peaks",
            verdict.peaks.len()
        )));
    };
    let prn = adv0.prn;
    let fs = buffer.sample_rate;
    let code = generate_ca_code(prn)?;
    let mut x = to_f64(buffer);
    let same = config.same_peak_chips / CHIP_RATE;
    let mut adv = adv0.clone();
    let mut report = RecoveryReport {
        prn,
        iterations: 0,
        steps: Vec::new(),
        final_verdict: verdict.clone(),
        recovered_peak: None,
        estimated_advantage_db: None,
    };
    let legit0 = verdict
        .peaks
        .iter()
        .enumerate()
        .find(|(i, p)| *i != adversarial && delay_separation(p.code_delay, adv0.code_delay) > same);
    let mut first_metric = f64::NAN;
    for it in 1..=config.max_iterations {
        let t0 = Instant::now();
        report.iterations = it;
        let refined = refine_samples(&x, fs, &adv, config);
        if it == 1 {
            first_metric = refined.peak_metric;
            if let Some((_, l)) = legit0 {
                let lr = refine_samples(&x, fs, l, config);
                report.estimated_advantage_db =
                    Some(10.0 * (refined.peak_metric / lr.peak_metric.max(f64::MIN_POSITIVE)).log10());
            }
        }
        let estimate = estimate_samples(&x, fs, &refined)?;
        let mut trial = x.clone();
        let (_, before, after) = cancel_samples(&mut trial, fs, &estimate, config.phase_steps);
        let accepted = after < before;
        if accepted {
            x = trial;
        }
        let floor = first_metric * 10f64.powf(-config.residue_floor_db / 10.0);
        let mut peaks = search(&x, fs, &code, config)?;
        peaks.retain(|p| p.peak_metric >= floor);
        let verdict_now = detect_spoofing_with(&peaks, config.acquisition.min_separation);
        report.steps.push(IterationRecord {
            iteration: it,
            attenuation_db: 10.0 * (before / after.max(f64::MIN_POSITIVE)).log10(),
            accepted,
            peaks: peaks.clone(),
            elapsed: t0.elapsed().as_secs_f64(),
        });
        report.final_verdict = verdict_now.clone();
        let Some(top) = verdict_now.peaks.first() else {
            break;
        };
        if delay_separation(top.code_delay, refined.code_delay) > same {
            let mut recovered = refine_samples(&x, fs, top, config);
            recovered.doppler = fine_doppler(&x, fs, &recovered, config);
            if report.estimated_advantage_db.is_none() {
                report.estimated_advantage_db =
                    Some(10.0 * (first_metric / recovered.peak_metric.max(f64::MIN_POSITIVE)).log10());
            }
            report.recovered_peak = Some(recovered);
            let out = IqBuffer::from_f64(&x, fs, buffer.start_time)?;
            return Ok((out, report));
        }
        if !accepted {
            break;
        }
        adv = top.clone();
    }
    Err(Error::RecoveryFailure {
        report: Box::new(report),
    })
}

/// Doppler from the phase slope, seeded across the grid's uncertainty; the
/// seed giving the largest coherent amplitude wins.
fn fine_doppler(x: &[Complex64], fs: f64, peak: &AcqPeak, config: &LsrConfig) -> f64 {
    let duration = x.len() as f64 / fs;
    (-2..=2)
        .filter_map(|j| {
            let seed = AcqPeak {
                doppler: peak.doppler + j as f64 * config.refine_span,
                ..peak.clone()
            };
            extract_samples(x, fs, &seed, duration).ok()
        })
        .max_by(|a, b| a.amplitude.total_cmp(&b.amplitude))
        .map_or(peak.doppler, |pb| pb.doppler)
}

fn search(x: &[Complex64], fs: f64, code: &PrnCode, config: &LsrConfig) -> Result<Vec<AcqPeak>> {
    let k = crate::signal::samples_per_code(fs);
    let periods = config.acquisition.periods.min(x.len() / k).max(1);
    let buf = IqBuffer::from_f64(&x[..periods * k], fs, 0.0)?;
    let grid = compute_caf_with(
        &buf,
        code,
        &config.acquisition.doppler_bins(),
        periods,
        Execution::Sequential,
    )?;
    Ok(find_peaks_with(
        &grid,
        config.acquisition.max_peaks,
        config.acquisition.threshold,
    ))
}
