//! Correlation kernels shared by refinement, cancellation and tracking.

use std::f64::consts::TAU;

use crate::signal::num_complex::Complex64;

use crate::signal::{PrnCode, CHIP_RATE, CODE_LENGTH, L1_FREQUENCY};

/// Correlates `samples[start..start + len]` against a local replica with the
/// given code delay (at stream time 0, code Doppler applied) and carrier
/// Doppler. `first_sample` is the stream index of `samples[0]`.
///
/// The carrier reference is absolute (phase zero at stream time 0), so the
/// argument of the result is the received carrier phase.
#[allow(clippy::too_many_arguments)]
pub fn correlate(
    samples: &[Complex64],
    first_sample: u64,
    start: usize,
    len: usize,
    code: &PrnCode,
    sample_rate: f64,
    code_delay: f64,
    doppler: f64,
) -> Complex64 {
    let end = (start + len).min(samples.len());
    if start >= end {
        return Complex64::new(0.0, 0.0);
    }
    let code_rate = 1.0 + doppler / L1_FREQUENCY;
    let chips_per_sample = CHIP_RATE * code_rate / sample_rate;
    let delay_chips = code_delay * CHIP_RATE;
    let omega = TAU * doppler / sample_rate;
    let rot = Complex64::from_polar(1.0, -omega);
    let chips = code.chips();
    let mut acc = Complex64::new(0.0, 0.0);
    const BLOCK: usize = 4096;
    let mut n = start;
    while n < end {
        let stop = (n + BLOCK).min(end);
        let abs0 = first_sample + n as u64;
        let mut ph = Complex64::from_polar(1.0, -omega * abs0 as f64);
        let mut block = Complex64::new(0.0, 0.0);
        for (i, x) in samples[n..stop].iter().enumerate() {
            let chip_pos = (abs0 + i as u64) as f64 * chips_per_sample - delay_chips;
            let ci = (chip_pos.floor() as i64).rem_euclid(CODE_LENGTH as i64) as usize;
            block += x * ph * chips[ci] as f64;
            ph *= rot;
        }
        acc += block;
        n = stop;
    }
    acc
}

/// Per-code-period correlations over consecutive periods of length `k`.
#[allow(clippy::too_many_arguments)]
pub fn correlate_periods(
    samples: &[Complex64],
    first_sample: u64,
    k: usize,
    periods: usize,
    code: &PrnCode,
    sample_rate: f64,
    code_delay: f64,
    doppler: f64,
) -> Vec<Complex64> {
    (0..periods)
        .map(|p| {
            correlate(
                samples,
                first_sample,
                p * k,
                k,
                code,
                sample_rate,
                code_delay,
                doppler,
            )
        })
        .collect()
}

/// Median of a slice (average of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Moment-based (M2M4) signal and noise power of complex correlator outputs.
/// Returns `(signal_power, noise_power)` per output.
pub fn m2m4(values: &[Complex64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let m2 = values.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
    let m4 = values.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() / n;
    let pd = (2.0 * m2 * m2 - m4).max(0.0).sqrt();
    let pn = (m2 - pd).max(0.0);
    (pd, pn)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{add_signal, generate_ca_code, SatelliteSignalParams};

    #[test]
    fn matched_replica_gives_amplitude_times_length() {
        let code = generate_ca_code(4).unwrap();
        let fs = 4.092e6;
        let p = SatelliteSignalParams::new(4, 1.7, 3.21e-4, 2345.0, 0.9);
        let mut buf = vec![Complex64::new(0.0, 0.0); 4092 * 3];
        add_signal(&p, &code, fs, 500, &mut buf);
        let r = correlate(&buf, 500, 0, buf.len(), &code, fs, p.code_delay, p.doppler);
        assert!((r.norm() - 1.7 * buf.len() as f64).abs() < 1e-6 * r.norm());
        assert!((r.arg() - 0.9).abs() < 1e-9);
    }

    #[test]
    fn median_and_m2m4() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let v = vec![Complex64::new(2.0, 0.0), Complex64::new(-2.0, 0.0)];
        let (s, n) = m2m4(&v);
        assert!((s - 4.0).abs() < 1e-12 && n.abs() < 1e-12);
    }
}
