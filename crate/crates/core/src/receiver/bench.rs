use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::acquisition::{AcqPeak, Acquirer};
use crate::error::Result;
use crate::exec::Execution;
use crate::lsr::{cancel_with_report, estimate_replica, refine_with, LsrConfig};
use crate::scenario::iq::IqReader;
use crate::signal::{generate_ca_code, IqBuffer};

/// Samples read from an IQ file for benchmarking, s.
const WINDOW: f64 = 0.04;

/// Host timings; compare across hosts through `samples_per_second`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub sample_rate: f64,
    /// Samples in the benchmarked buffer.
    pub samples: usize,
    /// PRN the cancellation iterations ran on.
    pub prn: u8,
    /// Wall-clock of each cancellation iteration (refine, estimate, cancel), s.
    pub iterations: Vec<f64>,
    pub median_iteration: f64,
    /// Wall-clock of a 32-PRN search, s.
    pub acquisition: f64,
    /// Samples searched per second, over all PRNs.
    pub samples_per_second: f64,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    if s.is_empty() {
        0.0
    } else {
        s[s.len() / 2]
    }
}

/// Times `iterations` cancellation passes over the first 40 ms of an IQ file.
pub fn benchmark(path: impl AsRef<Path>, iterations: usize, exec: Execution) -> Result<BenchReport> {
    let mut r = IqReader::open(path)?;
    let n = ((WINDOW * r.sample_rate()).round() as usize).min(r.len());
    let chunk = r.read_chunk(n)?;
    let buf = IqBuffer::new(chunk, r.sample_rate(), 0.0)?;
    benchmark_buffer(&buf, iterations, exec)
}

pub fn benchmark_buffer(buffer: &IqBuffer, iterations: usize, exec: Execution) -> Result<BenchReport> {
    let config = LsrConfig::default();
    let acq = Acquirer::new(config.acquisition.clone(), exec);
    let search = buffer.slice(0, buffer.samples_per_code() * config.acquisition.periods);
    let codes = (1..=32).map(generate_ca_code).collect::<Result<Vec<_>>>()?;
    let t = Instant::now();
    let verdicts = acq.acquire_all(&search, &codes)?;
    let acquisition = t.elapsed().as_secs_f64();
    let strongest = verdicts
        .iter()
        .filter_map(|v| v.peaks.first())
        .max_by(|a, b| a.peak_metric.total_cmp(&b.peak_metric))
        .cloned()
        .unwrap_or(AcqPeak {
            prn: 1,
            code_delay: 0.0,
            doppler: 0.0,
            peak_metric: 0.0,
            estimated_amplitude: 0.0,
            ratio: 0.0,
        });
    let mut times = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let t = Instant::now();
        let refined = refine_with(buffer, &strongest, &config);
        let est = estimate_replica(buffer, &refined)?;
        let c = cancel_with_report(buffer, &est, config.phase_steps);
        std::hint::black_box(c);
        times.push(t.elapsed().as_secs_f64());
    }
    Ok(BenchReport {
        sample_rate: buffer.sample_rate,
        samples: buffer.len(),
        prn: strongest.prn,
        median_iteration: median(&times),
        iterations: times,
        acquisition,
        samples_per_second: (search.len() * codes.len()) as f64 / acquisition.max(1e-12),
    })
}
