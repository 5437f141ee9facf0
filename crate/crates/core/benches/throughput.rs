//! Sequential vs. parallel throughput of the data-parallel stages.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use sicrx::acquisition::{Acquirer, AcquisitionConfig};
use sicrx::scenario::{Components, ScenarioConfig};
use sicrx::signal::num_complex::Complex64;
use sicrx::signal::{generate_ca_code, IqBuffer};
use sicrx::Execution;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn attack_buffer(ms: usize) -> IqBuffer {
    let mut cfg = ScenarioConfig::static_attack(1500.0, 3.0);
    cfg.duration = 0.1;
    let s = cfg.build().unwrap();
    let mut out = vec![Complex64::new(0.0, 0.0); ms * 10_000];
    s.compose_range(0, &mut out, Components::ALL, Execution::default());
    IqBuffer::from_f64(&out, s.sample_rate(), 0.0).unwrap()
}

fn acquisition(c: &mut Criterion) {
    let buf = attack_buffer(4);
    let codes: Vec<_> = [2, 5, 7, 12, 15, 19, 24, 29]
        .into_iter()
        .map(|p| generate_ca_code(p).unwrap())
        .collect();
    let mut g = c.benchmark_group("acquire_8_prns");
    g.throughput(Throughput::Elements(buf.len() as u64 * codes.len() as u64));
    for (name, exec) in MODES {
        let acq = Acquirer::new(AcquisitionConfig::default(), exec);
        g.bench_with_input(BenchmarkId::from_parameter(name), &buf, |b, buf| {
            b.iter(|| black_box(acq.acquire_all(buf, &codes).unwrap()))
        });
    }
    g.finish();
}

fn composition(c: &mut Criterion) {
    let mut cfg = ScenarioConfig::static_attack(1500.0, 3.0);
    cfg.duration = 0.1;
    let s = cfg.build().unwrap();
    let mut out = vec![Complex64::new(0.0, 0.0); 200_000];
    let mut g = c.benchmark_group("compose_20ms");
    g.throughput(Throughput::Elements(out.len() as u64));
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| {
                s.compose_range(0, &mut out, Components::ALL, exec);
                black_box(out[0])
            })
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10).measurement_time(Duration::from_secs(5));
    targets = acquisition, composition
}
criterion_main!(benches);
