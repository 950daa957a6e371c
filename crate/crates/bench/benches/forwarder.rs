use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use ndnsmc::forwarder::{build_model, FactorConfig};
use ndnsmc::smc::{estimate, Monitor, TraceSource};
use ndnsmc::CalibrationProfile;

fn trace(c: &mut Criterion) {
    let cal = CalibrationProfile::shipped();
    let mut group = c.benchmark_group("forwarder_trace");
    group.sample_size(10);
    for threads in [1u8, 4, 8] {
        let cfg = FactorConfig { n_forwarding_threads: threads, horizon: 1_000_000, ..FactorConfig::default() };
        let model = build_model(&cfg, &cal).unwrap();
        // one Interest per microsecond of simulated time
        group.throughput(Throughput::Elements(cfg.horizon / cfg.send_interval));
        group.bench_with_input(BenchmarkId::from_parameter(threads), &model, |b, m| {
            b.iter(|| m.clone().run(7).unwrap())
        });
    }
    group.finish();
}

fn smc_estimate(c: &mut Criterion) {
    let cal = CalibrationProfile::shipped();
    let cfg = FactorConfig { send_interval: 10_000, horizon: 1_000_000, ..FactorConfig::default() };
    let options = Default::default();
    let src = TraceSource { cfg: &cfg, calibration: &cal, options: &options };
    let mut group = c.benchmark_group("smc");
    group.sample_size(10);
    group.bench_function("estimate_alpha0.2_light_load", |b| {
        b.iter(|| estimate(&src, &Monitor::AllSatisfied, 0.2, 0.1, 3, 1).unwrap())
    });
    group.finish();
}

criterion_group!(benches, trace, smc_estimate);
criterion_main!(benches);
