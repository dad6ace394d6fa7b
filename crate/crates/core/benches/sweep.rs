use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ssjf_core::par::Execution;
use ssjf_core::{run_sweep, Axis, BatchMode, Policy, ScenarioFile, SweepSpec};

fn spec(mode: BatchMode) -> SweepSpec {
    let f = ScenarioFile {
        requests: 2000,
        batch_mode: mode,
        max_batch_size: 4,
        batch_wait_timeout_ms: Some(100),
        axis: Some(Axis::Cv),
        values: vec![0.5, 1.0, 2.0, 4.0],
        policies: vec![Policy::Fcfs, Policy::Ssjf, Policy::SjfOracle],
        repeats: 4,
        ..ScenarioFile::default()
    };
    SweepSpec::from_file(&f).unwrap()
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep_48_runs");
    group.sample_size(10);
    for mode in [BatchMode::None, BatchMode::Continuous] {
        let spec = spec(mode);
        for (name, exec) in [
            ("sequential", Execution::Sequential),
            ("parallel", Execution::Auto),
        ] {
            group.bench_with_input(BenchmarkId::new(name, mode), &spec, |b, spec| {
                b.iter(|| run_sweep(spec, None, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
