use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tokenomics_core::sim::{self, Execution, Scenario};

fn scenario() -> Scenario {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/baseline.json");
    let mut s = Scenario::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    s.steps = 48;
    s
}

fn execution_modes(c: &mut Criterion) {
    let s = scenario();
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    for runs in [16u64, 64] {
        group.bench_with_input(BenchmarkId::new("sequential", runs), &runs, |b, &n| {
            b.iter(|| sim::monte_carlo_with(&s, n, Execution::Sequential).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", runs), &runs, |b, &n| {
            b.iter(|| sim::monte_carlo_with(&s, n, Execution::Parallel).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, execution_modes);
criterion_main!(benches);
