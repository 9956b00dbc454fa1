use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use holofill::disk::SolverConfig;
use holofill::foliation::{build_foliation, FoliationOptions};
use holofill::parallel::Execution;
use holofill::torus::{TorusFamily, TorusFamilySpec};
use std::hint::black_box;

fn foliate(c: &mut Criterion) {
    let family = TorusFamily::new(TorusFamilySpec::twisted(0.1)).unwrap();
    let options = FoliationOptions {
        leaves: 8,
        grid: 64,
        ..Default::default()
    };
    let mut group = c.benchmark_group("build_foliation");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let config = SolverConfig {
            execution: exec,
            ..Default::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &config, |b, cfg| {
            b.iter(|| build_foliation(black_box(&family), 1.0, &options, cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, foliate);
criterion_main!(benches);
