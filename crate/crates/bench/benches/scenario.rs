//! Whole-run throughput: a prepared five-cycle scenario simulated end to
//! end (10,000 plant steps with analysis channels recorded). Preparation is
//! done once outside the loop — it is dominated by curve fitting and is not
//! what run-to-run latency depends on.

use criterion::{criterion_group, criterion_main, Criterion};
use pvgrid_bench::quick_scenario;
use pvgrid_core::sim::Prepared;

fn bench_five_cycle_run(c: &mut Criterion) {
    let prepared = Prepared::new(quick_scenario()).expect("scenario must prepare");
    let mut group = c.benchmark_group("simulate");
    group.sample_size(20);
    group.bench_function("five_cycles_po", |b| {
        b.iter(|| {
            let outcome = prepared.run().expect("scenario must simulate");
            assert!(outcome.fault.is_none());
            outcome.trace.len()
        })
    });
    group.finish();
}

criterion_group!(benches, bench_five_cycle_run);
criterion_main!(benches);
