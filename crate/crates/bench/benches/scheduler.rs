use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use junction_bench::{cfz_vehicles, cug};
use junction_core::conflictgraph::ReachabilityParams;
use junction_core::geometry::IntersectionSpec;
use junction_core::scheduler::{mcc_exact, mcc_heuristic, schedule};

fn covers(c: &mut Criterion) {
    let mut group = c.benchmark_group("mcc");
    for n in [8, 12, 16] {
        let g = cug(n, 0.4, n as u64);
        group.bench_with_input(BenchmarkId::new("heuristic", n), &g, |b, g| b.iter(|| mcc_heuristic(black_box(g))));
        group.bench_with_input(BenchmarkId::new("exact", n), &g, |b, g| b.iter(|| mcc_exact(black_box(g)).expect("small graph")));
    }
    group.finish();
}

fn full_schedule(c: &mut Criterion) {
    let spec = IntersectionSpec::default();
    let params = ReachabilityParams::default();
    let mut group = c.benchmark_group("schedule");
    for n in [7, 14, 28] {
        let vs = cfz_vehicles(&spec, n, 3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &vs, |b, vs| b.iter(|| schedule(&spec, &params, black_box(vs))));
    }
    group.finish();
}

criterion_group!(benches, covers, full_schedule);
criterion_main!(benches);
