use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use tailfl::risk::{dual_weights, smoothed_weights, superquantile, SmoothingParam, TailThreshold};
use tailfl_bench::losses;

fn risk(c: &mut Criterion) {
    let theta = TailThreshold::new(0.3).unwrap();
    let nu = SmoothingParam::new(0.1).unwrap();
    let mut group = c.benchmark_group("risk");
    for n in [100, 1000, 10_000] {
        let lv = losses(n, 1);
        group.bench_with_input(BenchmarkId::new("superquantile", n), &lv, |b, lv| {
            b.iter(|| superquantile(black_box(lv), theta))
        });
        group.bench_with_input(BenchmarkId::new("dual_weights", n), &lv, |b, lv| {
            b.iter(|| dual_weights(black_box(lv), theta))
        });
        group.bench_with_input(BenchmarkId::new("smoothed_weights", n), &lv, |b, lv| {
            b.iter(|| smoothed_weights(black_box(lv), theta, nu).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, risk);
criterion_main!(benches);
