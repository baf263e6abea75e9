use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tailfl::dp::ModRing;
use tailfl::quantile::{dp_aggregate, sum_exact, AggregationParams};
use tailfl::rng;
use tailfl_bench::client_histograms;

fn aggregation(c: &mut Criterion) {
    let mut group = c.benchmark_group("aggregation");
    group.sample_size(20);
    for (n, bins) in [(256, 64), (1024, 64), (256, 1024)] {
        let hists = client_histograms(n, bins, 3);
        let params =
            AggregationParams { sigma2: 4.0, scale: 64, ring: ModRing::with_bit_width(40).unwrap(), delta: 1e-5 };
        let id = format!("n{n}_b{bins}");
        group.bench_function(BenchmarkId::new("exact", &id), |b| b.iter(|| sum_exact(&hists).unwrap()));
        let mut r = rng::derive(0, "bench-aggregation", &[]);
        group.bench_function(BenchmarkId::new("private", &id), |b| {
            b.iter(|| dp_aggregate(&hists, &params, &mut r).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, aggregation);
criterion_main!(benches);
