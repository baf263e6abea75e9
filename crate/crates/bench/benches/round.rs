use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tailfl::fed::{run_round, Algorithm, FedState, ModelParams};
use tailfl_bench::{federation, round_config};

fn round(c: &mut Criterion) {
    let data = federation(200);
    let mut group = c.benchmark_group("round");
    group.sample_size(20);
    for algorithm in [Algorithm::FedAvg, Algorithm::DeltaFl, Algorithm::DeltaFlSmoothed, Algorithm::DeltaFlDp] {
        let cfg = round_config(algorithm, 50);
        let name = format!("{algorithm:?}");
        group.bench_function(BenchmarkId::new(name, 50), |b| {
            let mut state = FedState::new(ModelParams::zeros(data.n_classes(), data.dim()), 0);
            b.iter(|| run_round(&mut state, &cfg, &data.train).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, round);
criterion_main!(benches);
