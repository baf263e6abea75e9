use rand::Rng;
use tailfl::dp::ModRing;
use tailfl::quantile::{
    best_quantile_error, cumulative, dp_aggregate, encode_client, quantile_error, quantile_from_histogram, sum_exact,
    utility_bound, AggregationParams, BinEdges, HierHistogram,
};
use tailfl::risk::TailThreshold;
use tailfl::rng;

fn clients(n: usize, edges: &BinEdges, seed: u64) -> Vec<HierHistogram> {
    let mut r = rng::derive(seed, "dpq-losses", &[]);
    (0..n).map(|_| encode_client(r.random_range(0.0..edges.upper()), edges)).collect()
}

#[test]
fn noisy_counts_are_unbiased_with_expected_variance() {
    let edges = BinEdges::uniform(1.0, 8).unwrap();
    let hists = clients(16, &edges, 1);
    let exact = sum_exact(&hists).unwrap().flatten();
    let (sigma2, scale) = (4.0, 4u64);
    let params = AggregationParams { sigma2, scale, ring: ModRing::with_bit_width(32).unwrap(), delta: 1e-6 };
    let runs = 4000;
    let mut sum = vec![0.0; exact.len()];
    let mut sq = vec![0.0; exact.len()];
    let mut r = rng::derive(2, "dpq-noise", &[]);
    for _ in 0..runs {
        let noisy = dp_aggregate(&hists, &params, &mut r).unwrap().flatten();
        for (k, (v, e)) in noisy.iter().zip(&exact).enumerate() {
            sum[k] += v - e;
            sq[k] += (v - e) * (v - e);
        }
    }
    // the discrete Gaussian with sigma^2 = 4 has variance within 1e-6 of 4
    let var = 16.0 * sigma2 / (scale * scale) as f64;
    for k in 0..exact.len() {
        let mean = sum[k] / runs as f64;
        assert!(mean.abs() < 4.5 * (var / runs as f64).sqrt(), "node {k}: bias {mean}");
        let v = sq[k] / runs as f64;
        assert!((v / var - 1.0).abs() < 0.1, "node {k}: variance {v} vs {var}");
    }
}

#[test]
fn quantile_error_within_utility_bound() {
    let (n, bins, delta) = (64, 32, 0.05);
    let edges = BinEdges::uniform(10.0, bins).unwrap();
    let params = AggregationParams { sigma2: 1.0, scale: 3, ring: ModRing::with_bit_width(24).unwrap(), delta };
    let bound = utility_bound(params.sigma2, params.scale, n, bins, delta).unwrap();
    let mut failures = 0;
    let runs = 400;
    for run in 0..runs {
        let hists = clients(n, &edges, 100 + run);
        let exact = sum_exact(&hists).unwrap();
        let mut r = rng::derive(3, "dpq-bound", &[run]);
        let noisy = dp_aggregate(&hists, &params, &mut r).unwrap();
        for theta in [0.1, 0.5, 0.9] {
            let t = TailThreshold::new(theta).unwrap();
            let est = quantile_from_histogram(&noisy, t);
            let err = quantile_error(est.index, &exact, t).unwrap();
            if err > best_quantile_error(&noisy, t) + bound {
                failures += 1;
            }
        }
    }
    assert!(failures as f64 <= delta * (3 * runs) as f64, "{failures} failures");
}

#[test]
fn noiseless_protocol_recovers_exact_cumulative() {
    let edges = BinEdges::uniform(4.0, 16).unwrap();
    let hists = clients(50, &edges, 4);
    let exact = sum_exact(&hists).unwrap();
    let params = AggregationParams { sigma2: 0.0, scale: 7, ring: ModRing::with_bit_width(16).unwrap(), delta: 1e-5 };
    let mut r = rng::derive(5, "x", &[]);
    let out = dp_aggregate(&hists, &params, &mut r).unwrap();
    for j in 1..=16 {
        assert_eq!(cumulative(&out, j).unwrap(), cumulative(&exact, j).unwrap());
    }
}
