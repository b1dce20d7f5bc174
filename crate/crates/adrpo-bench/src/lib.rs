//! Shared fixtures for the benchmark suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use adrpo_core::{make_path, Activation, FmBatchSample, ParamNet};

/// Standard probe net used across benchmarks.
pub fn bench_net(seed: u64) -> ParamNet {
    ParamNet::new(2, 2, &[32, 32], Activation::Tanh, seed)
}

/// Random scored batch in the shape the flow objectives consume.
pub fn bench_batch(seed: u64, n: usize, contexts: usize) -> Vec<FmBatchSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x0 = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let x1 = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let t: f64 = rng.random_range(0.0..1.0);
            FmBatchSample {
                path: make_path(&x0, &x1, t).expect("path"),
                context: rng.random_range(0..contexts),
                reward: rng.random_range(0.0..1.0),
                advantage_clipped: rng.random_range(-1.0..1.0),
            }
        })
        .collect()
}

/// Random 2-D point cloud.
pub fn bench_points(seed: u64, n: usize) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)])
        .collect()
}
