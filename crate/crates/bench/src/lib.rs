//! Seeded inputs shared by the benchmarks.

use dilatron_core::StochasticMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense random stochastic matrix with entries rounded to multiples of 1/64.
pub fn random_stochastic(n: usize, seed: u64) -> StochasticMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut cuts: Vec<u32> = (0..n - 1).map(|_| rng.gen_range(0..=64)).collect();
            cuts.sort_unstable();
            cuts.push(64);
            let mut prev = 0;
            cuts.iter()
                .map(|&c| {
                    let v = f64::from(c - prev) / 64.0;
                    prev = c;
                    v
                })
                .collect()
        })
        .collect();
    StochasticMatrix::from_rows(&rows).expect("rows sum to one")
}

/// The two-state matrix with rows `(1/2, 1/2)` and `(1/4, 3/4)`.
pub fn example2() -> StochasticMatrix {
    StochasticMatrix::from_rows(&[[0.5, 0.5], [0.25, 0.75]]).expect("valid")
}
