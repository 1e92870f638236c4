//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rap_core::simgen::{self, RegimeSpec, StreamSample};
use rap_core::{Family, WeightedMoments};

pub fn stream(p: usize, n: usize, family: Family, seed: u64) -> Vec<StreamSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simgen::make_piecewise_stream(&[RegimeSpec::new(p, 0.2, n, family)], &mut rng)
        .expect("valid spec")
}

pub fn moments(samples: &[StreamSample], r: f64) -> WeightedMoments {
    let mut m = WeightedMoments::new(samples[0].x.len(), r).expect("valid r");
    for s in samples {
        m.update(&s.x, s.y).expect("finite sample");
    }
    m
}

/// A penalty drawn uniformly from the lower half of `(0, λ_max)`.
pub fn mid_penalty(m: &WeightedMoments, seed: u64) -> f64 {
    let lmax = rap_core::lasso::lambda_max(m).expect("nonempty");
    ChaCha8Rng::seed_from_u64(seed).random_range(0.05..0.5) * lmax
}
