//! Shared fixtures for the benchmarks.

use cogsim_core::rng::rng_from_seed;
use cogsim_core::Hypervector;
use rand::Rng;

/// `k` pairs of random bipolar vectors of length `d`.
pub fn bipolar_pairs(k: usize, d: usize, seed: u64) -> Vec<(Hypervector<i32>, Hypervector<i32>)> {
    let mut rng = rng_from_seed(seed);
    let mut draw = || {
        let elems = (0..d).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        Hypervector::bipolar(elems).expect("entries are ±1")
    };
    (0..k).map(|_| (draw(), draw())).collect()
}
