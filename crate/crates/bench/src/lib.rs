//! Shared fixtures for the benchmarks.

use mlcdr_core::{simulate_dgp, Dataset, RandomEffectFamily, SimConfig};

/// Simulated dataset with moderate cluster effects on both the treatment
/// and the outcome, sized by cluster count.
pub fn bench_dataset(n_clusters: usize, seed: u64) -> Dataset {
    let cfg = SimConfig {
        n_clusters,
        size_range: Some((3, 8)),
        sigma_v: 0.7,
        sigma_u: 0.5,
        family: RandomEffectFamily::Normal,
        seed,
    };
    simulate_dgp(&cfg).expect("benchmark dataset simulates")
}
