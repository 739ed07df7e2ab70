//! Shared fixtures for the benchmarks.

use simmer_core::seed::splitmix64;
use simmer_core::synth::{planted_corpus, PlantedSpec};
use simmer_core::{EmbeddingDump, EmbeddingVector, PairedCorpus};

/// `n` vectors of dimension `dim` with entries uniform in [-1, 1).
pub fn random_dump(prefix: &str, n: usize, dim: usize, seed: u64) -> EmbeddingDump {
    let mut state = seed;
    let mut next = move || {
        state = splitmix64(state);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let entries = (0..n)
        .map(|i| {
            EmbeddingVector::new(
                format!("{prefix}{i:06}"),
                (0..dim).map(|_| next()).collect(),
            )
            .unwrap()
        })
        .collect();
    EmbeddingDump::new(dim, "bench", entries).unwrap()
}

pub fn corpus(pairs: usize) -> PairedCorpus {
    planted_corpus(PlantedSpec {
        pairs,
        ..PlantedSpec::default()
    })
    .unwrap()
}
