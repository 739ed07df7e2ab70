//! Synthetic paired corpora with planted class structure.
//!
//! Pair `i` belongs to class `i % classes`. Its recipe carries class tokens
//! (`k<c>…`) plus tokens unique to the item (`u<i>…`) in every component;
//! its image feature is the class centroid plus an item signature, both
//! standard Gaussian. Retrieval therefore needs both the class and the item
//! to be recovered.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{PairedCorpus, Recipe};
use crate::encoder::EmbeddingVector;
use crate::error::Result;
use crate::index::EmbeddingDump;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedSpec {
    pub pairs: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            pairs: 256,
            classes: 32,
            feature_dim: 32,
            seed: 7,
        }
    }
}

pub fn planted_recipe(i: usize, classes: usize) -> Recipe {
    let c = i % classes;
    Recipe {
        id: format!("r{i:05}"),
        title: format!("Dish k{c}t u{i}t"),
        ingredients: vec![
            format!("k{c}a"),
            format!("k{c}b"),
            "salt".into(),
            format!("u{i}i"),
        ],
        instructions: vec![format!("Cook k{c}c."), format!("Plate u{i}s.")],
        image_ref: format!("img{i:05}"),
    }
}

pub fn planted_corpus(spec: PlantedSpec) -> Result<PairedCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(spec.seed, seed::tags::SYNTH, 0));
    let mut gaussian =
        |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let centroids: Vec<Vec<f64>> = (0..spec.classes.max(1))
        .map(|_| gaussian(spec.feature_dim))
        .collect();
    let mut recipes = Vec::with_capacity(spec.pairs);
    let mut features = Vec::with_capacity(spec.pairs);
    for i in 0..spec.pairs {
        let recipe = planted_recipe(i, spec.classes.max(1));
        let signature = gaussian(spec.feature_dim);
        let values = centroids[i % centroids.len()]
            .iter()
            .zip(&signature)
            .map(|(a, b)| f64::from((a + b) as f32))
            .collect();
        features.push(EmbeddingVector::new(recipe.image_ref.clone(), values)?);
        recipes.push(recipe);
    }
    PairedCorpus::new(
        recipes,
        EmbeddingDump::new(spec.feature_dim, "synthetic", features)?,
    )
}
