//! Cross-modal recipe/image retrieval toolkit.
//!
//! The pieces, bottom up:
//!
//! * [`corpus`] – recipe records, validation and component-aware augmentation
//! * [`prompting`] – query/candidate prompt rendering for both directions
//! * [`encoder`] – toy linear encoders with low-rank adapters
//! * [`trainer`] – in-batch InfoNCE, Adam, full and chunk-cached steps
//! * [`index`] – `SIMMEREM` dumps and exact cosine top-k
//! * [`eval`] – repeated-pool medR / Recall@k
//!
//! plus the parameter file format, a planted synthetic corpus and the
//! built-in self-check suite.

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod index;
pub mod linalg;
pub mod params_file;
pub mod pipeline;
pub mod prompting;
pub mod seed;
pub mod selfcheck;
pub mod synth;
pub mod trainer;

pub use corpus::{
    augment, load_corpus, save_corpus, ComponentMask, PairedCorpus, Recipe, RecipeVariant,
    Validation,
};
pub use encoder::{
    cosine, encode, AdapterConfig, EmbeddingVector, EncoderConfig, EncoderParams, LowRankAdapter,
};
pub use error::{Error, Result};
pub use eval::{evaluate, rank_of_truth, EvalConfig, EvalDirection, EvalReport};
pub use index::{load_dump, save_dump, top_k, EmbeddingDump, RankedResult};
pub use params_file::{load_params, save_params};
pub use prompting::{
    render_image_prompt, render_recipe_prompt, Direction, Modality, PromptedSample, Role,
};
pub use trainer::{
    build_direction_datasets, info_nce, info_nce_grad, train, train_step_cached, train_step_full,
    TrainConfig, TrainPair, UpdateMode,
};
