//! Contrastive training of the toy encoder.
//!
//! A step encodes a batch of query/candidate pairs, evaluates in-batch
//! InfoNCE, backpropagates into the encoder parameters and applies one Adam
//! update. Two gradient schedules are available:
//!
//! * full: every forward intermediate of the batch is kept until backward;
//! * cached: pass one keeps only the `2B` embeddings, the loss gradient with
//!   respect to those embeddings is computed once, and pass two re-encodes
//!   chunk by chunk to push the cached gradients into the parameters. Peak
//!   intermediate memory then depends on the chunk size, not the batch.
//!
//! Both schedules accumulate parameter gradients in the same sample order
//! and replay dropout from per-slot seeds, so they agree bitwise.

mod adam;
mod dataset;
mod loss;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use adam::{Adam, AdamConfig};
pub use dataset::{build_direction_datasets, TrainPair};
pub use loss::{info_nce, info_nce_grad, InfoNceGrad};

use crate::corpus::PairedCorpus;
use crate::encoder::{
    backward, forward, EmbeddingVector, EncoderConfig, EncoderParams, Forward, Gradients, Tensor,
};
use crate::error::{Error, Result};
use crate::prompting::{Direction, Modality, PromptedSample};
use crate::seed;

/// Which tensors receive updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateMode {
    /// Base weights frozen; only the low-rank adapters train.
    #[default]
    AdapterOnly,
    /// Base weights and adapters both train.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub tau: f64,
    pub steps: usize,
    /// Pairs per re-encoding chunk; must divide `batch_size`.
    pub chunk_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub augment: bool,
    pub update: UpdateMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            tau: 0.02,
            steps: 2000,
            chunk_size: 128,
            seed: 0,
            adam: AdamConfig::default(),
            augment: true,
            update: UpdateMode::AdapterOnly,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if self.chunk_size == 0 || !self.batch_size.is_multiple_of(self.chunk_size) {
            return Err(Error::invalid(format!(
                "chunk size {} must divide batch size {}",
                self.chunk_size, self.batch_size
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("temperature must be positive"));
        }
        let a = &self.adam;
        if !(a.learning_rate >= 0.0 && a.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be non-negative"));
        }
        if !(0.0..1.0).contains(&a.beta1)
            || !(0.0..1.0).contains(&a.beta2)
            || a.eps.is_nan()
            || a.eps <= 0.0
        {
            return Err(Error::invalid("invalid Adam hyperparameters"));
        }
        Ok(())
    }

    fn trainable(&self) -> impl Fn(Tensor) -> bool {
        let update = self.update;
        move |t| update == UpdateMode::Full || t.is_adapter()
    }
}

/// How parameter gradients are accumulated within a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Full,
    Cached { chunk_size: usize },
}

/// Result of the forward/backward part of a step.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub loss: f64,
    pub accuracy: f64,
    pub grads: Gradients,
    /// Peak bytes of encoder intermediates alive at once.
    pub peak_transient_bytes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Loss before the update.
    pub loss: f64,
    pub accuracy: f64,
    pub peak_transient_bytes: usize,
}

#[derive(Default)]
struct Meter {
    current: usize,
    peak: usize,
}

impl Meter {
    fn hold(&mut self, bytes: usize) {
        self.current += bytes;
        self.peak = self.peak.max(self.current);
    }

    fn release(&mut self, bytes: usize) {
        self.current -= bytes;
    }
}

fn features_for<'a>(
    corpus: &'a PairedCorpus,
    sample: &PromptedSample,
) -> Result<Option<&'a EmbeddingVector>> {
    match (sample.modality, &sample.image_ref) {
        (Modality::Image, Some(r)) => corpus
            .image_features(r)
            .map(Some)
            .ok_or_else(|| Error::MissingImageFeatures(r.clone())),
        (Modality::Image, None) => Err(Error::MissingImageFeatures(sample.source_id.clone())),
        (Modality::Recipe, _) => Ok(None),
    }
}

/// Slot `2i` is query `i`, slot `2i + 1` its candidate.
fn slot_sample(batch: &[TrainPair], slot: usize) -> &PromptedSample {
    let pair = &batch[slot / 2];
    if slot.is_multiple_of(2) {
        &pair.query
    } else {
        &pair.candidate
    }
}

fn forward_slot(
    params: &EncoderParams,
    batch: &[TrainPair],
    corpus: &PairedCorpus,
    step_seed: u64,
    slot: usize,
) -> Result<Forward> {
    let sample = slot_sample(batch, slot);
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed::derive(step_seed, seed::tags::DROPOUT, slot as u64));
    forward(
        params,
        sample,
        features_for(corpus, sample)?,
        Some(&mut rng),
    )
}

fn forward_range(
    params: &EncoderParams,
    batch: &[TrainPair],
    corpus: &PairedCorpus,
    step_seed: u64,
    slots: std::ops::Range<usize>,
) -> Result<Vec<Forward>> {
    slots
        .into_par_iter()
        .map(|slot| forward_slot(params, batch, corpus, step_seed, slot))
        .collect()
}

fn to_embeddings(
    batch: &[TrainPair],
    outputs: Vec<Vec<f64>>,
) -> Result<(Vec<EmbeddingVector>, Vec<EmbeddingVector>)> {
    let mut queries = Vec::with_capacity(batch.len());
    let mut candidates = Vec::with_capacity(batch.len());
    for (slot, out) in outputs.into_iter().enumerate() {
        let e = EmbeddingVector::new(slot_sample(batch, slot).source_id.clone(), out)?;
        if slot.is_multiple_of(2) {
            queries.push(e);
        } else {
            candidates.push(e);
        }
    }
    Ok((queries, candidates))
}

/// Loss and parameter gradients for one batch under `schedule`.
pub fn batch_gradients(
    params: &EncoderParams,
    batch: &[TrainPair],
    corpus: &PairedCorpus,
    config: &TrainConfig,
    step_seed: u64,
    schedule: Schedule,
) -> Result<BatchGradients> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let slots = 2 * batch.len();
    let mut grads = Gradients::zeros(params, config.trainable());
    let mut meter = Meter::default();

    match schedule {
        Schedule::Full => {
            let fwds = forward_range(params, batch, corpus, step_seed, 0..slots)?;
            let held: usize = fwds.iter().map(Forward::transient_bytes).sum();
            meter.hold(held);
            let outputs = fwds.iter().map(|f| f.output.clone()).collect();
            let (q, c) = to_embeddings(batch, outputs)?;
            let g = info_nce_grad(&q, &c, config.tau)?;
            for (slot, f) in fwds.iter().enumerate() {
                let grad_out = embedding_grad(&g, slot);
                backward(params, f, grad_out, &mut grads);
            }
            meter.release(held);
            Ok(BatchGradients {
                loss: g.loss,
                accuracy: g.accuracy,
                grads,
                peak_transient_bytes: meter.peak,
            })
        }
        Schedule::Cached { chunk_size } => {
            if chunk_size == 0 || !batch.len().is_multiple_of(chunk_size) {
                return Err(Error::invalid(format!(
                    "chunk size {chunk_size} must divide batch size {}",
                    batch.len()
                )));
            }
            let chunk_slots = 2 * chunk_size;
            // Pass 1: embeddings only.
            let mut outputs = Vec::with_capacity(slots);
            for start in (0..slots).step_by(chunk_slots) {
                let fwds =
                    forward_range(params, batch, corpus, step_seed, start..start + chunk_slots)?;
                let held: usize = fwds.iter().map(Forward::transient_bytes).sum();
                meter.hold(held);
                outputs.extend(fwds.into_iter().map(|f| f.output));
                meter.release(held);
            }
            let (q, c) = to_embeddings(batch, outputs)?;
            let g = info_nce_grad(&q, &c, config.tau)?;
            drop((q, c));
            // Pass 2: re-encode and chain the cached embedding gradients.
            for start in (0..slots).step_by(chunk_slots) {
                let fwds =
                    forward_range(params, batch, corpus, step_seed, start..start + chunk_slots)?;
                let held: usize = fwds.iter().map(Forward::transient_bytes).sum();
                meter.hold(held);
                for (offset, f) in fwds.iter().enumerate() {
                    backward(params, f, embedding_grad(&g, start + offset), &mut grads);
                }
                meter.release(held);
            }
            Ok(BatchGradients {
                loss: g.loss,
                accuracy: g.accuracy,
                grads,
                peak_transient_bytes: meter.peak,
            })
        }
    }
}

fn embedding_grad(g: &InfoNceGrad, slot: usize) -> &[f64] {
    if slot.is_multiple_of(2) {
        &g.query[slot / 2]
    } else {
        &g.candidate[slot / 2]
    }
}

fn check_batch(batch: &[TrainPair], config: &TrainConfig) -> Result<()> {
    if batch.len() != config.batch_size {
        return Err(Error::invalid(format!(
            "batch has {} pairs, configured batch size is {}",
            batch.len(),
            config.batch_size
        )));
    }
    Ok(())
}

/// One Adam step with all intermediates kept through backward.
pub fn train_step_full(
    params: &mut EncoderParams,
    optimizer: &mut Adam,
    batch: &[TrainPair],
    corpus: &PairedCorpus,
    config: &TrainConfig,
    step_seed: u64,
) -> Result<StepReport> {
    check_batch(batch, config)?;
    let bg = batch_gradients(params, batch, corpus, config, step_seed, Schedule::Full)?;
    apply(params, optimizer, bg)
}

/// One Adam step using the two-pass cached schedule with
/// `config.chunk_size` pairs per chunk.
pub fn train_step_cached(
    params: &mut EncoderParams,
    optimizer: &mut Adam,
    batch: &[TrainPair],
    corpus: &PairedCorpus,
    config: &TrainConfig,
    step_seed: u64,
) -> Result<StepReport> {
    check_batch(batch, config)?;
    let schedule = Schedule::Cached {
        chunk_size: config.chunk_size,
    };
    let bg = batch_gradients(params, batch, corpus, config, step_seed, schedule)?;
    apply(params, optimizer, bg)
}

fn apply(
    params: &mut EncoderParams,
    optimizer: &mut Adam,
    bg: BatchGradients,
) -> Result<StepReport> {
    if !bg.loss.is_finite() || !bg.grads.iter().all(|(_, m)| m.is_finite()) {
        return Err(Error::NonFinite("training gradients".into()));
    }
    optimizer.step(params, &bg.grads);
    Ok(StepReport {
        loss: bg.loss,
        accuracy: bg.accuracy,
        peak_transient_bytes: bg.peak_transient_bytes,
    })
}

/// Draws batches without replacement, reshuffling at each epoch boundary
/// from a seed derived from the epoch number. A trailing partial batch is
/// dropped.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    seed: u64,
    tag: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl EpochSampler {
    pub fn new(len: usize, seed: u64, tag: u64) -> Self {
        let mut s = Self {
            seed,
            tag,
            epoch: 0,
            order: (0..len).collect(),
            pos: 0,
        };
        s.shuffle();
        s
    }

    fn shuffle(&mut self) {
        self.order.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(self.seed, self.tag, self.epoch));
        self.order.shuffle(&mut rng);
        self.pos = 0;
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        assert!(size <= self.order.len(), "batch larger than dataset");
        if self.pos + size > self.order.len() {
            self.epoch += 1;
            self.shuffle();
        }
        let batch = self.order[self.pos..self.pos + size].to_vec();
        self.pos += size;
        batch
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LogEntry {
    pub step: usize,
    pub direction: Direction,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub log: Vec<LogEntry>,
}

/// Train from freshly initialized parameters.
pub fn train(
    corpus: &PairedCorpus,
    encoder: EncoderConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let params = EncoderParams::init(encoder, config.seed)?;
    train_from(params, corpus, config)
}

/// Alternates directions (image-to-recipe on even steps, recipe-to-image on
/// odd ones), one batch per step.
pub fn train_from(
    mut params: EncoderParams,
    corpus: &PairedCorpus,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if corpus.feature_dim() != params.config.feature_dim {
        return Err(Error::DimensionMismatch {
            expected: params.config.feature_dim,
            actual: corpus.feature_dim(),
            context: "corpus image features vs encoder".into(),
        });
    }
    if config.update == UpdateMode::AdapterOnly && params.config.adapter.is_none() {
        return Err(Error::invalid("adapter-only updates need an adapter"));
    }
    let (i2r, r2i) = build_direction_datasets(corpus, config.augment)?;
    for (name, ds) in [("i2r", &i2r), ("r2i", &r2i)] {
        if ds.len() < config.batch_size {
            return Err(Error::invalid(format!(
                "{name} dataset has {} pairs, fewer than batch size {}; use a smaller --batch-size",
                ds.len(),
                config.batch_size
            )));
        }
    }
    let mut samplers = [
        EpochSampler::new(i2r.len(), config.seed, seed::tags::SHUFFLE_I2R),
        EpochSampler::new(r2i.len(), config.seed, seed::tags::SHUFFLE_R2I),
    ];
    let mut optimizer = Adam::new(config.adam);
    let mut log = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let (direction, dataset, sampler) = if step % 2 == 0 {
            (Direction::ImageToRecipe, &i2r, &mut samplers[0])
        } else {
            (Direction::RecipeToImage, &r2i, &mut samplers[1])
        };
        let batch: Vec<TrainPair> = sampler
            .next_batch(config.batch_size)
            .into_iter()
            .map(|i| dataset[i].clone())
            .collect();
        let step_seed = seed::derive(config.seed, seed::tags::DROPOUT, step as u64);
        let report = if config.chunk_size < config.batch_size {
            train_step_cached(
                &mut params,
                &mut optimizer,
                &batch,
                corpus,
                config,
                step_seed,
            )?
        } else {
            train_step_full(
                &mut params,
                &mut optimizer,
                &batch,
                corpus,
                config,
                step_seed,
            )?
        };
        log.push(LogEntry {
            step,
            direction,
            loss: report.loss,
            accuracy: report.accuracy,
        });
    }
    Ok(TrainOutcome { params, log })
}
