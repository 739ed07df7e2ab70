//! Toy unified encoder.
//!
//! Both modalities pass through a linear map plus an optional low-rank
//! adapter:
//!
//! ```text
//! e = W·x + (alpha / rank) · B·A·dropout(x)
//! ```
//!
//! For recipes `x` is a hashed bag of whitespace tokens of the rendered
//! prompt (FNV-1a 64 with a fixed seed, modulo the bucket count). For images
//! `x` is the precomputed feature vector; the prompt text is not read.
//! Dropout touches only the adapter input and only in training mode, with
//! inverted scaling so evaluation needs no correction.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::prompting::{Modality, PromptedSample};
use crate::seed;

/// Embedding with a source id. Values are kept unnormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub id: String,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if values.is_empty() {
            return Err(Error::invalid(format!("embedding {id:?} has dimension 0")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding {id:?}")));
        }
        Ok(Self { id, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }
}

/// Cosine similarity; both inputs must be nonzero and of equal dimension.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
            context: format!("cosine({:?}, {:?})", a.id, b.id),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 {
        return Err(Error::ZeroNorm(a.id.clone()));
    }
    if nb == 0.0 {
        return Err(Error::ZeroNorm(b.id.clone()));
    }
    Ok(cosine_with_norms(&a.values, na, &b.values, nb))
}

/// `a·b / (|a||b|)` with precomputed norms. Every cosine in the crate goes
/// through here so that scores agree bitwise across call sites.
#[inline]
pub fn cosine_with_norms(a: &[f64], norm_a: f64, b: &[f64], norm_b: f64) -> f64 {
    dot(a, b) / (norm_a * norm_b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdapterConfig {
    pub rank: usize,
    pub alpha: f64,
    pub dropout: f64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            rank: 16,
            alpha: 64.0,
            dropout: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    /// Output embedding dimension.
    pub dim: usize,
    /// Hash buckets for text tokens.
    pub buckets: usize,
    /// Input image feature dimension.
    pub feature_dim: usize,
    pub hash_seed: u64,
    pub adapter: Option<AdapterConfig>,
}

pub const DEFAULT_DIM: usize = 256;
pub const DEFAULT_BUCKETS: usize = 4096;
pub const DEFAULT_HASH_SEED: u64 = 0x5349_4d4d_4552_0001;

impl EncoderConfig {
    pub fn new(feature_dim: usize) -> Self {
        Self {
            dim: DEFAULT_DIM,
            buckets: DEFAULT_BUCKETS,
            feature_dim,
            hash_seed: DEFAULT_HASH_SEED,
            adapter: Some(AdapterConfig::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.buckets == 0 || self.feature_dim == 0 {
            return Err(Error::invalid("encoder dimensions must be positive"));
        }
        if let Some(a) = &self.adapter {
            if a.rank == 0 {
                return Err(Error::invalid("adapter rank must be positive"));
            }
            if !(a.alpha > 0.0 && a.alpha.is_finite()) {
                return Err(Error::invalid("adapter alpha must be positive"));
            }
            if !(0.0..1.0).contains(&a.dropout) {
                return Err(Error::invalid("adapter dropout must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

/// Low-rank update `(alpha / rank) · up · down` on a frozen map.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankAdapter {
    /// `rank × in_dim`
    pub down: Matrix,
    /// `out_dim × rank`, zero at initialization.
    pub up: Matrix,
    pub alpha: f64,
    pub dropout: f64,
}

impl LowRankAdapter {
    pub fn init(in_dim: usize, out_dim: usize, cfg: &AdapterConfig, rng: &mut ChaCha8Rng) -> Self {
        Self {
            down: Matrix::gaussian(cfg.rank, in_dim, 1.0 / (in_dim as f64).sqrt(), rng),
            up: Matrix::zeros(out_dim, cfg.rank),
            alpha: cfg.alpha,
            dropout: cfg.dropout,
        }
    }

    pub fn rank(&self) -> usize {
        self.down.rows()
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank() as f64
    }
}

/// Parameter tensors in their fixed serialization and optimizer order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tensor {
    TextBase,
    ImageBase,
    TextDown,
    TextUp,
    ImageDown,
    ImageUp,
}

impl Tensor {
    pub const ALL: [Tensor; 6] = [
        Tensor::TextBase,
        Tensor::ImageBase,
        Tensor::TextDown,
        Tensor::TextUp,
        Tensor::ImageDown,
        Tensor::ImageUp,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_adapter(self) -> bool {
        !matches!(self, Tensor::TextBase | Tensor::ImageBase)
    }

    pub fn name(self) -> &'static str {
        match self {
            Tensor::TextBase => "text.base",
            Tensor::ImageBase => "image.base",
            Tensor::TextDown => "text.down",
            Tensor::TextUp => "text.up",
            Tensor::ImageDown => "image.down",
            Tensor::ImageUp => "image.up",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    /// `dim × buckets`
    pub text: Matrix,
    /// `dim × feature_dim`
    pub image: Matrix,
    pub text_adapter: Option<LowRankAdapter>,
    pub image_adapter: Option<LowRankAdapter>,
}

impl EncoderParams {
    /// Gaussian base weights (std `1/sqrt(dim)` for text, `1/sqrt(feature_dim)`
    /// for images) and adapters with a zero up-projection.
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, seed::tags::INIT, 0));
        let text = Matrix::gaussian(
            config.dim,
            config.buckets,
            1.0 / (config.dim as f64).sqrt(),
            &mut rng,
        );
        let image = Matrix::gaussian(
            config.dim,
            config.feature_dim,
            1.0 / (config.feature_dim as f64).sqrt(),
            &mut rng,
        );
        let (text_adapter, image_adapter) = match &config.adapter {
            Some(a) => (
                Some(LowRankAdapter::init(
                    config.buckets,
                    config.dim,
                    a,
                    &mut rng,
                )),
                Some(LowRankAdapter::init(
                    config.feature_dim,
                    config.dim,
                    a,
                    &mut rng,
                )),
            ),
            None => (None, None),
        };
        Ok(Self {
            config,
            text,
            image,
            text_adapter,
            image_adapter,
        })
    }

    pub fn tensor(&self, t: Tensor) -> Option<&Matrix> {
        match t {
            Tensor::TextBase => Some(&self.text),
            Tensor::ImageBase => Some(&self.image),
            Tensor::TextDown => self.text_adapter.as_ref().map(|a| &a.down),
            Tensor::TextUp => self.text_adapter.as_ref().map(|a| &a.up),
            Tensor::ImageDown => self.image_adapter.as_ref().map(|a| &a.down),
            Tensor::ImageUp => self.image_adapter.as_ref().map(|a| &a.up),
        }
    }

    pub fn tensor_mut(&mut self, t: Tensor) -> Option<&mut Matrix> {
        match t {
            Tensor::TextBase => Some(&mut self.text),
            Tensor::ImageBase => Some(&mut self.image),
            Tensor::TextDown => self.text_adapter.as_mut().map(|a| &mut a.down),
            Tensor::TextUp => self.text_adapter.as_mut().map(|a| &mut a.up),
            Tensor::ImageDown => self.image_adapter.as_mut().map(|a| &mut a.down),
            Tensor::ImageUp => self.image_adapter.as_mut().map(|a| &mut a.up),
        }
    }

    /// Consistency of shapes with the config, and finiteness.
    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        let expect = |t: Tensor, rows: usize, cols: usize| -> Result<()> {
            match self.tensor(t) {
                Some(m) if m.shape() == (rows, cols) => {
                    if m.is_finite() {
                        Ok(())
                    } else {
                        Err(Error::NonFinite(format!("parameter tensor {}", t.name())))
                    }
                }
                Some(m) => Err(Error::invalid(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    t.name(),
                    m.shape(),
                    (rows, cols)
                ))),
                None => Err(Error::invalid(format!("tensor {} missing", t.name()))),
            }
        };
        expect(Tensor::TextBase, c.dim, c.buckets)?;
        expect(Tensor::ImageBase, c.dim, c.feature_dim)?;
        match (&c.adapter, &self.text_adapter, &self.image_adapter) {
            (Some(a), Some(_), Some(_)) => {
                expect(Tensor::TextDown, a.rank, c.buckets)?;
                expect(Tensor::TextUp, c.dim, a.rank)?;
                expect(Tensor::ImageDown, a.rank, c.feature_dim)?;
                expect(Tensor::ImageUp, c.dim, a.rank)?;
                Ok(())
            }
            (None, None, None) => Ok(()),
            _ => Err(Error::invalid("adapter presence disagrees with config")),
        }
    }

    /// Hashed bag of whitespace tokens, sorted by bucket.
    pub fn text_features(&self, text: &str) -> Vec<(usize, f64)> {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for token in text.split_whitespace() {
            let bucket = (seed::fnv1a64(self.config.hash_seed, token.as_bytes())
                % self.config.buckets as u64) as usize;
            *counts.entry(bucket).or_insert(0.0) += 1.0;
        }
        counts.into_iter().collect()
    }
}

/// Adapter input after dropout, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) enum Input {
    Sparse(Vec<(usize, f64)>),
    Dense(Vec<f64>),
}

impl Input {
    fn len_bytes(&self) -> usize {
        match self {
            Input::Sparse(v) => v.len() * std::mem::size_of::<(usize, f64)>(),
            Input::Dense(v) => v.len() * std::mem::size_of::<f64>(),
        }
    }

    fn dropout(&self, rate: f64, rng: &mut ChaCha8Rng) -> Input {
        let keep = 1.0 - rate;
        let mut mask = |v: f64| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                v / keep
            }
        };
        match self {
            Input::Sparse(xs) => Input::Sparse(xs.iter().map(|&(c, v)| (c, mask(v))).collect()),
            Input::Dense(xs) => Input::Dense(xs.iter().map(|&v| mask(v)).collect()),
        }
    }
}

fn apply(m: &Matrix, x: &Input) -> Vec<f64> {
    match x {
        Input::Sparse(v) => m.matvec_sparse(v),
        Input::Dense(v) => m.matvec(v),
    }
}

fn accumulate_outer(m: &mut Matrix, scale: f64, u: &[f64], x: &Input) {
    match x {
        Input::Sparse(v) => m.add_outer_sparse(scale, u, v),
        Input::Dense(v) => m.add_outer(scale, u, v),
    }
}

/// Intermediate values of one encoding, enough to backpropagate.
#[derive(Debug, Clone)]
pub(crate) struct Forward {
    pub modality: Modality,
    input: Input,
    adapter_input: Option<Input>,
    hidden: Option<Vec<f64>>,
    pub output: Vec<f64>,
}

impl Forward {
    /// Bytes held by the intermediates (everything except the output).
    pub fn transient_bytes(&self) -> usize {
        self.input.len_bytes()
            + self.adapter_input.as_ref().map_or(0, Input::len_bytes)
            + self
                .hidden
                .as_ref()
                .map_or(0, |h| h.len() * std::mem::size_of::<f64>())
    }
}

pub(crate) fn forward(
    params: &EncoderParams,
    sample: &PromptedSample,
    image_features: Option<&EmbeddingVector>,
    train_rng: Option<&mut ChaCha8Rng>,
) -> Result<Forward> {
    let (base, adapter, input) = match sample.modality {
        Modality::Recipe => {
            if sample.text.trim().is_empty() {
                return Err(Error::invalid(format!(
                    "recipe sample {:?} has empty text",
                    sample.source_id
                )));
            }
            let x = params.text_features(&sample.text);
            (&params.text, params.text_adapter.as_ref(), Input::Sparse(x))
        }
        Modality::Image => {
            let f = image_features
                .ok_or_else(|| Error::MissingImageFeatures(sample.source_id.clone()))?;
            if f.dim() != params.config.feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: params.config.feature_dim,
                    actual: f.dim(),
                    context: format!("image features {:?}", f.id),
                });
            }
            (
                &params.image,
                params.image_adapter.as_ref(),
                Input::Dense(f.values.clone()),
            )
        }
    };

    let mut output = apply(base, &input);
    let (adapter_input, hidden) = match adapter {
        Some(a) => {
            let dropped = match train_rng {
                Some(rng) if a.dropout > 0.0 => input.dropout(a.dropout, rng),
                _ => input.clone(),
            };
            let hidden = apply(&a.down, &dropped);
            let delta = a.up.matvec(&hidden);
            let s = a.scale();
            for (o, d) in output.iter_mut().zip(&delta) {
                *o += s * d;
            }
            (Some(dropped), Some(hidden))
        }
        None => (None, None),
    };
    Ok(Forward {
        modality: sample.modality,
        input,
        adapter_input,
        hidden,
        output,
    })
}

/// Encode one prompted sample. Passing `train_rng` enables adapter dropout.
pub fn encode(
    params: &EncoderParams,
    sample: &PromptedSample,
    image_features: Option<&EmbeddingVector>,
    train_rng: Option<&mut ChaCha8Rng>,
) -> Result<EmbeddingVector> {
    let f = forward(params, sample, image_features, train_rng)?;
    EmbeddingVector::new(sample.source_id.clone(), f.output)
}

/// Per-tensor gradient buffers; `None` marks a tensor that is not trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    tensors: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Zero buffers for every tensor of `params` accepted by `trainable`.
    pub fn zeros(params: &EncoderParams, trainable: impl Fn(Tensor) -> bool) -> Self {
        let tensors = Tensor::ALL
            .iter()
            .map(|&t| {
                params
                    .tensor(t)
                    .filter(|_| trainable(t))
                    .map(|m| Matrix::zeros(m.rows(), m.cols()))
            })
            .collect();
        Self { tensors }
    }

    pub fn get(&self, t: Tensor) -> Option<&Matrix> {
        self.tensors[t.index()].as_ref()
    }

    pub fn get_mut(&mut self, t: Tensor) -> Option<&mut Matrix> {
        self.tensors[t.index()].as_mut()
    }

    pub fn insert(&mut self, t: Tensor, m: Matrix) {
        self.tensors[t.index()] = Some(m);
    }

    pub fn iter(&self) -> impl Iterator<Item = (Tensor, &Matrix)> {
        Tensor::ALL
            .iter()
            .zip(&self.tensors)
            .filter_map(|(&t, m)| m.as_ref().map(|m| (t, m)))
    }

    pub fn max_abs(&self) -> f64 {
        self.iter()
            .flat_map(|(_, m)| m.as_slice().iter())
            .fold(0.0, |acc: f64, v| acc.max(v.abs()))
    }
}

/// Accumulate parameter gradients of one encoding given `dL/d output`.
pub(crate) fn backward(
    params: &EncoderParams,
    fwd: &Forward,
    grad_out: &[f64],
    grads: &mut Gradients,
) {
    let (base_t, down_t, up_t, adapter) = match fwd.modality {
        Modality::Recipe => (
            Tensor::TextBase,
            Tensor::TextDown,
            Tensor::TextUp,
            params.text_adapter.as_ref(),
        ),
        Modality::Image => (
            Tensor::ImageBase,
            Tensor::ImageDown,
            Tensor::ImageUp,
            params.image_adapter.as_ref(),
        ),
    };
    if let Some(g) = grads.get_mut(base_t) {
        accumulate_outer(g, 1.0, grad_out, &fwd.input);
    }
    if let (Some(a), Some(x_drop), Some(hidden)) = (adapter, &fwd.adapter_input, &fwd.hidden) {
        let s = a.scale();
        if let Some(g) = grads.get_mut(up_t) {
            g.add_outer(s, grad_out, hidden);
        }
        if let Some(g) = grads.get_mut(down_t) {
            let back = a.up.tmatvec(grad_out);
            accumulate_outer(g, s, &back, x_drop);
        }
    }
}
