use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{self, DropoutMode};
use super::param::Parameter;
use super::real::Real;
use super::tensor::Tensor;
use crate::corpus::{EmbeddingMatrix, TokenBatch, PAD};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub kernel_sizes: Vec<usize>,
    pub filters_per_kernel: usize,
    pub dropout_p: f64,
    pub max_len: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub freeze_embeddings: bool,
}

impl EncoderConfig {
    /// Defaults (200-d embeddings, kernels 3/4/5 with 100 filters each,
    /// dropout 0.5, 200 tokens) for the given vocabulary and label set.
    pub fn new(vocab_size: usize, num_classes: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 200,
            kernel_sizes: vec![3, 4, 5],
            filters_per_kernel: 100,
            dropout_p: 0.5,
            max_len: 200,
            num_classes,
            freeze_embeddings: false,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.filters_per_kernel * self.kernel_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.vocab_size < 2 {
            return bad("vocab_size must be >= 2");
        }
        if self.embed_dim == 0 || self.filters_per_kernel == 0 || self.max_len == 0 {
            return bad("embed_dim, filters_per_kernel and max_len must be positive");
        }
        if self.kernel_sizes.is_empty() || self.kernel_sizes.contains(&0) {
            return bad("kernel_sizes must be a non-empty list of positive sizes");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must lie in [0, 1)");
        }
        if self.num_classes < 2 {
            return bad("num_classes must be >= 2");
        }
        Ok(())
    }
}

/// Pluggable sequence encoder: token ids in, one pooled feature row per
/// document out, with a matching backward pass.
pub trait SequenceEncoder<T: Real>: Send + Sync {
    type Cache: Send + Sync;

    fn feature_dim(&self) -> usize;

    /// Inference only; no activations kept.
    fn encode(&self, tokens: &TokenBatch) -> Result<Tensor<T>>;

    fn encode_with_cache(&self, tokens: &TokenBatch) -> Result<(Tensor<T>, Self::Cache)>;

    /// Accumulates parameter gradients from `dpooled` (`[batch × feature_dim]`).
    fn backward(&mut self, cache: &Self::Cache, dpooled: &Tensor<T>) -> Result<()>;

    fn parameters(&self) -> Vec<&Parameter<T>>;

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<T> {
    pub kernel: usize,
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}

/// Embedding → per-kernel convolution → ReLU → max-pool over time.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnEncoder<T> {
    pub embedding: Parameter<T>,
    pub convs: Vec<ConvBlock<T>>,
    pub embed_dim: usize,
    pub filters: usize,
}

#[derive(Debug, Clone)]
struct KernelCache<T> {
    n_win: usize,
    pre: Vec<T>,
    argmax: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DocCache<T> {
    ids: Vec<u32>,
    x: Vec<T>,
    kernels: Vec<KernelCache<T>>,
}

#[derive(Debug, Clone)]
pub struct CnnCache<T> {
    docs: Vec<DocCache<T>>,
}

/// Index one past the last non-PAD token.
fn sequence_len(ids: &[u32]) -> usize {
    ids.iter().rposition(|&id| id != PAD).map_or(0, |i| i + 1)
}

/// Windows per kernel: fully inside the sequence, or a single zero-padded
/// window when the sequence is shorter than the kernel. Empty sequences have none.
fn window_count(len: usize, kernel: usize) -> usize {
    if len == 0 {
        0
    } else {
        (len + 1).saturating_sub(kernel).max(1)
    }
}

impl<T: Real> CnnEncoder<T> {
    fn max_kernel(&self) -> usize {
        self.convs.iter().map(|c| c.kernel).max().unwrap_or(1)
    }

    fn check_ids(&self, tokens: &TokenBatch) -> Result<()> {
        let vocab_size = self.embedding.shape()[0];
        if let Some(&id) = tokens.ids().iter().find(|&&id| id as usize >= vocab_size) {
            return Err(Error::TokenOutOfRange { id, vocab_size });
        }
        Ok(())
    }

    fn encode_doc(&self, ids: &[u32], keep: bool, out: &mut [T]) -> Option<DocCache<T>> {
        let dim = self.embed_dim;
        let len = sequence_len(ids);
        let rows = len.max(self.max_kernel());
        let x = layers::embedding_lookup(self.embedding.value.data(), dim, &ids[..len], rows);
        let mut kernels = Vec::new();
        for (k, conv) in self.convs.iter().enumerate() {
            let n_win = window_count(len, conv.kernel);
            let pre = layers::conv1d_forward(
                &x,
                dim,
                conv.weight.value.data(),
                conv.bias.value.data(),
                conv.kernel,
                n_win,
            );
            let act = layers::relu_forward(&pre);
            let (pooled, argmax) = layers::max_pool_time_forward(&act, n_win, self.filters);
            out[k * self.filters..(k + 1) * self.filters].copy_from_slice(&pooled);
            if keep {
                kernels.push(KernelCache { n_win, pre, argmax });
            }
        }
        keep.then(|| DocCache {
            ids: ids[..len].to_vec(),
            x,
            kernels,
        })
    }

    fn run(&self, tokens: &TokenBatch, keep: bool) -> Result<(Tensor<T>, Vec<Option<DocCache<T>>>)> {
        self.check_ids(tokens)?;
        let fdim = self.feature_dim();
        let mut pooled = Tensor::zeros(&[tokens.batch_size(), fdim]);
        let caches: Vec<Option<DocCache<T>>> = pooled
            .data_mut()
            .par_chunks_mut(fdim)
            .enumerate()
            .map(|(b, out)| self.encode_doc(tokens.row(b), keep, out))
            .collect();
        Ok((pooled, caches))
    }
}

impl<T: Real> SequenceEncoder<T> for CnnEncoder<T> {
    type Cache = CnnCache<T>;

    fn feature_dim(&self) -> usize {
        self.filters * self.convs.len()
    }

    fn encode(&self, tokens: &TokenBatch) -> Result<Tensor<T>> {
        Ok(self.run(tokens, false)?.0)
    }

    fn encode_with_cache(&self, tokens: &TokenBatch) -> Result<(Tensor<T>, CnnCache<T>)> {
        let (pooled, caches) = self.run(tokens, true)?;
        Ok((
            pooled,
            CnnCache {
                docs: caches.into_iter().map(Option::unwrap).collect(),
            },
        ))
    }

    fn backward(&mut self, cache: &CnnCache<T>, dpooled: &Tensor<T>) -> Result<()> {
        let fdim = self.feature_dim();
        if dpooled.shape() != [cache.docs.len(), fdim] {
            return Err(Error::Shape(format!(
                "pooled gradient {:?} vs cached batch of {} x {fdim}",
                dpooled.shape(),
                cache.docs.len()
            )));
        }
        let dim = self.embed_dim;
        let frozen = self.embedding.frozen;
        for (b, doc) in cache.docs.iter().enumerate() {
            let drow = dpooled.row(b);
            let mut dx = (!frozen).then(|| vec![T::zero(); doc.x.len()]);
            for (k, (conv, kc)) in self.convs.iter_mut().zip(&doc.kernels).enumerate() {
                let dact = layers::max_pool_time_backward(
                    &drow[k * self.filters..(k + 1) * self.filters],
                    &kc.argmax,
                    kc.n_win,
                );
                let dpre = layers::relu_backward(&kc.pre, &dact);
                layers::conv1d_backward(
                    &doc.x,
                    dim,
                    conv.weight.value.data(),
                    conv.kernel,
                    kc.n_win,
                    &dpre,
                    conv.weight.grad.data_mut(),
                    conv.bias.grad.data_mut(),
                    dx.as_deref_mut(),
                );
            }
            if let Some(dx) = dx {
                layers::embedding_backward(self.embedding.grad.data_mut(), dim, &doc.ids, &dx);
            }
        }
        Ok(())
    }

    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut v = vec![&self.embedding];
        for c in &self.convs {
            v.push(&c.weight);
            v.push(&c.bias);
        }
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = vec![&mut self.embedding];
        for c in &mut self.convs {
            v.push(&mut c.weight);
            v.push(&mut c.bias);
        }
        v
    }
}

/// Representations `r_i` (post-dropout features) with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch<T> {
    pub features: Tensor<T>,
    pub labels: Vec<usize>,
    pub dim: usize,
}

impl<T: Real> FeatureBatch<T> {
    pub fn new(features: Tensor<T>, labels: Vec<usize>) -> Result<Self> {
        if features.shape().len() != 2 || features.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "features {:?} with {} labels",
                features.shape(),
                labels.len()
            )));
        }
        let dim = features.row_len();
        Ok(Self {
            features,
            labels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.features.row(i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T> {
    pub config: EncoderConfig,
    pub encoder: CnnEncoder<T>,
    pub fc_weight: Parameter<T>,
    pub fc_bias: Parameter<T>,
    pub rng_seed: u64,
}

/// Activations kept by [`ModelState::forward`] for the backward pass.
pub struct ForwardCache<T> {
    encoder: CnnCache<T>,
    mask: Tensor<T>,
    features: Tensor<T>,
}

pub struct ForwardOutput<T> {
    pub logits: Tensor<T>,
    /// Post-dropout features `[batch × feature_dim]`.
    pub features: Tensor<T>,
    pub cache: ForwardCache<T>,
}

fn uniform_tensor<T: Real>(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::lit(rng.random_range(-bound..bound)))
}

impl<T: Real> ModelState<T> {
    /// Fresh model. Conv and linear weights are `U(±1/√fan_in)`; embeddings
    /// come from `embeddings` or, if absent, the N(0, 0.1²) scheme.
    pub fn new(config: EncoderConfig, embeddings: Option<&EmbeddingMatrix>, seed: u64) -> Result<Self> {
        config.validate()?;
        let (v, e) = (config.vocab_size, config.embed_dim);
        let random;
        let table = match embeddings {
            Some(m) => {
                if m.vocab_size != v || m.embed_dim != e {
                    return Err(Error::Shape(format!(
                        "embedding matrix {}x{} vs config {v}x{e}",
                        m.vocab_size, m.embed_dim
                    )));
                }
                m
            }
            None => {
                random = EmbeddingMatrix::random(v, e, seed ^ 0x5EED_E3B0);
                &random
            }
        };
        let mut embedding = Parameter::new(
            "embedding",
            Tensor::new(vec![v, e], table.values.iter().map(|&x| T::lit(x as f64)).collect())?,
        );
        embedding.frozen = config.freeze_embeddings;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = config.filters_per_kernel;
        let convs = config
            .kernel_sizes
            .iter()
            .map(|&k| {
                let bound = 1.0 / ((k * e) as f64).sqrt();
                ConvBlock {
                    kernel: k,
                    weight: Parameter::new(format!("conv{k}.weight"), uniform_tensor(&[f, k, e], bound, &mut rng)),
                    bias: Parameter::new(format!("conv{k}.bias"), uniform_tensor(&[f], bound, &mut rng)),
                }
            })
            .collect();
        let fdim = config.feature_dim();
        let bound = 1.0 / (fdim as f64).sqrt();
        let fc_weight = Parameter::new("fc.weight", uniform_tensor(&[config.num_classes, fdim], bound, &mut rng));
        let fc_bias = Parameter::new("fc.bias", uniform_tensor(&[config.num_classes], bound, &mut rng));
        Ok(Self {
            encoder: CnnEncoder {
                embedding,
                convs,
                embed_dim: e,
                filters: f,
            },
            config,
            fc_weight,
            fc_bias,
            rng_seed: seed,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim()
    }

    /// Dropout then the linear layer for one pooled row. Draws exactly
    /// `feature_dim` uniforms from `rng` in stochastic modes.
    pub fn head<R: Rng + ?Sized>(&self, pooled: &[T], mode: DropoutMode, rng: &mut R) -> (Vec<T>, Vec<T>, Vec<T>) {
        let mask: Vec<T> = layers::dropout_mask(pooled.len(), self.config.dropout_p, mode, rng);
        let features: Vec<T> = pooled.iter().zip(&mask).map(|(&p, &m)| p * m).collect();
        let logits = layers::linear_forward(&features, self.fc_weight.value.data(), self.fc_bias.value.data(), 1);
        (mask, features, logits)
    }

    /// Deterministic pooled (pre-dropout) encoder output.
    pub fn pooled(&self, tokens: &TokenBatch) -> Result<Tensor<T>> {
        self.encoder.encode(tokens)
    }

    pub fn forward<R: Rng + ?Sized>(&self, tokens: &TokenBatch, mode: DropoutMode, rng: &mut R) -> Result<ForwardOutput<T>> {
        let (pooled, enc_cache) = self.encoder.encode_with_cache(tokens)?;
        let batch = tokens.batch_size();
        let (fdim, c) = (self.feature_dim(), self.num_classes());
        let mut mask = Tensor::zeros(&[batch, fdim]);
        let mut features = Tensor::zeros(&[batch, fdim]);
        let mut logits = Tensor::zeros(&[batch, c]);
        for b in 0..batch {
            let (m, f, l) = self.head(pooled.row(b), mode, rng);
            mask.row_mut(b).copy_from_slice(&m);
            features.row_mut(b).copy_from_slice(&f);
            logits.row_mut(b).copy_from_slice(&l);
        }
        Ok(ForwardOutput {
            logits,
            features: features.clone(),
            cache: ForwardCache {
                encoder: enc_cache,
                mask,
                features,
            },
        })
    }

    /// Deterministic logits for inference.
    pub fn logits(&self, tokens: &TokenBatch) -> Result<Tensor<T>> {
        let pooled = self.pooled(tokens)?;
        let batch = tokens.batch_size();
        let data = layers::linear_forward(pooled.data(), self.fc_weight.value.data(), self.fc_bias.value.data(), batch);
        Tensor::new(vec![batch, self.num_classes()], data)
    }

    /// Accumulates gradients of `CE + metric` into every parameter.
    /// `dfeatures` is the metric-loss gradient w.r.t. the post-dropout features.
    pub fn backward(&mut self, cache: &ForwardCache<T>, dlogits: &Tensor<T>, dfeatures: Option<&Tensor<T>>) -> Result<()> {
        let batch = cache.features.rows();
        let fdim = self.feature_dim();
        if dlogits.shape() != [batch, self.num_classes()] {
            return Err(Error::Shape(format!(
                "dlogits {:?}, expected [{batch}, {}]",
                dlogits.shape(),
                self.num_classes()
            )));
        }
        let mut dfeat = layers::linear_backward(
            cache.features.data(),
            self.fc_weight.value.data(),
            dlogits.data(),
            batch,
            self.fc_weight.grad.data_mut(),
            self.fc_bias.grad.data_mut(),
        );
        if let Some(extra) = dfeatures {
            if extra.shape() != [batch, fdim] {
                return Err(Error::Shape(format!(
                    "dfeatures {:?}, expected [{batch}, {fdim}]",
                    extra.shape()
                )));
            }
            for (d, e) in dfeat.iter_mut().zip(extra.data()) {
                *d += *e;
            }
        }
        for (d, m) in dfeat.iter_mut().zip(cache.mask.data()) {
            *d *= *m;
        }
        let dpooled = Tensor::new(vec![batch, fdim], dfeat)?;
        self.encoder.backward(&cache.encoder, &dpooled)
    }

    pub fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut v = self.encoder.parameters();
        v.push(&self.fc_weight);
        v.push(&self.fc_bias);
        v
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = self.encoder.parameters_mut();
        v.push(&mut self.fc_weight);
        v.push(&mut self.fc_bias);
        v
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    /// Same architecture and values in another precision.
    pub fn cast<U: Real>(&self) -> ModelState<U> {
        let cast_param = |p: &Parameter<T>| {
            let mut q = Parameter::new(p.name.clone(), p.value.cast());
            q.frozen = p.frozen;
            q
        };
        ModelState {
            config: self.config.clone(),
            encoder: CnnEncoder {
                embedding: cast_param(&self.encoder.embedding),
                convs: self
                    .encoder
                    .convs
                    .iter()
                    .map(|c| ConvBlock {
                        kernel: c.kernel,
                        weight: cast_param(&c.weight),
                        bias: cast_param(&c.bias),
                    })
                    .collect(),
                embed_dim: self.encoder.embed_dim,
                filters: self.encoder.filters,
            },
            fc_weight: cast_param(&self.fc_weight),
            fc_bias: cast_param(&self.fc_bias),
            rng_seed: self.rng_seed,
        }
    }
}
