//! Miniature bidirectional transformer encoder.
//!
//! Each token is embedded as `E[w] + PE[pos]` (no segment term) and passed
//! through post-norm transformer layers:
//!
//! ```text
//! X1  = LayerNorm(H + MultiHead(H) Wo + bo)
//! out = LayerNorm(X1 + GELU(X1 W1 + b1) W2 + b2)
//! ```
//!
//! where every head computes `softmax(Q K^T / sqrt(d_k)) V` and heads are
//! concatenated. The encoder's vocabulary is the corpus vocabulary; masked
//! positions use a dedicated mask embedding in place of `E[w]`.

mod layer;
mod linalg;
pub mod mlm;
pub mod provider;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub use layer::{attention_layer, LayerCache, LayerParams};
pub use mlm::{mask_positions, mlm_accuracy, mlm_loss, pretrain_mlm, MaskedSentence, MlmOutput, PretrainOptions, PretrainReport};
pub use provider::{open_external_vectors, write_context_vectors, ContextProvider, ExternalVectors};

pub(crate) use linalg::softmax_in_place;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub mask_fraction: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            layers: 2,
            heads: 4,
            dim: 64,
            ffn_dim: 256,
            max_len: 64,
            mask_fraction: 0.15,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.heads == 0 || self.ffn_dim == 0 || self.max_len == 0 {
            return Err(Error::Config(
                "encoder dim, heads, ffn_dim and max_len must be positive".into(),
            ));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "encoder dim {} is not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        if !(self.mask_fraction > 0.0 && self.mask_fraction < 1.0) {
            return Err(Error::Config(format!(
                "mask_fraction {} must lie in (0, 1)",
                self.mask_fraction
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub vocab_size: usize,
    /// `vocab_size x dim`; also the output layer of the MLM head.
    pub token_emb: Vec<f64>,
    /// `max_len x dim`
    pub pos_emb: Vec<f64>,
    pub mask_emb: Vec<f64>,
    pub layers: Vec<LayerParams>,
}

fn uniform(n: usize, bound: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
}

impl EncoderParams {
    pub fn init(config: &EncoderConfig, vocab_size: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        if vocab_size == 0 {
            return Err(Error::Config("encoder vocabulary is empty".into()));
        }
        let d = config.dim;
        let emb_bound = 0.1;
        let token_emb = uniform(vocab_size * d, emb_bound, rng);
        let pos_emb = uniform(config.max_len * d, emb_bound, rng);
        let mask_emb = uniform(d, emb_bound, rng);
        let layers = (0..config.layers)
            .map(|_| LayerParams::init(config, rng))
            .collect();
        Ok(EncoderParams {
            config: config.clone(),
            vocab_size,
            token_emb,
            pos_emb,
            mask_emb,
            layers,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.token_emb, &self.pos_emb, &self.mask_emb];
        for l in &self.layers {
            out.extend(l.tensors());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.token_emb, &mut self.pos_emb, &mut self.mask_emb];
        for l in &mut self.layers {
            out.extend(l.tensors_mut());
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &EncoderParams) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn token_row(&self, id: usize) -> &[f64] {
        let d = self.config.dim;
        &self.token_emb[id * d..(id + 1) * d]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer(&mut out, self)
            .map_err(|e| Error::Data(format!("{}: cannot serialize encoder: {}", path.display(), e)))?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let params: EncoderParams = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Data(format!("{}: invalid encoder checkpoint: {}", path.display(), e)))?;
        params.config.validate()?;
        params.check_shapes()?;
        Ok(params)
    }

    fn check_shapes(&self) -> Result<()> {
        let c = &self.config;
        let ok = self.token_emb.len() == self.vocab_size * c.dim
            && self.pos_emb.len() == c.max_len * c.dim
            && self.mask_emb.len() == c.dim
            && self.layers.len() == c.layers
            && self.layers.iter().all(|l| l.has_shape(c));
        if ok {
            Ok(())
        } else {
            Err(Error::Data("encoder checkpoint tensor shapes do not match its config".into()))
        }
    }
}

/// `h_i = E[w_i] + PE[i]`, or `mask + PE[i]` where `masked[i]` is set.
pub fn embed_inputs(ids: &[usize], params: &EncoderParams, masked: Option<&[bool]>) -> Result<Vec<f64>> {
    let d = params.config.dim;
    if ids.len() > params.config.max_len {
        return Err(Error::Data(format!(
            "sentence of {} tokens exceeds encoder max_len {}",
            ids.len(),
            params.config.max_len
        )));
    }
    let mut h = vec![0.0; ids.len() * d];
    for (pos, &id) in ids.iter().enumerate() {
        if id >= params.vocab_size {
            return Err(Error::Data(format!(
                "token id {} outside encoder vocabulary of {}",
                id, params.vocab_size
            )));
        }
        let is_masked = masked.is_some_and(|m| m[pos]);
        let tok = if is_masked { &params.mask_emb[..] } else { params.token_row(id) };
        let pe = &params.pos_emb[pos * d..(pos + 1) * d];
        for ((o, t), p) in h[pos * d..(pos + 1) * d].iter_mut().zip(tok).zip(pe) {
            *o = t + p;
        }
    }
    Ok(h)
}

/// Intermediate values of a full forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub masked: Vec<bool>,
    pub layers: Vec<LayerCache>,
    pub output: Vec<f64>,
}

pub fn forward(ids: &[usize], params: &EncoderParams, masked: Option<&[bool]>) -> Result<ForwardCache> {
    let mut h = embed_inputs(ids, params, masked)?;
    let n = ids.len();
    let mut caches = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let cache = layer::forward(lp, &params.config, &h, n);
        h = cache.output.clone();
        caches.push(cache);
    }
    Ok(ForwardCache {
        masked: masked.map_or_else(|| vec![false; n], <[bool]>::to_vec),
        layers: caches,
        output: h,
    })
}

/// Contextual output vectors `[o_1 .. o_n]`, row-major `n x dim`.
pub fn encode(ids: &[usize], params: &EncoderParams) -> Result<Vec<f64>> {
    Ok(forward(ids, params, None)?.output)
}

/// Accumulate parameter gradients given `d_output` (`n x dim`) for a cached
/// forward pass.
pub fn backward(ids: &[usize], params: &EncoderParams, cache: &ForwardCache, d_output: &[f64], grads: &mut EncoderParams) {
    let d = params.config.dim;
    let n = ids.len();
    let mut g = d_output.to_vec();
    for (idx, lc) in cache.layers.iter().enumerate().rev() {
        g = layer::backward(&params.layers[idx], &params.config, lc, n, &g, &mut grads.layers[idx]);
    }
    for (pos, &id) in ids.iter().enumerate() {
        let gh = &g[pos * d..(pos + 1) * d];
        let tok = if cache.masked[pos] {
            &mut grads.mask_emb[..]
        } else {
            &mut grads.token_emb[id * d..(id + 1) * d]
        };
        for (t, v) in tok.iter_mut().zip(gh) {
            *t += v;
        }
        for (p, v) in grads.pos_emb[pos * d..(pos + 1) * d].iter_mut().zip(gh) {
            *p += v;
        }
    }
}
