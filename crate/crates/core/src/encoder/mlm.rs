//! Masked language model objective and pretraining loop.
//!
//! A masked position's output vector is scored against every row of the
//! token embedding table, `softmax(E o)`, and the loss is the summed negative
//! log-likelihood of the true tokens.

use rand::seq::{index, SliceRandom};

use super::linalg::log_sum_exp;
use super::{backward, forward, EncoderConfig, EncoderParams};
use crate::corpus::SentenceStream;
use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};

/// Number of masked positions in a sentence of `n` tokens.
pub fn mask_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n.max(1))
}

/// Draw `max(1, round(fraction * n))` distinct positions, sorted.
pub fn mask_positions(n: usize, fraction: f64, rng: &mut Rng) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let mut pos = index::sample(rng, n, mask_count(n, fraction)).into_vec();
    pos.sort_unstable();
    pos
}

#[derive(Debug, Clone)]
pub struct MaskedSentence<'a> {
    pub ids: &'a [usize],
    pub masked: Vec<usize>,
}

pub struct MlmOutput {
    pub loss: f64,
    pub grads: EncoderParams,
    pub correct: usize,
    pub predictions: usize,
}

/// Summed MLM loss over a batch with gradients for every parameter.
pub fn mlm_loss(params: &EncoderParams, batch: &[MaskedSentence<'_>]) -> Result<MlmOutput> {
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    let mut correct = 0;
    let mut predictions = 0;
    let d = params.config.dim;
    let v = params.vocab_size;
    for ex in batch {
        let n = ex.ids.len();
        if ex.masked.is_empty() || ex.masked.iter().any(|&p| p >= n) {
            return Err(Error::Data("masked positions must be nonempty and inside the sentence".into()));
        }
        let mut flags = vec![false; n];
        for &p in &ex.masked {
            flags[p] = true;
        }
        let cache = forward(ex.ids, params, Some(&flags))?;
        let mut d_out = vec![0.0; n * d];
        let mut logits = vec![0.0; v];
        for &pos in &ex.masked {
            let o = &cache.output[pos * d..(pos + 1) * d];
            for (w, l) in logits.iter_mut().enumerate() {
                *l = params.token_row(w).iter().zip(o).map(|(a, b)| a * b).sum();
            }
            let lse = log_sum_exp(&logits);
            let target = ex.ids[pos];
            loss += lse - logits[target];
            predictions += 1;
            if argmax(&logits) == target {
                correct += 1;
            }
            let d_o = &mut d_out[pos * d..(pos + 1) * d];
            for (w, &l) in logits.iter().enumerate() {
                let mut dl = (l - lse).exp();
                if w == target {
                    dl -= 1.0;
                }
                let row = params.token_row(w);
                let grow = &mut grads.token_emb[w * d..(w + 1) * d];
                for t in 0..d {
                    d_o[t] += dl * row[t];
                    grow[t] += dl * o[t];
                }
            }
        }
        backward(ex.ids, params, &cache, &d_out, &mut grads);
    }
    Ok(MlmOutput {
        loss,
        grads,
        correct,
        predictions,
    })
}

/// Forward-only prediction of the masked tokens; returns `(loss, correct, predictions)`.
fn mlm_predict(params: &EncoderParams, ex: &MaskedSentence<'_>) -> Result<(f64, usize, usize)> {
    let n = ex.ids.len();
    let d = params.config.dim;
    let mut flags = vec![false; n];
    for &p in &ex.masked {
        flags[p] = true;
    }
    let cache = forward(ex.ids, params, Some(&flags))?;
    let mut logits = vec![0.0; params.vocab_size];
    let (mut loss, mut correct) = (0.0, 0);
    for &pos in &ex.masked {
        let o = &cache.output[pos * d..(pos + 1) * d];
        for (w, l) in logits.iter_mut().enumerate() {
            *l = params.token_row(w).iter().zip(o).map(|(a, b)| a * b).sum();
        }
        loss += log_sum_exp(&logits) - logits[ex.ids[pos]];
        if argmax(&logits) == ex.ids[pos] {
            correct += 1;
        }
    }
    Ok((loss, correct, ex.masked.len()))
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Top-1 accuracy on freshly masked positions, one mask draw per sentence.
pub fn mlm_accuracy(params: &EncoderParams, sentences: &SentenceStream, seed: u64) -> Result<f64> {
    let mut rng = rng::stream(seed, Stream::MaskEval);
    let (mut correct, mut total) = (0usize, 0usize);
    for ids in sentences.iter() {
        let masked = mask_positions(ids.len(), params.config.mask_fraction, &mut rng);
        let (_, c, t) = mlm_predict(params, &MaskedSentence { ids, masked })?;
        correct += c;
        total += t;
    }
    if total == 0 {
        return Err(Error::Data("no sentences to evaluate".into()));
    }
    Ok(correct as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOptions {
    pub epochs: usize,
    pub lr: f64,
    /// Sentences per SGD step.
    pub batch_size: usize,
    /// Global gradient norm cap per step.
    pub clip: f64,
    pub seed: u64,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            epochs: 5,
            lr: 0.05,
            batch_size: 8,
            clip: 5.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    /// Mean loss per masked token for each epoch.
    pub epoch_losses: Vec<f64>,
    /// Masked-token training accuracy for each epoch.
    pub epoch_accuracy: Vec<f64>,
}

/// Pretrain an encoder by SGD on the MLM loss. Sentence order is reshuffled
/// and masks redrawn every epoch; the learning rate decays linearly to a
/// tenth of its initial value.
pub fn pretrain_mlm(
    sentences: &SentenceStream,
    vocab_size: usize,
    config: &EncoderConfig,
    options: &PretrainOptions,
    mut on_epoch: impl FnMut(usize, f64, f64),
) -> Result<(EncoderParams, PretrainReport)> {
    config.validate()?;
    if sentences.is_empty() {
        return Err(Error::Data("cannot pretrain on an empty corpus".into()));
    }
    if sentences.max_len() > config.max_len {
        return Err(Error::Config(format!(
            "corpus contains a {}-token sentence but encoder max_len is {}",
            sentences.max_len(),
            config.max_len
        )));
    }
    if options.batch_size == 0 || !(options.lr > 0.0) {
        return Err(Error::Config("pretraining needs batch_size >= 1 and lr > 0".into()));
    }
    let mut params = EncoderParams::init(config, vocab_size, &mut rng::stream(options.seed, Stream::EncoderInit))?;
    let mut mask_rng = rng::stream(options.seed, Stream::Masking);
    let mut order_rng = rng::stream(options.seed, Stream::PretrainShuffle);
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let batches_per_epoch = sentences.len().div_ceil(options.batch_size);
    let schedule = crate::optim::LinearDecay::new(options.lr, (options.epochs * batches_per_epoch) as u64);
    let mut report = PretrainReport {
        epoch_losses: Vec::new(),
        epoch_accuracy: Vec::new(),
    };
    let mut step = 0u64;
    for epoch in 0..options.epochs {
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut correct, mut total) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(options.batch_size) {
            let batch: Vec<MaskedSentence<'_>> = chunk
                .iter()
                .map(|&idx| {
                    let ids = sentences.get(idx);
                    MaskedSentence {
                        ids,
                        masked: mask_positions(ids.len(), config.mask_fraction, &mut mask_rng),
                    }
                })
                .collect();
            let out = mlm_loss(&params, &batch)?;
            if !out.loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite MLM loss at epoch {} step {}",
                    epoch + 1,
                    step
                )));
            }
            loss_sum += out.loss;
            correct += out.correct;
            total += out.predictions;
            let scale = 1.0 / out.predictions as f64;
            let gnorm = out.grads.l2_norm() * scale;
            let clip_scale = if gnorm > options.clip { options.clip / gnorm } else { 1.0 };
            params.axpy(-schedule.at(step) * scale * clip_scale, &out.grads);
            step += 1;
        }
        let avg = loss_sum / total as f64;
        let acc = correct as f64 / total as f64;
        if !params.is_finite() {
            return Err(Error::Divergence(format!("non-finite encoder parameters after epoch {}", epoch + 1)));
        }
        on_epoch(epoch + 1, avg, acc);
        report.epoch_losses.push(avg);
        report.epoch_accuracy.push(acc);
    }
    Ok((params, report))
}
