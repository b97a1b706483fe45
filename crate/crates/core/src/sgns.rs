//! Skip-gram baseline with negative sampling.
//!
//! Every `(center, context)` pair inside a `±window` span contributes
//!
//! ```text
//! -ln σ(v'_ctx · v_c) - Σ_neg ln σ(-v'_neg · v_c)
//! ```
//!
//! with fresh negatives per pair. Frequent tokens are randomly discarded
//! before windowing. The output lexicon is the center table `V`.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;

use crate::corpus::{subsample_prob, NoiseTable, SentenceStream, Vocab, DEFAULT_SUBSAMPLE};
use crate::embed_store::{dot, EmbeddingMatrix, TableRole};
use crate::error::{Error, Result};
use crate::hogwild::{RowStore, SharedMatrix};
use crate::optim::{clip_norm, neg_log_sigmoid, shards, sigmoid, LinearDecay, LogRecord, TrainReport};
use crate::rng::{self, Rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub lr: f64,
    /// L2 cap applied to each parameter vector's gradient.
    pub clip: f64,
    pub epochs: usize,
    /// Subsampling threshold; `None` keeps every token.
    pub subsample: Option<f64>,
    pub seed: u64,
    pub workers: usize,
    /// Emit a log record every this many steps (0: only at epoch ends).
    pub log_every: u64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 300,
            window: 5,
            negatives: 5,
            lr: 0.08,
            clip: 5.0,
            epochs: 5,
            subsample: Some(DEFAULT_SUBSAMPLE),
            seed: 1,
            workers: 1,
            log_every: 0,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negatives == 0 || self.workers == 0 {
            return Err(Error::Config(
                "dim, window, negatives and workers must all be at least 1".into(),
            ));
        }
        if !(self.lr > 0.0) || !(self.clip > 0.0) {
            return Err(Error::Config("lr and clip must be positive".into()));
        }
        if let Some(t) = self.subsample {
            if !(t > 0.0) {
                return Err(Error::Config("subsample threshold must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Full-softmax probability of `context` given `center`. Quadratic in the
/// vocabulary; intended for small tables.
pub fn softmax_prob(center: usize, context: usize, centers: &EmbeddingMatrix, contexts: &EmbeddingMatrix) -> f64 {
    let v = centers.row(center);
    let logits: Vec<f64> = (0..contexts.rows()).map(|k| dot(contexts.row(k), v)).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    (logits[context] - max).exp() / z
}

/// Loss and unclipped gradients of one positive pair with its negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradients {
    pub loss: f64,
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn pair_gradients(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> PairGradients {
    let pos = dot(context, center);
    let mut loss = neg_log_sigmoid(pos);
    let g_pos = sigmoid(pos) - 1.0;
    let mut g_center: Vec<f64> = context.iter().map(|c| g_pos * c).collect();
    let g_context: Vec<f64> = center.iter().map(|c| g_pos * c).collect();
    let mut g_negs = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let q = dot(neg, center);
        loss += neg_log_sigmoid(-q);
        let g = sigmoid(q);
        for (gc, n) in g_center.iter_mut().zip(neg.iter()) {
            *gc += g * n;
        }
        g_negs.push(center.iter().map(|c| g * c).collect());
    }
    PairGradients {
        loss,
        center: g_center,
        context: g_context,
        negatives: g_negs,
    }
}

/// Reusable buffers for [`sgns_step`].
#[derive(Debug, Default)]
pub struct Workspace {
    center: Vec<f64>,
    context: Vec<f64>,
    negatives: Vec<Vec<f64>>,
    grad_rows: Vec<(usize, Vec<f64>)>,
}

/// One SGD step on a positive pair and its negatives. Gradients are summed
/// per output row, each clipped to `clip` in L2 norm, then applied.
#[allow(clippy::too_many_arguments)]
pub fn sgns_step<C: RowStore, X: RowStore>(
    center: usize,
    context: usize,
    negatives: &[usize],
    centers: &mut C,
    contexts: &mut X,
    lr: f64,
    clip: f64,
    ws: &mut Workspace,
) -> Result<f64> {
    if negatives.contains(&context) {
        return Err(Error::Data(format!(
            "negative samples must not contain the context id {}",
            context
        )));
    }
    let d = centers.dim();
    ws.center.resize(d, 0.0);
    ws.context.resize(d, 0.0);
    centers.read_row(center, &mut ws.center);
    contexts.read_row(context, &mut ws.context);
    ws.negatives.resize_with(negatives.len(), Vec::new);
    for (buf, &id) in ws.negatives.iter_mut().zip(negatives) {
        buf.resize(d, 0.0);
        contexts.read_row(id, buf);
    }
    let neg_refs: Vec<&[f64]> = ws.negatives.iter().map(Vec::as_slice).collect();
    let mut grads = pair_gradients(&ws.center, &ws.context, &neg_refs);

    clip_norm(&mut grads.center, clip);
    centers.add_row(center, -lr, &grads.center);

    ws.grad_rows.clear();
    ws.grad_rows.push((context, std::mem::take(&mut grads.context)));
    for (&id, g) in negatives.iter().zip(grads.negatives) {
        match ws.grad_rows.iter_mut().find(|(rid, _)| *rid == id) {
            Some((_, acc)) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            None => ws.grad_rows.push((id, g)),
        }
    }
    for (id, g) in ws.grad_rows.iter_mut() {
        clip_norm(g, clip);
        contexts.add_row(*id, -lr, g);
    }
    Ok(grads.loss)
}

/// Number of `(center, context)` pairs in a sentence of `n` tokens with a
/// `±window` span truncated at the sentence edges.
pub fn pair_count(n: usize, window: usize) -> u64 {
    (0..n)
        .map(|i| (i.min(window) + (n - 1 - i).min(window)) as u64)
        .sum()
}

#[derive(Debug, Clone)]
pub struct SgnsOutput {
    /// Center table `V`, the baseline's output lexicon.
    pub centers: EmbeddingMatrix,
    /// Context table `V'`.
    pub contexts: EmbeddingMatrix,
    pub report: TrainReport,
}

struct EpochStats {
    loss: f64,
    steps: u64,
    log: Vec<LogRecord>,
}

struct Shared<'a> {
    noise: &'a NoiseTable,
    discard: Option<Vec<f64>>,
    config: &'a SgnsConfig,
    schedule: LinearDecay,
    progress: &'a AtomicU64,
    epoch: usize,
}

fn train_shard<C: RowStore, X: RowStore>(
    sentences: &SentenceStream,
    range: std::ops::Range<usize>,
    centers: &mut C,
    contexts: &mut X,
    rng: &mut Rng,
    sh: &Shared<'_>,
) -> Result<EpochStats> {
    let cfg = sh.config;
    let mut ws = Workspace::default();
    let mut kept = Vec::new();
    let mut negs = Vec::with_capacity(cfg.negatives);
    let mut stats = EpochStats {
        loss: 0.0,
        steps: 0,
        log: Vec::new(),
    };
    let (mut window_loss, mut window_steps) = (0.0, 0u64);
    for idx in range {
        let ids = sentences.get(idx);
        let progress = sh.progress.fetch_add(ids.len() as u64, Ordering::Relaxed);
        let lr = sh.schedule.at(progress);
        kept.clear();
        match &sh.discard {
            Some(p) => kept.extend(ids.iter().copied().filter(|&id| rng.gen::<f64>() >= p[id])),
            None => kept.extend_from_slice(ids),
        }
        let n = kept.len();
        for i in 0..n {
            let lo = i.saturating_sub(cfg.window);
            let hi = (i + cfg.window + 1).min(n);
            for j in lo..hi {
                if j == i {
                    continue;
                }
                let context = kept[j];
                negs.clear();
                for _ in 0..cfg.negatives {
                    negs.push(sh.noise.sample_negative(rng, &[context])?);
                }
                let loss = sgns_step(kept[i], context, &negs, centers, contexts, lr, cfg.clip, &mut ws)?;
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!(
                        "non-finite skip-gram loss in epoch {} at sentence {}",
                        sh.epoch, idx
                    )));
                }
                stats.loss += loss;
                stats.steps += 1;
                window_loss += loss;
                window_steps += 1;
                if cfg.log_every > 0 && window_steps == cfg.log_every {
                    stats.log.push(LogRecord {
                        epoch: sh.epoch,
                        step: stats.steps,
                        loss: window_loss / window_steps as f64,
                        lr,
                    });
                    window_loss = 0.0;
                    window_steps = 0;
                }
            }
        }
    }
    Ok(stats)
}

/// Train both tables. Single-threaded runs are deterministic in the seed;
/// `workers > 1` shards sentences across threads that update shared tables
/// without locks.
pub fn train_sgns(sentences: &SentenceStream, vocab: &Vocab, config: &SgnsConfig) -> Result<SgnsOutput> {
    config.validate()?;
    if sentences.is_empty() {
        return Err(Error::Data("skip-gram training corpus is empty".into()));
    }
    let mut init = rng::stream(config.seed, Stream::SgnsInit);
    let mut centers = EmbeddingMatrix::init_uniform(vocab.len(), config.dim, TableRole::Center, &mut init);
    let mut contexts = EmbeddingMatrix::init_uniform(vocab.len(), config.dim, TableRole::Context, &mut init);
    let noise = NoiseTable::new(vocab);
    let discard = config.subsample.map(|t| {
        (0..vocab.len())
            .map(|id| subsample_prob(vocab.count(id), vocab.total_tokens(), t))
            .collect()
    });
    let total = (config.epochs * sentences.token_count()) as u64;
    let progress = AtomicU64::new(0);
    let mut report = TrainReport::default();
    let mut rng = rng::stream(config.seed, Stream::SgnsTrain);
    let mut worker_rngs: Vec<Rng> = (0..config.workers)
        .map(|w| rng::worker_stream(config.seed, Stream::SgnsTrain, w + 1))
        .collect();

    for epoch in 1..=config.epochs {
        let sh = Shared {
            noise: &noise,
            discard: discard.clone(),
            config,
            schedule: LinearDecay::new(config.lr, total),
            progress: &progress,
            epoch,
        };
        let stats = if config.workers == 1 {
            vec![train_shard(sentences, 0..sentences.len(), &mut centers, &mut contexts, &mut rng, &sh)?]
        } else {
            let shared_c = SharedMatrix::from_matrix(&centers);
            let shared_x = SharedMatrix::from_matrix(&contexts);
            let results: Vec<Result<EpochStats>> = std::thread::scope(|scope| {
                let handles: Vec<_> = shards(sentences.len(), config.workers)
                    .into_iter()
                    .zip(worker_rngs.iter_mut())
                    .map(|(range, wrng)| {
                        let (sc, sx, sh) = (&shared_c, &shared_x, &sh);
                        scope.spawn(move || {
                            let (mut c, mut x) = (sc, sx);
                            train_shard(sentences, range, &mut c, &mut x, wrng, sh)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            });
            centers = shared_c.to_matrix();
            contexts = shared_x.to_matrix();
            results.into_iter().collect::<Result<Vec<_>>>()?
        };
        let loss: f64 = stats.iter().map(|s| s.loss).sum();
        let steps: u64 = stats.iter().map(|s| s.steps).sum();
        let mean = if steps > 0 { loss / steps as f64 } else { 0.0 };
        for s in stats {
            report.log.extend(s.log);
        }
        report.steps += steps;
        report.epoch_losses.push(mean);
        report.log.push(LogRecord {
            epoch,
            step: report.steps,
            loss: mean,
            lr: LinearDecay::new(config.lr, total).at(progress.load(Ordering::Relaxed)),
        });
    }
    if !centers.is_finite() || !contexts.is_finite() {
        return Err(Error::Divergence("skip-gram tables contain non-finite values".into()));
    }
    Ok(SgnsOutput {
        centers,
        contexts,
        report,
    })
}
