//! Skip-gram with a contextual center representation.
//!
//! For center position `i` with contextual vector `o_i`:
//!
//! ```text
//! u_i     = U o_i
//! a_j     = softmax_j(u_i · v'_j)            over the in-window context words
//! v'_ctx  = Σ_j a_j v'_j
//! loss    = -ln σ(v'_ctx · u_i) - Σ_m ln σ(-v'_neg_m · u_i)
//! ```
//!
//! Sentences are kept whole (no subsampling) so the encoder sees the same
//! context it was trained on. With attention disabled the aggregate is the
//! plain mean of the context vectors. The learned context table `V'` is the
//! output lexicon; `U` is a by-product.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;

use crate::corpus::{NoiseTable, SentenceStream, Vocab};
use crate::embed_store::{axpy, dot, norm, EmbeddingMatrix, TableRole};
use crate::encoder::{self, softmax_in_place, ContextProvider, EncoderParams};
use crate::error::{Error, Result};
use crate::hogwild::{RowStore, SharedMatrix};
use crate::optim::{clip_norm, neg_log_sigmoid, shards, sigmoid, LinearDecay, LogRecord, TrainReport};
use crate::rng::{self, Rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct DynConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub lr: f64,
    pub clip: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Softmax attention over context words; `false` averages them uniformly.
    pub attention: bool,
    /// Keep built-in encoder weights fixed.
    pub freeze_encoder: bool,
    pub workers: usize,
    pub log_every: u64,
}

impl Default for DynConfig {
    fn default() -> Self {
        DynConfig {
            dim: 300,
            window: 5,
            negatives: 5,
            lr: 0.08,
            clip: 5.0,
            epochs: 5,
            seed: 1,
            attention: true,
            freeze_encoder: true,
            workers: 1,
            log_every: 0,
        }
    }
}

impl DynConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.negatives == 0 || self.workers == 0 {
            return Err(Error::Config(
                "dim, window, negatives and workers must all be at least 1".into(),
            ));
        }
        if !(self.lr > 0.0) || !(self.clip > 0.0) {
            return Err(Error::Config("lr and clip must be positive".into()));
        }
        if self.workers > 1 && !self.freeze_encoder {
            return Err(Error::Config(
                "an unfrozen encoder requires single-threaded training (workers = 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Linear map `U` from encoder space (`d`) to embedding space (`d_emb`),
/// stored as `d_emb` rows of length `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    matrix: EmbeddingMatrix,
}

impl Projection {
    /// Uniform in `±sqrt(6 / (d + d_emb))`.
    pub fn init(out_dim: usize, in_dim: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data = (0..out_dim * in_dim).map(|_| rng.gen_range(-bound..=bound)).collect();
        Projection {
            matrix: EmbeddingMatrix::from_vec(data, out_dim, in_dim, TableRole::Projection).unwrap(),
        }
    }

    pub fn from_matrix(matrix: EmbeddingMatrix) -> Self {
        Projection { matrix }
    }

    pub fn out_dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        &self.matrix
    }

    pub fn project(&self, o: &[f64]) -> Result<Vec<f64>> {
        if o.len() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim(),
                actual: o.len(),
            });
        }
        Ok((0..self.out_dim()).map(|r| dot(self.matrix.row(r), o)).collect())
    }
}

fn project_with<S: RowStore>(u_store: &S, rows: usize, o: &[f64], row_buf: &mut Vec<f64>) -> Vec<f64> {
    row_buf.resize(o.len(), 0.0);
    (0..rows)
        .map(|r| {
            u_store.read_row(r, row_buf);
            dot(row_buf, o)
        })
        .collect()
}

/// Softmax of `u · v'_j` over the context vectors, unscaled.
pub fn attention_weights(u: &[f64], contexts: &[&[f64]]) -> Result<Vec<f64>> {
    if contexts.is_empty() {
        return Err(Error::Data("attention needs at least one context vector".into()));
    }
    if let Some(bad) = contexts.iter().find(|c| c.len() != u.len()) {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: bad.len(),
        });
    }
    let mut w: Vec<f64> = contexts.iter().map(|c| dot(u, c)).collect();
    softmax_in_place(&mut w);
    Ok(w)
}

pub fn aggregate_context(weights: &[f64], contexts: &[&[f64]]) -> Result<Vec<f64>> {
    if weights.len() != contexts.len() || contexts.is_empty() {
        return Err(Error::Data(format!(
            "{} weights for {} context vectors",
            weights.len(),
            contexts.len()
        )));
    }
    let mut out = vec![0.0; contexts[0].len()];
    for (w, c) in weights.iter().zip(contexts) {
        axpy(*w, c, &mut out);
    }
    Ok(out)
}

pub fn dyn_loss(u: &[f64], context: &[f64], negatives: &[&[f64]]) -> f64 {
    neg_log_sigmoid(dot(context, u)) + negatives.iter().map(|n| neg_log_sigmoid(-dot(n, u))).sum::<f64>()
}

/// Loss and unclipped gradients for one center word.
#[derive(Debug, Clone, PartialEq)]
pub struct DynGradients {
    pub loss: f64,
    /// Attention weights used for the aggregate.
    pub weights: Vec<f64>,
    pub u: Vec<f64>,
    pub contexts: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn dyn_gradients(u: &[f64], contexts: &[&[f64]], negatives: &[&[f64]], attention: bool) -> Result<DynGradients> {
    let weights = if attention {
        attention_weights(u, contexts)?
    } else {
        if contexts.is_empty() {
            return Err(Error::Data("attention needs at least one context vector".into()));
        }
        vec![1.0 / contexts.len() as f64; contexts.len()]
    };
    let agg = aggregate_context(&weights, contexts)?;
    let p = dot(&agg, u);
    let mut loss = neg_log_sigmoid(p);
    let g_p = sigmoid(p) - 1.0;

    let mut g_u: Vec<f64> = agg.iter().map(|a| g_p * a).collect();
    let g_agg: Vec<f64> = u.iter().map(|x| g_p * x).collect();

    let mut g_ctx: Vec<Vec<f64>> = weights.iter().map(|&a| g_agg.iter().map(|g| a * g).collect()).collect();
    if attention {
        let b: Vec<f64> = contexts.iter().map(|c| dot(c, &g_agg)).collect();
        let mean_b: f64 = weights.iter().zip(&b).map(|(a, b)| a * b).sum();
        for (j, c) in contexts.iter().enumerate() {
            let ds = weights[j] * (b[j] - mean_b);
            axpy(ds, c, &mut g_u);
            axpy(ds, u, &mut g_ctx[j]);
        }
    }

    let mut g_neg = Vec::with_capacity(negatives.len());
    for n in negatives {
        let q = dot(n, u);
        loss += neg_log_sigmoid(-q);
        let s = sigmoid(q);
        axpy(s, n, &mut g_u);
        g_neg.push(u.iter().map(|x| s * x).collect());
    }
    Ok(DynGradients {
        loss,
        weights,
        u: g_u,
        contexts: g_ctx,
        negatives: g_neg,
    })
}

/// In-window context positions of `center`, truncated at sentence edges.
pub fn window(n: usize, center: usize, span: usize) -> impl Iterator<Item = usize> {
    let lo = center.saturating_sub(span);
    let hi = (center + span + 1).min(n);
    (lo..hi).filter(move |&j| j != center)
}

#[derive(Debug, Default)]
pub struct Workspace {
    rows: Vec<Vec<f64>>,
    u_row: Vec<f64>,
    grad_rows: Vec<(usize, Vec<f64>)>,
}

pub struct StepOutcome {
    pub loss: f64,
    /// Gradient of the loss with respect to the contextual vector `o`.
    pub d_o: Vec<f64>,
}

/// One update for a center word with contextual vector `o`. Updates `U` and
/// the touched rows of `V'`; each gradient vector (the whole of `U`, every
/// distinct `V'` row) is clipped to `clip` before the step.
#[allow(clippy::too_many_arguments)]
pub fn dyn_step<P: RowStore, X: RowStore>(
    o: &[f64],
    context_ids: &[usize],
    negative_ids: &[usize],
    projection: &mut P,
    contexts: &mut X,
    lr: f64,
    clip: f64,
    attention: bool,
    ws: &mut Workspace,
) -> Result<StepOutcome> {
    let d_emb = contexts.dim();
    let u = project_with(projection, d_emb, o, &mut ws.u_row);
    let total = context_ids.len() + negative_ids.len();
    ws.rows.resize_with(total, Vec::new);
    for (buf, &id) in ws.rows.iter_mut().zip(context_ids.iter().chain(negative_ids)) {
        buf.resize(d_emb, 0.0);
        contexts.read_row(id, buf);
    }
    let (ctx_rows, neg_rows) = ws.rows[..total].split_at(context_ids.len());
    let ctx_refs: Vec<&[f64]> = ctx_rows.iter().map(Vec::as_slice).collect();
    let neg_refs: Vec<&[f64]> = neg_rows.iter().map(Vec::as_slice).collect();
    let grads = dyn_gradients(&u, &ctx_refs, &neg_refs, attention)?;

    // gradient w.r.t. o before U moves
    let mut d_o = vec![0.0; o.len()];
    for r in 0..d_emb {
        projection.read_row(r, &mut ws.u_row);
        axpy(grads.u[r], &ws.u_row, &mut d_o);
    }

    // dL/dU = g_u o^T, whose Frobenius norm is |g_u| |o|
    let u_norm = norm(&grads.u) * norm(o);
    let u_scale = if u_norm > clip { clip / u_norm } else { 1.0 };
    for (r, g) in grads.u.iter().enumerate() {
        if *g != 0.0 {
            projection.add_row(r, -lr * u_scale * g, o);
        }
    }

    ws.grad_rows.clear();
    for (&id, g) in context_ids.iter().chain(negative_ids).zip(grads.contexts.into_iter().chain(grads.negatives)) {
        match ws.grad_rows.iter_mut().find(|(rid, _)| *rid == id) {
            Some((_, acc)) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            None => ws.grad_rows.push((id, g)),
        }
    }
    for (id, g) in ws.grad_rows.iter_mut() {
        clip_norm(g, clip);
        contexts.add_row(*id, -lr, g);
    }
    Ok(StepOutcome { loss: grads.loss, d_o })
}

#[derive(Debug, Clone)]
pub struct DynOutput {
    /// Context table `V'`, the output lexicon.
    pub contexts: EmbeddingMatrix,
    pub projection: Projection,
    pub report: TrainReport,
}

struct EpochStats {
    loss: f64,
    steps: u64,
    log: Vec<LogRecord>,
}

struct Shared<'a> {
    noise: &'a NoiseTable,
    vocab: &'a Vocab,
    config: &'a DynConfig,
    schedule: LinearDecay,
    progress: &'a AtomicU64,
    epoch: usize,
}

struct SentenceTrainer<'a, 'b> {
    sh: &'a Shared<'b>,
    ws: Workspace,
    exclude: Vec<usize>,
    negs: Vec<usize>,
    stats: EpochStats,
    window_loss: f64,
    window_steps: u64,
}

impl<'a, 'b> SentenceTrainer<'a, 'b> {
    fn new(sh: &'a Shared<'b>) -> Self {
        SentenceTrainer {
            sh,
            ws: Workspace::default(),
            exclude: Vec::new(),
            negs: Vec::new(),
            stats: EpochStats {
                loss: 0.0,
                steps: 0,
                log: Vec::new(),
            },
            window_loss: 0.0,
            window_steps: 0,
        }
    }

    /// Train every center of one sentence. Returns `dL/do` per position
    /// (row-major) when `want_grad` is set.
    #[allow(clippy::too_many_arguments)]
    fn sentence<P: RowStore, X: RowStore>(
        &mut self,
        index: usize,
        ids: &[usize],
        vectors: &[f64],
        projection: &mut P,
        contexts: &mut X,
        rng: &mut Rng,
        want_grad: bool,
    ) -> Result<(f64, Option<Vec<f64>>)> {
        let cfg = self.sh.config;
        let n = ids.len();
        let d = vectors.len() / n.max(1);
        let progress = self.sh.progress.fetch_add(n as u64, Ordering::Relaxed);
        let lr = self.sh.schedule.at(progress);
        let mut d_out = want_grad.then(|| vec![0.0; vectors.len()]);
        let mut ctx_ids = Vec::with_capacity(2 * cfg.window);
        for i in 0..n {
            ctx_ids.clear();
            ctx_ids.extend(window(n, i, cfg.window).map(|j| ids[j]));
            if ctx_ids.is_empty() {
                continue;
            }
            self.exclude.clear();
            self.exclude.push(ids[i]);
            self.exclude.extend_from_slice(&ctx_ids);
            self.negs.clear();
            for _ in 0..cfg.negatives {
                self.negs.push(self.sh.noise.sample_negative(rng, &self.exclude)?);
            }
            let o = &vectors[i * d..(i + 1) * d];
            let out = dyn_step(o, &ctx_ids, &self.negs, projection, contexts, lr, cfg.clip, cfg.attention, &mut self.ws)?;
            if !out.loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss in epoch {} at sentence {} position {}",
                    self.sh.epoch, index, i
                )));
            }
            if let Some(g) = d_out.as_mut() {
                g[i * d..(i + 1) * d].copy_from_slice(&out.d_o);
            }
            self.stats.loss += out.loss;
            self.stats.steps += 1;
            self.window_loss += out.loss;
            self.window_steps += 1;
            if cfg.log_every > 0 && self.window_steps == cfg.log_every {
                self.stats.log.push(LogRecord {
                    epoch: self.sh.epoch,
                    step: self.stats.steps,
                    loss: self.window_loss / self.window_steps as f64,
                    lr,
                });
                self.window_loss = 0.0;
                self.window_steps = 0;
            }
        }
        Ok((lr, d_out))
    }
}

fn check_vectors(index: usize, ids: &[usize], vectors: &[f64], dim: usize) -> Result<()> {
    if vectors.len() != ids.len() * dim {
        return Err(Error::Misaligned {
            sentence: index,
            message: format!("{} values for {} tokens of dim {}", vectors.len(), ids.len(), dim),
        });
    }
    Ok(())
}

fn update_encoder(params: &mut EncoderParams, ids: &[usize], d_out: &[f64], lr: f64, clip: f64) -> Result<()> {
    let cache = encoder::forward(ids, params, None)?;
    let mut grads = params.zeros_like();
    encoder::backward(ids, params, &cache, d_out, &mut grads);
    let g = grads.l2_norm();
    let scale = if g > clip { clip / g } else { 1.0 };
    params.axpy(-lr * scale, &grads);
    Ok(())
}

/// Train `V'` and `U` over the corpus. Vectors come from `provider`, which
/// must be aligned with `sentences`.
pub fn train_dyn(
    sentences: &SentenceStream,
    vocab: &Vocab,
    provider: &mut ContextProvider,
    config: &DynConfig,
) -> Result<DynOutput> {
    config.validate()?;
    if sentences.is_empty() {
        return Err(Error::Data("training corpus is empty".into()));
    }
    if let Some(params) = provider.encoder() {
        if params.vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "encoder vocabulary has {} words, corpus vocabulary {}",
                params.vocab_size,
                vocab.len()
            )));
        }
    }
    let unfrozen = !config.freeze_encoder && provider.encoder().is_some();
    let in_dim = provider.dim();
    let mut init = rng::stream(config.seed, Stream::DynInit);
    let mut contexts = EmbeddingMatrix::init_uniform(vocab.len(), config.dim, TableRole::Context, &mut init);
    let mut projection = Projection::init(config.dim, in_dim, &mut init).matrix;
    let noise = NoiseTable::new(vocab);
    let total = (config.epochs * sentences.token_count()) as u64;
    let progress = AtomicU64::new(0);
    let mut report = TrainReport::default();
    let mut rng = rng::stream(config.seed, Stream::DynTrain);
    let mut worker_rngs: Vec<Rng> = (0..config.workers)
        .map(|w| rng::worker_stream(config.seed, Stream::DynTrain, w + 1))
        .collect();

    for epoch in 1..=config.epochs {
        let sh = Shared {
            noise: &noise,
            vocab,
            config,
            schedule: LinearDecay::new(config.lr, total),
            progress: &progress,
            epoch,
        };
        let stats = if config.workers == 1 {
            provider.begin_epoch()?;
            let mut trainer = SentenceTrainer::new(&sh);
            for (index, ids) in sentences.iter().enumerate() {
                let vectors = provider.sentence(index, ids, vocab)?;
                check_vectors(index, ids, &vectors, in_dim)?;
                let (lr, d_out) =
                    trainer.sentence(index, ids, &vectors, &mut projection, &mut contexts, &mut rng, unfrozen)?;
                if let (Some(d_out), Some(params)) = (d_out, provider.encoder_mut()) {
                    update_encoder(params, ids, &d_out, lr, config.clip)?;
                }
            }
            provider.end_epoch(sentences.len())?;
            vec![trainer.stats]
        } else {
            let shared_u = SharedMatrix::from_matrix(&projection);
            let shared_x = SharedMatrix::from_matrix(&contexts);
            let ranges = shards(sentences.len(), config.workers);
            let mut forks = Vec::with_capacity(ranges.len());
            for r in &ranges {
                forks.push(provider.fork_at(r.start)?);
            }
            let results: Vec<Result<EpochStats>> = std::thread::scope(|scope| {
                let handles: Vec<_> = ranges
                    .into_iter()
                    .zip(forks)
                    .zip(worker_rngs.iter_mut())
                    .map(|((range, mut fork), wrng)| {
                        let (su, sx, sh) = (&shared_u, &shared_x, &sh);
                        scope.spawn(move || -> Result<EpochStats> {
                            let (mut pu, mut px) = (su, sx);
                            let mut trainer = SentenceTrainer::new(sh);
                            for index in range {
                                let ids = sentences.get(index);
                                let vectors = fork.sentence(index, ids, sh.vocab)?;
                                check_vectors(index, ids, &vectors, in_dim)?;
                                trainer.sentence(index, ids, &vectors, &mut pu, &mut px, wrng, false)?;
                            }
                            Ok(trainer.stats)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            });
            projection = shared_u.to_matrix();
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
    if !contexts.is_finite() || !projection.is_finite() {
        return Err(Error::Divergence("embedding tables contain non-finite values".into()));
    }
    Ok(DynOutput {
        contexts,
        projection: Projection::from_matrix(projection),
        report,
    })
}
