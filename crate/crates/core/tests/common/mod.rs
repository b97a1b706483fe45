//! Oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use contextsg::dynsg::{dyn_step, Workspace as DynWorkspace};
use contextsg::embed_store::{EmbeddingMatrix, TableRole};
use contextsg::encoder::{mlm_loss, EncoderConfig, EncoderParams, MaskedSentence};
use contextsg::rng::{stream, Rng, Stream};
use contextsg::sgns::{sgns_step, Workspace as SgnsWorkspace};
use rand::Rng as _;

pub const FD_STEP: f64 = 1e-4;
/// Denominator floor for relative error; only matters for entries that are
/// zero analytically.
pub const REL_FLOOR: f64 = 1e-8;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn rng(seed: u64) -> Rng {
    stream(seed, Stream::Synthetic)
}

pub fn rand_vec(n: usize, scale: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central difference of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let plus = f(x);
            x[i] = orig - FD_STEP;
            let minus = f(x);
            x[i] = orig;
            (plus - minus) / (2.0 * FD_STEP)
        })
        .collect()
}

fn max_rel(a: &[f64], n: &[f64]) -> f64 {
    assert_eq!(a.len(), n.len());
    a.iter().zip(n).map(|(a, n)| rel_err(*a, *n)).fold(0.0, f64::max)
}

/// Max relative error of the MLM gradient over every encoder parameter.
/// |V| = 7, n = 5, one layer, one head, d = 8.
pub fn mlm_fd_error(seed: u64) -> f64 {
    let cfg = EncoderConfig {
        layers: 1,
        heads: 1,
        dim: 8,
        ffn_dim: 8,
        max_len: 5,
        mask_fraction: 0.3,
    };
    let mut r = rng(seed);
    let mut params = EncoderParams::init(&cfg, 7, &mut stream(seed, Stream::EncoderInit)).unwrap();
    // move away from the symmetric initialization
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v += r.gen_range(-0.3..0.3);
        }
    }
    let ids: Vec<usize> = (0..5).map(|_| r.gen_range(0..7)).collect();
    let masked = vec![r.gen_range(0..2), r.gen_range(2..5)];
    let batch = [MaskedSentence { ids: &ids, masked }];
    let analytic = mlm_loss(&params, &batch).unwrap().grads;
    let mut worst: f64 = 0.0;
    let n_tensors = params.tensors().len();
    for t in 0..n_tensors {
        let len = params.tensors()[t].len();
        for i in 0..len {
            let orig = params.tensors()[t][i];
            params.tensors_mut()[t][i] = orig + FD_STEP;
            let plus = mlm_loss(&params, &batch).unwrap().loss;
            params.tensors_mut()[t][i] = orig - FD_STEP;
            let minus = mlm_loss(&params, &batch).unwrap().loss;
            params.tensors_mut()[t][i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic.tensors()[t][i], numeric));
        }
    }
    worst
}

fn sgns_loss_oracle(center: &[f64], context: &[f64], negs: &[Vec<f64>]) -> f64 {
    -sigmoid(dot(context, center)).ln() - negs.iter().map(|n| sigmoid(-dot(n, center)).ln()).sum::<f64>()
}

/// Gradient implied by one `sgns_step` (recovered from the update with a
/// tiny lr and no clipping) against finite differences of the loss. d = 8,
/// k = 2.
pub fn sgns_fd_error(seed: u64) -> f64 {
    let d = 8;
    let mut r = rng(seed);
    let mut centers = EmbeddingMatrix::from_vec(rand_vec(4 * d, 0.8, &mut r), 4, d, TableRole::Center).unwrap();
    let mut contexts = EmbeddingMatrix::from_vec(rand_vec(4 * d, 0.8, &mut r), 4, d, TableRole::Context).unwrap();
    let (c, x, negs) = (1usize, 0usize, [2usize, 3]);
    let before_c = centers.row(c).to_vec();
    let before_x = contexts.clone();
    let lr = 1e-7;
    sgns_step(c, x, &negs, &mut centers, &mut contexts, lr, 1e9, &mut SgnsWorkspace::default()).unwrap();

    let grad_of = |after: &[f64], before: &[f64]| -> Vec<f64> {
        before.iter().zip(after).map(|(b, a)| (b - a) / lr).collect()
    };
    let neg_rows = |m: &EmbeddingMatrix| -> Vec<Vec<f64>> { negs.iter().map(|&n| m.row(n).to_vec()).collect() };
    let mut worst: f64 = 0.0;

    let mut v = before_c.clone();
    let n = numeric_grad(&mut v, |v| sgns_loss_oracle(v, before_x.row(x), &neg_rows(&before_x)));
    worst = worst.max(max_rel(&grad_of(centers.row(c), &before_c), &n));

    let mut ctx = before_x.row(x).to_vec();
    let n = numeric_grad(&mut ctx, |ctx| sgns_loss_oracle(&before_c, ctx, &neg_rows(&before_x)));
    worst = worst.max(max_rel(&grad_of(contexts.row(x), before_x.row(x)), &n));

    for (m, &id) in negs.iter().enumerate() {
        let mut row = before_x.row(id).to_vec();
        let n = numeric_grad(&mut row, |row| {
            let mut ns = neg_rows(&before_x);
            ns[m] = row.to_vec();
            sgns_loss_oracle(&before_c, before_x.row(x), &ns)
        });
        worst = worst.max(max_rel(&grad_of(contexts.row(id), before_x.row(id)), &n));
    }
    worst
}

/// Loss of the dynamic objective written directly from its definition.
pub fn dyn_loss_oracle(u_mat: &[f64], o: &[f64], ctx: &[Vec<f64>], negs: &[Vec<f64>], attention: bool) -> f64 {
    let d_emb = u_mat.len() / o.len();
    let u: Vec<f64> = (0..d_emb).map(|r| dot(&u_mat[r * o.len()..(r + 1) * o.len()], o)).collect();
    let logits: Vec<f64> = ctx.iter().map(|c| dot(&u, c)).collect();
    let weights: Vec<f64> = if attention {
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        logits.iter().map(|l| l.exp() / z).collect()
    } else {
        vec![1.0 / ctx.len() as f64; ctx.len()]
    };
    let mut agg = vec![0.0; d_emb];
    for (w, c) in weights.iter().zip(ctx) {
        for (a, v) in agg.iter_mut().zip(c) {
            *a += w * v;
        }
    }
    -sigmoid(dot(&agg, &u)).ln() - negs.iter().map(|n| sigmoid(-dot(n, &u)).ln()).sum::<f64>()
}

/// Gradients implied by one `dyn_step` (tiny lr, no clipping) for `U`, every
/// touched context row, and the encoder output `o`, against finite
/// differences. d = 6, d_emb = 4, ws = 2 (four context words), k = 2.
pub fn dyn_fd_error(seed: u64, attention: bool) -> f64 {
    let (d, d_emb) = (6, 4);
    let mut r = rng(seed);
    let o = rand_vec(d, 1.0, &mut r);
    let u0 = rand_vec(d_emb * d, 0.5, &mut r);
    let x0 = rand_vec(6 * d_emb, 0.8, &mut r);
    let mut u_mat = EmbeddingMatrix::from_vec(u0.clone(), d_emb, d, TableRole::Projection).unwrap();
    let mut contexts = EmbeddingMatrix::from_vec(x0.clone(), 6, d_emb, TableRole::Context).unwrap();
    let ctx_ids = [0usize, 1, 2, 3];
    let neg_ids = [4usize, 5];
    let lr = 1e-7;
    let out = dyn_step(&o, &ctx_ids, &neg_ids, &mut u_mat, &mut contexts, lr, 1e9, attention, &mut DynWorkspace::default())
        .unwrap();
    let rows = |x: &[f64], ids: &[usize]| -> Vec<Vec<f64>> {
        ids.iter().map(|&i| x[i * d_emb..(i + 1) * d_emb].to_vec()).collect()
    };
    let loss = |u: &[f64], o: &[f64], x: &[f64]| dyn_loss_oracle(u, o, &rows(x, &ctx_ids), &rows(x, &neg_ids), attention);
    let implied = |after: &[f64], before: &[f64]| -> Vec<f64> {
        before.iter().zip(after).map(|(b, a)| (b - a) / lr).collect()
    };
    let mut worst: f64 = 0.0;

    let mut u = u0.clone();
    let n = numeric_grad(&mut u, |u| loss(u, &o, &x0));
    worst = worst.max(max_rel(&implied(u_mat.as_slice(), &u0), &n));

    let mut x = x0.clone();
    let n = numeric_grad(&mut x, |x| loss(&u0, &o, x));
    worst = worst.max(max_rel(&implied(contexts.as_slice(), &x0), &n));

    let mut oo = o.clone();
    let n = numeric_grad(&mut oo, |oo| loss(&u0, oo, &x0));
    worst = worst.max(max_rel(&out.d_o, &n));
    worst
}
