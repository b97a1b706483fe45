use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::linalg::{add_a_bt, add_at_b, add_bias, add_col_sums, gelu, gelu_grad, matmul, softmax_in_place};
use super::{EncoderConfig, LN_EPS};
use crate::rng::Rng;

/// One transformer layer. Projection matrices are `dim x dim` with head `m`
/// occupying columns `m * d_k .. (m + 1) * d_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
    pub bo: Vec<f64>,
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    /// `dim x ffn_dim`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `ffn_dim x dim`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
}

fn xavier(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect()
}

impl LayerParams {
    pub fn init(cfg: &EncoderConfig, rng: &mut Rng) -> Self {
        let (d, f) = (cfg.dim, cfg.ffn_dim);
        LayerParams {
            wq: xavier(d, d, rng),
            wk: xavier(d, d, rng),
            wv: xavier(d, d, rng),
            wo: xavier(d, d, rng),
            bo: vec![0.0; d],
            ln1_gain: vec![1.0; d],
            ln1_bias: vec![0.0; d],
            w1: xavier(d, f, rng),
            b1: vec![0.0; f],
            w2: xavier(f, d, rng),
            b2: vec![0.0; d],
            ln2_gain: vec![1.0; d],
            ln2_bias: vec![0.0; d],
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![
            &self.wq, &self.wk, &self.wv, &self.wo, &self.bo, &self.ln1_gain, &self.ln1_bias, &self.w1, &self.b1,
            &self.w2, &self.b2, &self.ln2_gain, &self.ln2_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
        ]
    }

    pub(super) fn has_shape(&self, cfg: &EncoderConfig) -> bool {
        let (d, f) = (cfg.dim, cfg.ffn_dim);
        [&self.wq, &self.wk, &self.wv, &self.wo].iter().all(|w| w.len() == d * d)
            && [&self.bo, &self.ln1_gain, &self.ln1_bias, &self.b2, &self.ln2_gain, &self.ln2_bias]
                .iter()
                .all(|v| v.len() == d)
            && self.w1.len() == d * f
            && self.w2.len() == f * d
            && self.b1.len() == f
    }
}

#[derive(Debug, Clone)]
struct NormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    input: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `heads x n x n` attention distributions.
    pub attention: Vec<f64>,
    context: Vec<f64>,
    norm1: NormCache,
    x1: Vec<f64>,
    ffn_pre: Vec<f64>,
    ffn_act: Vec<f64>,
    norm2: NormCache,
    pub output: Vec<f64>,
}

fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> (Vec<f64>, NormCache) {
    let d = gain.len();
    let n = x.len() / d;
    let mut out = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[i] = is;
        for j in 0..d {
            let xh = (row[j] - mean) * is;
            xhat[i * d + j] = xh;
            out[i * d + j] = gain[j] * xh + bias[j];
        }
    }
    (out, NormCache { xhat, inv_std })
}

fn layer_norm_backward(dy: &[f64], cache: &NormCache, gain: &[f64], dgain: &mut [f64], dbias: &mut [f64]) -> Vec<f64> {
    let d = gain.len();
    let n = dy.len() / d;
    let mut dx = vec![0.0; dy.len()];
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let g = &dy[i * d..(i + 1) * d];
        for j in 0..d {
            dgain[j] += g[j] * xh[j];
            dbias[j] += g[j];
            dxhat[j] = g[j] * gain[j];
        }
        let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dxhat_xhat = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for j in 0..d {
            dx[i * d + j] = cache.inv_std[i] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

/// Multi-head scaled dot-product self-attention. Returns the concatenated
/// head outputs (`n x dim`) and the attention distributions.
fn multi_head(q: &[f64], k: &[f64], v: &[f64], n: usize, cfg: &EncoderConfig) -> (Vec<f64>, Vec<f64>) {
    let d = cfg.dim;
    let dk = cfg.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();
    let mut attention = vec![0.0; cfg.heads * n * n];
    let mut context = vec![0.0; n * d];
    for m in 0..cfg.heads {
        let off = m * dk;
        for i in 0..n {
            let qi = &q[i * d + off..i * d + off + dk];
            let row = &mut attention[(m * n + i) * n..(m * n + i + 1) * n];
            for (j, s) in row.iter_mut().enumerate() {
                let kj = &k[j * d + off..j * d + off + dk];
                *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            softmax_in_place(row);
            let ci = &mut context[i * d + off..i * d + off + dk];
            for (j, &a) in row.iter().enumerate() {
                let vj = &v[j * d + off..j * d + off + dk];
                for (c, x) in ci.iter_mut().zip(vj) {
                    *c += a * x;
                }
            }
        }
    }
    (context, attention)
}

pub(super) fn forward(p: &LayerParams, cfg: &EncoderConfig, h: &[f64], n: usize) -> LayerCache {
    let (d, f) = (cfg.dim, cfg.ffn_dim);
    let q = matmul(h, &p.wq, n, d, d);
    let k = matmul(h, &p.wk, n, d, d);
    let v = matmul(h, &p.wv, n, d, d);
    let (context, attention) = multi_head(&q, &k, &v, n, cfg);
    let mut r1 = matmul(&context, &p.wo, n, d, d);
    add_bias(&mut r1, &p.bo);
    for (r, x) in r1.iter_mut().zip(h) {
        *r += x;
    }
    let (x1, norm1) = layer_norm(&r1, &p.ln1_gain, &p.ln1_bias);
    let mut ffn_pre = matmul(&x1, &p.w1, n, d, f);
    add_bias(&mut ffn_pre, &p.b1);
    let ffn_act: Vec<f64> = ffn_pre.iter().map(|&x| gelu(x)).collect();
    let mut r2 = matmul(&ffn_act, &p.w2, n, f, d);
    add_bias(&mut r2, &p.b2);
    for (r, x) in r2.iter_mut().zip(&x1) {
        *r += x;
    }
    let (output, norm2) = layer_norm(&r2, &p.ln2_gain, &p.ln2_bias);
    LayerCache {
        input: h.to_vec(),
        q,
        k,
        v,
        attention,
        context,
        norm1,
        x1,
        ffn_pre,
        ffn_act,
        norm2,
        output,
    }
}

/// Backpropagate `d_out` through one layer, accumulating into `g`. Returns
/// the gradient with respect to the layer input.
pub(super) fn backward(
    p: &LayerParams,
    cfg: &EncoderConfig,
    c: &LayerCache,
    n: usize,
    d_out: &[f64],
    g: &mut LayerParams,
) -> Vec<f64> {
    let (d, f) = (cfg.dim, cfg.ffn_dim);
    let dk = cfg.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();

    let d_r2 = layer_norm_backward(d_out, &c.norm2, &p.ln2_gain, &mut g.ln2_gain, &mut g.ln2_bias);
    add_at_b(&mut g.w2, &c.ffn_act, &d_r2, n, f, d);
    add_col_sums(&mut g.b2, &d_r2);
    let mut d_act = vec![0.0; n * f];
    add_a_bt(&mut d_act, &d_r2, &p.w2, n, f, d);
    let d_pre: Vec<f64> = d_act.iter().zip(&c.ffn_pre).map(|(g, &x)| g * gelu_grad(x)).collect();
    add_at_b(&mut g.w1, &c.x1, &d_pre, n, d, f);
    add_col_sums(&mut g.b1, &d_pre);
    let mut d_x1 = d_r2;
    add_a_bt(&mut d_x1, &d_pre, &p.w1, n, d, f);

    let d_r1 = layer_norm_backward(&d_x1, &c.norm1, &p.ln1_gain, &mut g.ln1_gain, &mut g.ln1_bias);
    add_at_b(&mut g.wo, &c.context, &d_r1, n, d, d);
    add_col_sums(&mut g.bo, &d_r1);
    let mut d_ctx = vec![0.0; n * d];
    add_a_bt(&mut d_ctx, &d_r1, &p.wo, n, d, d);

    let mut dq = vec![0.0; n * d];
    let mut dk_ = vec![0.0; n * d];
    let mut dv = vec![0.0; n * d];
    let mut d_att = vec![0.0; n];
    for m in 0..cfg.heads {
        let off = m * dk;
        for i in 0..n {
            let a = &c.attention[(m * n + i) * n..(m * n + i + 1) * n];
            let dci = &d_ctx[i * d + off..i * d + off + dk];
            for j in 0..n {
                let vj = &c.v[j * d + off..j * d + off + dk];
                d_att[j] = dci.iter().zip(vj).map(|(x, y)| x * y).sum();
                for (t, &x) in dv[j * d + off..j * d + off + dk].iter_mut().zip(dci) {
                    *t += a[j] * x;
                }
            }
            let weighted: f64 = a.iter().zip(&d_att).map(|(x, y)| x * y).sum();
            for j in 0..n {
                let ds = a[j] * (d_att[j] - weighted) * scale;
                if ds == 0.0 {
                    continue;
                }
                for t in 0..dk {
                    dq[i * d + off + t] += ds * c.k[j * d + off + t];
                    dk_[j * d + off + t] += ds * c.q[i * d + off + t];
                }
            }
        }
    }

    add_at_b(&mut g.wq, &c.input, &dq, n, d, d);
    add_at_b(&mut g.wk, &c.input, &dk_, n, d, d);
    add_at_b(&mut g.wv, &c.input, &dv, n, d, d);
    let mut d_in = d_r1;
    add_a_bt(&mut d_in, &dq, &p.wq, n, d, d);
    add_a_bt(&mut d_in, &dk_, &p.wk, n, d, d);
    add_a_bt(&mut d_in, &dv, &p.wv, n, d, d);
    d_in
}

/// Apply one layer to `h` (`n x dim`) and return `(output, attention)`; the
/// attention buffer holds `heads` row-stochastic `n x n` matrices.
pub fn attention_layer(h: &[f64], p: &LayerParams, cfg: &EncoderConfig) -> (Vec<f64>, Vec<f64>) {
    let n = h.len() / cfg.dim;
    let cache = forward(p, cfg, h, n);
    (cache.output, cache.attention)
}
