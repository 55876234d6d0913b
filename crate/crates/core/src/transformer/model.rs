//! Encoder-only transformer regressor with hand-written reverse mode.
//!
//! Layout per layer (post-LN): multi-head self-attention, residual,
//! LayerNorm, GELU feed-forward, residual, LayerNorm. The encoder output is
//! mean-pooled over time and mapped to `d_out` values by a linear head.

use std::f64::consts::PI;
use std::hash::{DefaultHasher, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::tensor::Mat;
use super::{TokenSequence, TransformerError};
use crate::numerics::SeededRng;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.044_715;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformerConfig {
    pub seq_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub n_layers: usize,
    pub d_out: usize,
    pub input_features: usize,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            seq_len: 10,
            d_model: 32,
            n_heads: 2,
            d_ff: 128,
            n_layers: 2,
            d_out: 1,
            input_features: 4,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<(), TransformerError> {
        let fields = [
            self.seq_len,
            self.d_model,
            self.n_heads,
            self.d_ff,
            self.n_layers,
            self.d_out,
            self.input_features,
        ];
        if fields.contains(&0) {
            return Err(TransformerError::InvalidConfig("all sizes must be >= 1".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(TransformerError::InvalidConfig(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Per-sample forward count of the dominant terms: `T²d + T d d_ff` per
    /// layer plus `d d_out` for the head.
    pub fn dominant_flops(&self) -> u64 {
        let (t, d, f, o) = (self.seq_len as u64, self.d_model as u64, self.d_ff as u64, self.d_out as u64);
        self.n_layers as u64 * (t * t * d + t * d * f) + d * o
    }

    /// Per-sample forward multiply-accumulate count over every matrix product.
    pub fn full_macs(&self) -> u64 {
        let (t, d, f, o, i) = (
            self.seq_len as u64,
            self.d_model as u64,
            self.d_ff as u64,
            self.d_out as u64,
            self.input_features as u64,
        );
        let per_layer = 4 * t * d * d + 2 * t * t * d + 2 * t * d * f;
        t * i * d + self.n_layers as u64 * per_layer + d * o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub wo: Mat,
    pub ff1_w: Mat,
    pub ff1_b: Mat,
    pub ff2_w: Mat,
    pub ff2_b: Mat,
    pub ln1_g: Mat,
    pub ln1_b: Mat,
    pub ln2_g: Mat,
    pub ln2_b: Mat,
}

pub const LAYER_TENSOR_NAMES: [&str; 12] = [
    "wq", "wk", "wv", "wo", "ff1_w", "ff1_b", "ff2_w", "ff2_b", "ln1_g", "ln1_b", "ln2_g", "ln2_b",
];

impl LayerParams {
    fn zeros(cfg: &TransformerConfig) -> Self {
        let (d, f) = (cfg.d_model, cfg.d_ff);
        Self {
            wq: Mat::zeros(d, d),
            wk: Mat::zeros(d, d),
            wv: Mat::zeros(d, d),
            wo: Mat::zeros(d, d),
            ff1_w: Mat::zeros(d, f),
            ff1_b: Mat::zeros(1, f),
            ff2_w: Mat::zeros(f, d),
            ff2_b: Mat::zeros(1, d),
            ln1_g: Mat::zeros(1, d),
            ln1_b: Mat::zeros(1, d),
            ln2_g: Mat::zeros(1, d),
            ln2_b: Mat::zeros(1, d),
        }
    }

    fn tensors(&self) -> [&Mat; 12] {
        [
            &self.wq, &self.wk, &self.wv, &self.wo, &self.ff1_w, &self.ff1_b, &self.ff2_w, &self.ff2_b, &self.ln1_g,
            &self.ln1_b, &self.ln2_g, &self.ln2_b,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Mat; 12] {
        [
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ff1_w,
            &mut self.ff1_b,
            &mut self.ff2_w,
            &mut self.ff2_b,
            &mut self.ln1_g,
            &mut self.ln1_b,
            &mut self.ln2_g,
            &mut self.ln2_b,
        ]
    }
}

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub embed_w: Mat,
    pub embed_b: Mat,
    pub layers: Vec<LayerParams>,
    pub head_w: Mat,
    pub head_b: Mat,
}

impl Params {
    pub fn zeros(cfg: &TransformerConfig) -> Self {
        Self {
            embed_w: Mat::zeros(cfg.input_features, cfg.d_model),
            embed_b: Mat::zeros(1, cfg.d_model),
            layers: (0..cfg.n_layers).map(|_| LayerParams::zeros(cfg)).collect(),
            head_w: Mat::zeros(cfg.d_model, cfg.d_out),
            head_b: Mat::zeros(1, cfg.d_out),
        }
    }

    /// Gaussian weights with standard deviation `1/√fan_in`, unit LayerNorm
    /// gains, zero biases.
    pub fn init(cfg: &TransformerConfig, rng: &mut SeededRng) -> Self {
        let mut p = Self::zeros(cfg);
        let fill = |m: &mut Mat, rng: &mut SeededRng| {
            let std = 1.0 / (m.rows() as f64).sqrt();
            m.as_mut_slice().iter_mut().for_each(|v| *v = rng.normal(0.0, std));
        };
        fill(&mut p.embed_w, rng);
        for layer in &mut p.layers {
            for m in [&mut layer.wq, &mut layer.wk, &mut layer.wv, &mut layer.wo, &mut layer.ff1_w, &mut layer.ff2_w] {
                fill(m, rng);
            }
            layer.ln1_g.fill(1.0);
            layer.ln2_g.fill(1.0);
        }
        fill(&mut p.head_w, rng);
        p
    }

    /// `(name, tensor)` pairs in a fixed order; layer tensors are prefixed `layer{i}.`.
    pub fn named(&self) -> Vec<(String, &Mat)> {
        let mut out = vec![("embed_w".to_string(), &self.embed_w), ("embed_b".to_string(), &self.embed_b)];
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, m) in LAYER_TENSOR_NAMES.iter().zip(layer.tensors()) {
                out.push((format!("layer{i}.{name}"), m));
            }
        }
        out.push(("head_w".to_string(), &self.head_w));
        out.push(("head_b".to_string(), &self.head_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = vec![&mut self.embed_w, &mut self.embed_b];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn backbone_tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut all = self.tensors_mut();
        all.truncate(all.len() - 2);
        all
    }

    /// `self += alpha · other` tensor by tensor.
    pub fn axpy(&mut self, alpha: f64, other: &Params) {
        let src: Vec<&Mat> = other.named().into_iter().map(|(_, m)| m).collect();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            dst.axpy(alpha, s);
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.named().iter().map(|(_, m)| m.len()).sum()
    }

    /// Hash of every backbone tensor's bit pattern.
    pub fn backbone_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let named = self.named();
        for (name, m) in &named[..named.len() - 2] {
            h.write(name.as_bytes());
            for v in m.as_slice() {
                h.write_u64(v.to_bits());
            }
        }
        h.finish()
    }

    /// Frobenius norm of all attention projection matrices together.
    pub fn attention_frobenius(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| [&l.wq, &l.wk, &l.wv, &l.wo])
            .map(|m| m.frobenius_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Fixed sinusoidal positional encoding, `T × d`.
pub fn positional_encoding(seq_len: usize, d_model: usize) -> Mat {
    Mat::from_fn(seq_len, d_model, |t, j| {
        let pair = (j / 2) as f64;
        let angle = t as f64 / 10_000f64.powf(2.0 * pair / d_model as f64);
        if j % 2 == 0 { angle.sin() } else { angle.cos() }
    })
}

fn softmax_rows(scores: &Mat) -> Mat {
    let mut out = scores.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Row-stochastic attention weights `softmax(QKᵀ/√d_k)`.
pub fn attention_weights(q: &Mat, k: &Mat, d_k: usize) -> Mat {
    softmax_rows(&q.matmul_t(k).scale(1.0 / (d_k as f64).sqrt()))
}

/// `softmax(QKᵀ/√d_k) V`
pub fn attention_forward(q: &Mat, k: &Mat, v: &Mat, d_k: usize) -> Mat {
    attention_weights(q, k, d_k).matmul(v)
}

fn gelu(x: f64) -> f64 {
    let u = (2.0 / PI).sqrt() * (x + GELU_C * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let s = (2.0 / PI).sqrt();
    let th = (s * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * s * (1.0 + 3.0 * GELU_C * x * x)
}

#[derive(Debug, Clone)]
struct LnCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

fn layer_norm(x: &Mat, g: &Mat, b: &Mat) -> (Mat, LnCache) {
    let d = x.cols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = xhat.row_mut(r);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        let is = 1.0 / (var + LN_EPS).sqrt();
        row.iter_mut().for_each(|v| *v = (*v - mean) * is);
        inv_std.push(is);
    }
    let mut y = Mat::from_fn(x.rows(), x.cols(), |r, c| xhat[(r, c)] * g[(0, c)]);
    y.add_row_broadcast(b);
    (y, LnCache { xhat, inv_std })
}

/// Returns `(dx, dg, db)`.
fn layer_norm_backward(dy: &Mat, cache: &LnCache, g: &Mat) -> (Mat, Mat, Mat) {
    let d = dy.cols() as f64;
    let db = dy.column_sums();
    let dg = dy.hadamard(&cache.xhat).column_sums();
    let mut dx = Mat::zeros(dy.rows(), dy.cols());
    for r in 0..dy.rows() {
        let dxhat: Vec<f64> = dy.row(r).iter().zip(g.as_slice()).map(|(a, b)| a * b).collect();
        let xh = cache.xhat.row(r);
        let mean_dxhat = dxhat.iter().sum::<f64>() / d;
        let mean_dxhat_xhat = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d;
        for (c, out) in dx.row_mut(r).iter_mut().enumerate() {
            *out = cache.inv_std[r] * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
        }
    }
    (dx, dg, db)
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    attn: Vec<Mat>,
    concat: Mat,
    ln1: LnCache,
    n1: Mat,
    f1: Mat,
    g: Mat,
    ln2: LnCache,
}

#[derive(Debug, Clone)]
struct ForwardCache {
    tokens: Mat,
    layers: Vec<LayerCache>,
    pooled: Mat,
    prediction: Vec<f64>,
}

/// Transformer regressor. The FLOP counters are atomics so that inference
/// can run on a shared reference.
#[derive(Debug, Serialize, Deserialize)]
pub struct TransformerModel {
    pub config: TransformerConfig,
    pub params: Params,
    #[serde(skip)]
    pos_encoding: Mat,
    pub frozen: bool,
    #[serde(skip)]
    flop_counter: AtomicU64,
    #[serde(skip)]
    mac_counter: AtomicU64,
}

impl Clone for TransformerModel {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            params: self.params.clone(),
            pos_encoding: self.pos_encoding.clone(),
            frozen: self.frozen,
            flop_counter: AtomicU64::new(self.flops()),
            mac_counter: AtomicU64::new(self.macs()),
        }
    }
}

impl PartialEq for TransformerModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params && self.frozen == other.frozen
    }
}

impl TransformerModel {
    pub fn new(config: TransformerConfig, rng: &mut SeededRng) -> Result<Self, TransformerError> {
        config.validate()?;
        let params = Params::init(&config, rng);
        Self::from_params(config, params)
    }

    pub fn from_params(config: TransformerConfig, params: Params) -> Result<Self, TransformerError> {
        config.validate()?;
        let expected = Params::zeros(&config);
        for ((name, want), (_, got)) in expected.named().iter().zip(params.named()) {
            if want.shape() != got.shape() {
                return Err(TransformerError::ShapeMismatch {
                    what: name.clone(),
                    expected: want.shape(),
                    found: got.shape(),
                });
            }
        }
        if expected.layers.len() != params.layers.len() {
            return Err(TransformerError::InvalidConfig("layer count mismatch".into()));
        }
        Ok(Self {
            pos_encoding: positional_encoding(config.seq_len, config.d_model),
            config,
            params,
            frozen: false,
            flop_counter: AtomicU64::new(0),
            mac_counter: AtomicU64::new(0),
        })
    }

    /// Restores derived state after deserialization.
    pub(crate) fn rebuild(mut self) -> Result<Self, TransformerError> {
        let frozen = self.frozen;
        self = Self::from_params(self.config, self.params)?;
        self.frozen = frozen;
        Ok(self)
    }

    pub fn flops(&self) -> u64 {
        self.flop_counter.load(Ordering::Relaxed)
    }

    pub fn macs(&self) -> u64 {
        self.mac_counter.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.flop_counter.store(0, Ordering::Relaxed);
        self.mac_counter.store(0, Ordering::Relaxed);
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn attention_frobenius(&self) -> f64 {
        self.params.attention_frobenius()
    }

    fn check_input(&self, seq: &TokenSequence) -> Result<(), TransformerError> {
        let want = (self.config.seq_len, self.config.input_features);
        if seq.tokens.shape() != want {
            return Err(TransformerError::ShapeMismatch {
                what: "tokens".into(),
                expected: want,
                found: seq.tokens.shape(),
            });
        }
        Ok(())
    }

    /// Token embedding plus positional encoding, `T × d`.
    pub fn embed(&self, seq: &TokenSequence) -> Result<Mat, TransformerError> {
        self.check_input(seq)?;
        let mut e = seq.tokens.matmul(&self.params.embed_w);
        e.add_row_broadcast(&self.params.embed_b);
        e.add_assign(&self.pos_encoding);
        Ok(e)
    }

    /// Mean-pooled encoder output, `1 × d`.
    pub fn pooled(&self, seq: &TokenSequence) -> Result<Mat, TransformerError> {
        Ok(self.forward_cached(seq)?.pooled)
    }

    pub fn forward(&self, seq: &TokenSequence) -> Result<Vec<f64>, TransformerError> {
        Ok(self.forward_cached(seq)?.prediction)
    }

    /// Attention weights of every head in every layer, for inspection.
    pub fn attention_maps(&self, seq: &TokenSequence) -> Result<Vec<Vec<Mat>>, TransformerError> {
        Ok(self.forward_cached(seq)?.layers.into_iter().map(|l| l.attn).collect())
    }

    fn forward_cached(&self, seq: &TokenSequence) -> Result<ForwardCache, TransformerError> {
        let mut x = self.embed(seq)?;
        let dh = self.config.d_head();
        let mut layers = Vec::with_capacity(self.config.n_layers);
        for lp in &self.params.layers {
            let q = x.matmul(&lp.wq);
            let k = x.matmul(&lp.wk);
            let v = x.matmul(&lp.wv);
            let mut concat = Mat::zeros(x.rows(), x.cols());
            let mut attn = Vec::with_capacity(self.config.n_heads);
            for h in 0..self.config.n_heads {
                let (qh, kh, vh) = (q.columns(h * dh, dh), k.columns(h * dh, dh), v.columns(h * dh, dh));
                let a = attention_weights(&qh, &kh, dh);
                concat.set_columns(h * dh, &a.matmul(&vh));
                attn.push(a);
            }
            let r1 = x.add(&concat.matmul(&lp.wo));
            let (n1, ln1) = layer_norm(&r1, &lp.ln1_g, &lp.ln1_b);
            let mut f1 = n1.matmul(&lp.ff1_w);
            f1.add_row_broadcast(&lp.ff1_b);
            let g = f1.map(gelu);
            let mut f2 = g.matmul(&lp.ff2_w);
            f2.add_row_broadcast(&lp.ff2_b);
            let (out, ln2) = layer_norm(&n1.add(&f2), &lp.ln2_g, &lp.ln2_b);
            layers.push(LayerCache {
                input: x,
                q,
                k,
                v,
                attn,
                concat,
                ln1,
                n1,
                f1,
                g,
                ln2,
            });
            x = out;
        }
        let pooled = x.column_sums().scale(1.0 / x.rows() as f64);
        let mut out = pooled.matmul(&self.params.head_w);
        out.add_row_broadcast(&self.params.head_b);
        self.flop_counter.fetch_add(self.config.dominant_flops(), Ordering::Relaxed);
        self.mac_counter.fetch_add(self.config.full_macs(), Ordering::Relaxed);
        Ok(ForwardCache {
            tokens: seq.tokens.clone(),
            layers,
            pooled,
            prediction: out.as_slice().to_vec(),
        })
    }

    /// Loss `½‖ŷ − y‖²` and the gradient of every parameter.
    pub fn gradients(&self, seq: &TokenSequence, target: &[f64]) -> Result<(f64, Params), TransformerError> {
        if target.len() != self.config.d_out {
            return Err(TransformerError::ShapeMismatch {
                what: "target".into(),
                expected: (1, self.config.d_out),
                found: (1, target.len()),
            });
        }
        let cache = self.forward_cached(seq)?;
        let diff: Vec<f64> = cache.prediction.iter().zip(target).map(|(p, t)| p - t).collect();
        let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>();
        if !loss.is_finite() {
            return Err(TransformerError::NonFiniteLoss);
        }
        Ok((loss, self.backward(&cache, &diff)))
    }

    fn backward(&self, cache: &ForwardCache, dpred: &[f64]) -> Params {
        let cfg = &self.config;
        let p = &self.params;
        let mut grads = Params::zeros(cfg);
        let dy = Mat::from_vec(1, cfg.d_out, dpred.to_vec());
        grads.head_w = cache.pooled.t_matmul(&dy);
        grads.head_b = dy.clone();
        let dpooled = dy.matmul_t(&p.head_w);
        let t = cfg.seq_len;
        let mut dx = Mat::from_fn(t, cfg.d_model, |_, c| dpooled[(0, c)] / t as f64);

        let dh = cfg.d_head();
        let scale = 1.0 / (dh as f64).sqrt();
        for (li, (lp, lc)) in p.layers.iter().zip(&cache.layers).enumerate().rev() {
            let gl = &mut grads.layers[li];
            let (dr2, dg2, db2) = layer_norm_backward(&dx, &lc.ln2, &lp.ln2_g);
            gl.ln2_g = dg2;
            gl.ln2_b = db2;
            gl.ff2_w = lc.g.t_matmul(&dr2);
            gl.ff2_b = dr2.column_sums();
            let dg = dr2.matmul_t(&lp.ff2_w);
            let df1 = Mat::from_fn(dg.rows(), dg.cols(), |r, c| dg[(r, c)] * gelu_grad(lc.f1[(r, c)]));
            gl.ff1_w = lc.n1.t_matmul(&df1);
            gl.ff1_b = df1.column_sums();
            let mut dn1 = dr2;
            dn1.add_assign(&df1.matmul_t(&lp.ff1_w));
            let (dr1, dg1, db1) = layer_norm_backward(&dn1, &lc.ln1, &lp.ln1_g);
            gl.ln1_g = dg1;
            gl.ln1_b = db1;
            gl.wo = lc.concat.t_matmul(&dr1);
            let dconcat = dr1.matmul_t(&lp.wo);
            let mut dq = Mat::zeros(t, cfg.d_model);
            let mut dk = Mat::zeros(t, cfg.d_model);
            let mut dv = Mat::zeros(t, cfg.d_model);
            for h in 0..cfg.n_heads {
                let a = &lc.attn[h];
                let (qh, kh, vh) = (lc.q.columns(h * dh, dh), lc.k.columns(h * dh, dh), lc.v.columns(h * dh, dh));
                let doh = dconcat.columns(h * dh, dh);
                let da = doh.matmul_t(&vh);
                dv.set_columns(h * dh, &a.t_matmul(&doh));
                let mut ds = Mat::zeros(t, t);
                for r in 0..t {
                    let dot: f64 = (0..t).map(|c| da[(r, c)] * a[(r, c)]).sum();
                    for c in 0..t {
                        ds[(r, c)] = a[(r, c)] * (da[(r, c)] - dot) * scale;
                    }
                }
                dq.set_columns(h * dh, &ds.matmul(&kh));
                dk.set_columns(h * dh, &ds.t_matmul(&qh));
            }
            gl.wq = lc.input.t_matmul(&dq);
            gl.wk = lc.input.t_matmul(&dk);
            gl.wv = lc.input.t_matmul(&dv);
            let mut dinput = dr1;
            dinput.add_assign(&dq.matmul_t(&lp.wq));
            dinput.add_assign(&dk.matmul_t(&lp.wk));
            dinput.add_assign(&dv.matmul_t(&lp.wv));
            dx = dinput;
        }
        grads.embed_w = cache.tokens.t_matmul(&dx);
        grads.embed_b = dx.column_sums();
        grads
    }

    /// One plain gradient-descent step on `½‖ŷ − y‖²`; returns the pre-step
    /// loss. A frozen model only updates its head.
    pub fn backward_and_step(&mut self, seq: &TokenSequence, target: &[f64], eta: f64) -> Result<f64, TransformerError> {
        let (loss, grads) = self.gradients(seq, target)?;
        self.apply_gradients(&grads, eta);
        Ok(loss)
    }

    pub fn apply_gradients(&mut self, grads: &Params, eta: f64) {
        if self.frozen {
            self.params.head_w.axpy(-eta, &grads.head_w);
            self.params.head_b.axpy(-eta, &grads.head_b);
        } else {
            self.params.axpy(-eta, grads);
        }
    }

    /// Learning-rate bound `2/λ_max` of the head's local Gauss–Newton matrix
    /// `[p, 1][p, 1]ᵀ` for one sample.
    pub fn head_eta_bound(&self, seq: &TokenSequence) -> Result<f64, TransformerError> {
        let p = self.pooled(seq)?;
        let lambda = p.as_slice().iter().map(|v| v * v).sum::<f64>() + 1.0;
        Ok(2.0 / lambda)
    }
}
