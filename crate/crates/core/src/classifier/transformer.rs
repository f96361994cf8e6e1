//! Transformer encoder with mean pooling and an MLP head, with a hand-written
//! backward pass.
//!
//! Per window `x (T x 9)`:
//!
//! ```text
//! h  = x·W_in + b_in + PE
//! for each layer (pre-norm):
//!     h = h + MHA(LN1(h))
//!     h = h + W2·gelu(W1·LN2(h))
//! p  = mean_t LN_f(h)
//! logits = W_h2·gelu(W_h1·p)
//! ```
//!
//! All arithmetic is f64. Parameters are kept f32-representable so the model
//! artifact (f32 on disk) round-trips bit for bit.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{add_assign, add_bias, matmul, matmul_at_acc, matmul_bt, sum_rows_acc};
use super::{softmax, ClassifierError, Prediction};
use crate::features::{PreprocessFlags, ScalerStats, WindowConfig};
use crate::{NUM_CHANNELS, NUM_CLASSES};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const MODEL_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Positional {
    Sinusoidal,
    /// Ablation: no positional signal, making the model permutation invariant
    /// over time steps.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub head_hidden: usize,
    pub positional: Positional,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { d_model: 32, n_heads: 2, n_layers: 2, d_ff: 64, head_hidden: 32, positional: Positional::Sinusoidal }
    }
}

impl ModelConfig {
    /// Small shape used for gradient checks.
    pub fn tiny() -> Self {
        Self { d_model: 8, n_heads: 2, n_layers: 2, d_ff: 16, head_hidden: 8, positional: Positional::Sinusoidal }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let sizes = [self.d_model, self.n_heads, self.n_layers, self.d_ff, self.head_hidden];
        if sizes.contains(&0) || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ClassifierError::InvalidConfig(alloc::format!("{self:?}")));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Weight { fan_in: usize, fan_out: usize },
    Bias,
    Gain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorGroup {
    Input,
    Attention,
    FeedForward,
    Norm,
    Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    pub kind: TensorKind,
    pub group: TensorGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Offsets of every tensor in the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    w_in: usize,
    b_in: usize,
    layers: Vec<LayerOffsets>,
    lnf_g: usize,
    lnf_b: usize,
    wh1: usize,
    bh1: usize,
    wh2: usize,
    bh2: usize,
    pub total: usize,
    pub tensors: Vec<TensorSpec>,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let f = cfg.d_ff;
        let hh = cfg.head_hidden;
        let mut tensors = Vec::new();
        let mut cursor = 0usize;
        let mut alloc_t = |name: String, len: usize, kind: TensorKind, group: TensorGroup| {
            let offset = cursor;
            cursor += len;
            tensors.push(TensorSpec { name, offset, len, kind, group });
            offset
        };
        let w = |fan_in, fan_out| TensorKind::Weight { fan_in, fan_out };
        use TensorGroup as G;
        use TensorKind::{Bias, Gain};

        let w_in = alloc_t("input.w".into(), NUM_CHANNELS * d, w(NUM_CHANNELS, d), G::Input);
        let b_in = alloc_t("input.b".into(), d, Bias, G::Input);
        let mut layers = Vec::new();
        for l in 0..cfg.n_layers {
            let n = |s: &str| alloc::format!("layers.{l}.{s}");
            layers.push(LayerOffsets {
                ln1_g: alloc_t(n("ln1.g"), d, Gain, G::Norm),
                ln1_b: alloc_t(n("ln1.b"), d, Bias, G::Norm),
                wq: alloc_t(n("attn.wq"), d * d, w(d, d), G::Attention),
                bq: alloc_t(n("attn.bq"), d, Bias, G::Attention),
                wk: alloc_t(n("attn.wk"), d * d, w(d, d), G::Attention),
                bk: alloc_t(n("attn.bk"), d, Bias, G::Attention),
                wv: alloc_t(n("attn.wv"), d * d, w(d, d), G::Attention),
                bv: alloc_t(n("attn.bv"), d, Bias, G::Attention),
                wo: alloc_t(n("attn.wo"), d * d, w(d, d), G::Attention),
                bo: alloc_t(n("attn.bo"), d, Bias, G::Attention),
                ln2_g: alloc_t(n("ln2.g"), d, Gain, G::Norm),
                ln2_b: alloc_t(n("ln2.b"), d, Bias, G::Norm),
                w1: alloc_t(n("ff.w1"), d * f, w(d, f), G::FeedForward),
                b1: alloc_t(n("ff.b1"), f, Bias, G::FeedForward),
                w2: alloc_t(n("ff.w2"), f * d, w(f, d), G::FeedForward),
                b2: alloc_t(n("ff.b2"), d, Bias, G::FeedForward),
            });
        }
        let lnf_g = alloc_t("final_ln.g".into(), d, Gain, G::Norm);
        let lnf_b = alloc_t("final_ln.b".into(), d, Bias, G::Norm);
        let wh1 = alloc_t("head.w1".into(), d * hh, w(d, hh), G::Head);
        let bh1 = alloc_t("head.b1".into(), hh, Bias, G::Head);
        let wh2 = alloc_t("head.w2".into(), hh * NUM_CLASSES, w(hh, NUM_CLASSES), G::Head);
        let bh2 = alloc_t("head.b2".into(), NUM_CLASSES, Bias, G::Head);
        Self { w_in, b_in, layers, lnf_g, lnf_b, wh1, bh1, wh2, bh2, total: cursor, tensors }
    }

    /// Index range of the MLP head.
    pub fn head_range(&self) -> core::ops::Range<usize> {
        self.wh1..self.total
    }
}

/// A trained (or freshly initialised) classifier with everything needed to
/// featurise raw recordings.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub window: WindowConfig,
    pub flags: PreprocessFlags,
    pub scaler: Option<ScalerStats>,
    pub train_seed: u64,
    pub version: u16,
    layout: Layout,
    params: Vec<f64>,
}

pub(crate) fn round_to_f32(x: f64) -> f64 {
    x as f32 as f64
}

impl Model {
    /// Xavier-uniform weights, zero biases, unit gains.
    pub fn init(
        config: ModelConfig,
        window: WindowConfig,
        flags: PreprocessFlags,
        scaler: Option<ScalerStats>,
        seed: u64,
    ) -> Result<Self, ClassifierError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = alloc::vec![0.0; layout.total];
        for t in &layout.tensors {
            let dst = &mut params[t.offset..t.offset + t.len];
            match t.kind {
                TensorKind::Weight { fan_in, fan_out } => {
                    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
                    for p in dst {
                        *p = round_to_f32(rng.random_range(-limit..limit));
                    }
                }
                TensorKind::Bias => {}
                TensorKind::Gain => dst.fill(1.0),
            }
        }
        Ok(Self { config, window, flags, scaler, train_seed: seed, version: MODEL_VERSION, layout, params })
    }

    /// Rebuilds a model from stored parameters.
    pub fn from_parts(
        config: ModelConfig,
        window: WindowConfig,
        flags: PreprocessFlags,
        scaler: Option<ScalerStats>,
        train_seed: u64,
        params: Vec<f64>,
    ) -> Result<Self, ClassifierError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(ClassifierError::Shape { expected: layout.total, got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(ClassifierError::InvalidConfig("non-finite parameter".into()));
        }
        Ok(Self { config, window, flags, scaler, train_seed, version: MODEL_VERSION, layout, params })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Zeroes the output layer so every input yields equal logits.
    pub fn zero_output_layer(&mut self) {
        let start = self.layout.wh2;
        self.params[start..self.layout.total].fill(0.0);
    }

    /// Rounds every parameter to the nearest f32.
    pub fn quantize(&mut self) {
        for p in &mut self.params {
            *p = round_to_f32(*p);
        }
    }

    /// FNV-1a over the parameter bit patterns.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for p in &self.params {
            for b in p.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }

    pub fn window_size(&self) -> usize {
        self.window.window_len * NUM_CHANNELS
    }

    fn check_window(&self, window: &[f64]) -> Result<(), ClassifierError> {
        if window.len() != self.window_size() {
            return Err(ClassifierError::Shape { expected: self.window_size(), got: window.len() });
        }
        Ok(())
    }

    pub fn logits(&self, window: &[f64]) -> Result<[f64; NUM_CLASSES], ClassifierError> {
        self.check_window(window)?;
        Ok(self.forward(window).logits)
    }

    pub fn predict_window(&self, window: &[f64]) -> Result<Prediction, ClassifierError> {
        Ok(Prediction::from_logits(&self.logits(window)?))
    }

    /// Cross-entropy of one labelled window.
    pub fn loss(&self, window: &[f64], label: usize) -> Result<f64, ClassifierError> {
        let logits = self.logits(window)?;
        Ok(cross_entropy(&logits, label))
    }

    /// Mean cross-entropy over a batch, summed in batch order.
    pub fn batch_loss(&self, batch: &[(&[f64], usize)]) -> Result<f64, ClassifierError> {
        let mut total = 0.0;
        for (w, label) in batch {
            if *label >= NUM_CLASSES {
                return Err(ClassifierError::BadLabel(*label));
            }
            total += self.loss(w, *label)?;
        }
        Ok(total / batch.len().max(1) as f64)
    }

    /// Mean cross-entropy over a batch and its gradient with respect to every
    /// parameter. Per-example gradients are summed in batch order, so the
    /// result does not depend on how many threads computed them.
    pub fn loss_and_grad(&self, batch: &[(&[f64], usize)]) -> Result<(f64, Vec<f64>), ClassifierError> {
        for (w, label) in batch {
            self.check_window(w)?;
            if *label >= NUM_CLASSES {
                return Err(ClassifierError::BadLabel(*label));
            }
        }
        if batch.is_empty() {
            return Ok((0.0, alloc::vec![0.0; self.layout.total]));
        }
        let per_example = |&(w, label): &(&[f64], usize)| {
            let mut grad = alloc::vec![0.0; self.layout.total];
            let loss = self.backward(w, label, &mut grad);
            (loss, grad)
        };
        #[cfg(feature = "parallel")]
        let results: Vec<(f64, Vec<f64>)> = {
            use rayon::prelude::*;
            batch.par_iter().map(per_example).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let results: Vec<(f64, Vec<f64>)> = batch.iter().map(per_example).collect();

        let scale = 1.0 / batch.len() as f64;
        let mut total_loss = 0.0;
        let mut grad = alloc::vec![0.0; self.layout.total];
        for (loss, g) in &results {
            total_loss += loss;
            add_assign(&mut grad, g);
        }
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok((total_loss * scale, grad))
    }

    fn p(&self, offset: usize, len: usize) -> &[f64] {
        &self.params[offset..offset + len]
    }

    fn forward(&self, x: &[f64]) -> Cache {
        let cfg = &self.config;
        let t = x.len() / NUM_CHANNELS;
        let d = cfg.d_model;
        let f = cfg.d_ff;
        let nh = cfg.n_heads;
        let dh = cfg.head_dim();
        let lay = &self.layout;

        let mut h = matmul(x, self.p(lay.w_in, NUM_CHANNELS * d), t, NUM_CHANNELS, d);
        add_bias(&mut h, self.p(lay.b_in, d));
        if cfg.positional == Positional::Sinusoidal {
            add_assign(&mut h, &positional_encoding(t, d));
        }

        let scale = 1.0 / libm::sqrt(dh as f64);
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for lo in &lay.layers {
            let ln1 = layer_norm(&h, self.p(lo.ln1_g, d), self.p(lo.ln1_b, d), d);
            let mut q = matmul(&ln1.y, self.p(lo.wq, d * d), t, d, d);
            add_bias(&mut q, self.p(lo.bq, d));
            let mut k = matmul(&ln1.y, self.p(lo.wk, d * d), t, d, d);
            add_bias(&mut k, self.p(lo.bk, d));
            let mut v = matmul(&ln1.y, self.p(lo.wv, d * d), t, d, d);
            add_bias(&mut v, self.p(lo.bv, d));

            let mut probs = alloc::vec![0.0; nh * t * t];
            let mut ctx = alloc::vec![0.0; t * d];
            for head in 0..nh {
                let off = head * dh;
                let p = &mut probs[head * t * t..(head + 1) * t * t];
                for i in 0..t {
                    let qi = &q[i * d + off..i * d + off + dh];
                    let row = &mut p[i * t..(i + 1) * t];
                    for j in 0..t {
                        let kj = &k[j * d + off..j * d + off + dh];
                        row[j] = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                    }
                    softmax_in_place(row);
                    let out = &mut ctx[i * d + off..i * d + off + dh];
                    for j in 0..t {
                        let pij = row[j];
                        let vj = &v[j * d + off..j * d + off + dh];
                        for (o, vv) in out.iter_mut().zip(vj) {
                            *o += pij * vv;
                        }
                    }
                }
            }
            let mut attn_out = matmul(&ctx, self.p(lo.wo, d * d), t, d, d);
            add_bias(&mut attn_out, self.p(lo.bo, d));
            add_assign(&mut h, &attn_out);

            let ln2 = layer_norm(&h, self.p(lo.ln2_g, d), self.p(lo.ln2_b, d), d);
            let mut u = matmul(&ln2.y, self.p(lo.w1, d * f), t, d, f);
            add_bias(&mut u, self.p(lo.b1, f));
            let r: Vec<f64> = u.iter().map(|&z| gelu(z)).collect();
            let mut ff = matmul(&r, self.p(lo.w2, f * d), t, f, d);
            add_bias(&mut ff, self.p(lo.b2, d));
            add_assign(&mut h, &ff);

            layers.push(LayerCache { ln1, q, k, v, probs, ctx, ln2, u, r });
        }

        let lnf = layer_norm(&h, self.p(lay.lnf_g, d), self.p(lay.lnf_b, d), d);
        let mut pooled = alloc::vec![0.0; d];
        sum_rows_acc(&lnf.y, d, &mut pooled);
        pooled.iter_mut().for_each(|p| *p /= t as f64);

        let hh = cfg.head_hidden;
        let mut z_pre = matmul(&pooled, self.p(lay.wh1, d * hh), 1, d, hh);
        add_bias(&mut z_pre, self.p(lay.bh1, hh));
        let z: Vec<f64> = z_pre.iter().map(|&v| gelu(v)).collect();
        let mut out = matmul(&z, self.p(lay.wh2, hh * NUM_CLASSES), 1, hh, NUM_CLASSES);
        add_bias(&mut out, self.p(lay.bh2, NUM_CLASSES));
        let logits: [f64; NUM_CLASSES] = core::array::from_fn(|i| out[i]);

        Cache { t, layers, lnf, pooled, z_pre, z, logits }
    }

    /// Accumulates `d loss / d params` for one example into `grad`; returns
    /// the example's loss.
    fn backward(&self, x: &[f64], label: usize, grad: &mut [f64]) -> f64 {
        let cache = self.forward(x);
        let cfg = &self.config;
        let lay = &self.layout;
        let t = cache.t;
        let d = cfg.d_model;
        let f = cfg.d_ff;
        let nh = cfg.n_heads;
        let dh = cfg.head_dim();
        let hh = cfg.head_hidden;

        let probs = softmax(&cache.logits);
        let loss = -libm::log(probs[label].max(f64::MIN_POSITIVE));
        let mut dlogits = probs;
        dlogits[label] -= 1.0;

        // head
        matmul_at_acc(&cache.z, &dlogits, 1, hh, NUM_CLASSES, &mut grad[lay.wh2..lay.wh2 + hh * NUM_CLASSES]);
        add_assign(&mut grad[lay.bh2..lay.bh2 + NUM_CLASSES], &dlogits);
        let dz = matmul_bt(&dlogits, self.p(lay.wh2, hh * NUM_CLASSES), 1, NUM_CLASSES, hh);
        let dz_pre: Vec<f64> = dz.iter().zip(&cache.z_pre).map(|(g, &zp)| g * gelu_grad(zp)).collect();
        matmul_at_acc(&cache.pooled, &dz_pre, 1, d, hh, &mut grad[lay.wh1..lay.wh1 + d * hh]);
        add_assign(&mut grad[lay.bh1..lay.bh1 + hh], &dz_pre);
        let dpooled = matmul_bt(&dz_pre, self.p(lay.wh1, d * hh), 1, hh, d);

        // mean pooling and final norm
        let mut dy = alloc::vec![0.0; t * d];
        for row in dy.chunks_exact_mut(d) {
            for (g, p) in row.iter_mut().zip(&dpooled) {
                *g = p / t as f64;
            }
        }
        let mut dh_res = self.layer_norm_backward(&cache.lnf, &dy, lay.lnf_g, lay.lnf_b, d, grad);

        let scale = 1.0 / libm::sqrt(dh as f64);
        for (lo, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            // feed-forward block: h_out = h_mid + gelu(LN2(h_mid)·W1 + b1)·W2 + b2
            matmul_at_acc(&lc.r, &dh_res, t, f, d, &mut grad[lo.w2..lo.w2 + f * d]);
            sum_rows_acc(&dh_res, d, &mut grad[lo.b2..lo.b2 + d]);
            let dr = matmul_bt(&dh_res, self.p(lo.w2, f * d), t, d, f);
            let du: Vec<f64> = dr.iter().zip(&lc.u).map(|(g, &u)| g * gelu_grad(u)).collect();
            matmul_at_acc(&lc.ln2.y, &du, t, d, f, &mut grad[lo.w1..lo.w1 + d * f]);
            sum_rows_acc(&du, f, &mut grad[lo.b1..lo.b1 + f]);
            let dc = matmul_bt(&du, self.p(lo.w1, d * f), t, f, d);
            let dmid = self.layer_norm_backward(&lc.ln2, &dc, lo.ln2_g, lo.ln2_b, d, grad);
            add_assign(&mut dh_res, &dmid);

            // attention block: h_mid = h_in + ctx·Wo + bo
            matmul_at_acc(&lc.ctx, &dh_res, t, d, d, &mut grad[lo.wo..lo.wo + d * d]);
            sum_rows_acc(&dh_res, d, &mut grad[lo.bo..lo.bo + d]);
            let dctx = matmul_bt(&dh_res, self.p(lo.wo, d * d), t, d, d);

            let mut dq = alloc::vec![0.0; t * d];
            let mut dk = alloc::vec![0.0; t * d];
            let mut dv = alloc::vec![0.0; t * d];
            let mut dp_row = alloc::vec![0.0; t];
            for head in 0..nh {
                let off = head * dh;
                let p = &lc.probs[head * t * t..(head + 1) * t * t];
                for i in 0..t {
                    let dci = &dctx[i * d + off..i * d + off + dh];
                    let prow = &p[i * t..(i + 1) * t];
                    // dP_ij = dctx_i · v_j ; dv_j += P_ij dctx_i
                    let mut dot = 0.0;
                    for j in 0..t {
                        let vj = &lc.v[j * d + off..j * d + off + dh];
                        let g: f64 = dci.iter().zip(vj).map(|(a, b)| a * b).sum();
                        dp_row[j] = g;
                        dot += g * prow[j];
                        let pij = prow[j];
                        let dvj = &mut dv[j * d + off..j * d + off + dh];
                        for (o, c) in dvj.iter_mut().zip(dci) {
                            *o += pij * c;
                        }
                    }
                    // softmax backward, then through the scaled dot product
                    let qi: Vec<f64> = lc.q[i * d + off..i * d + off + dh].to_vec();
                    for j in 0..t {
                        let ds = prow[j] * (dp_row[j] - dot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for e in 0..dh {
                            dq[i * d + off + e] += ds * lc.k[j * d + off + e];
                            dk[j * d + off + e] += ds * qi[e];
                        }
                    }
                }
            }
            let a = &lc.ln1.y;
            let mut da = alloc::vec![0.0; t * d];
            for (dproj, w, b) in [(&dq, lo.wq, lo.bq), (&dk, lo.wk, lo.bk), (&dv, lo.wv, lo.bv)] {
                matmul_at_acc(a, dproj, t, d, d, &mut grad[w..w + d * d]);
                sum_rows_acc(dproj, d, &mut grad[b..b + d]);
                add_assign(&mut da, &matmul_bt(dproj, self.p(w, d * d), t, d, d));
            }
            let din = self.layer_norm_backward(&lc.ln1, &da, lo.ln1_g, lo.ln1_b, d, grad);
            add_assign(&mut dh_res, &din);
        }

        // input projection (positional encoding is constant)
        matmul_at_acc(x, &dh_res, t, NUM_CHANNELS, d, &mut grad[lay.w_in..lay.w_in + NUM_CHANNELS * d]);
        sum_rows_acc(&dh_res, d, &mut grad[lay.b_in..lay.b_in + d]);
        loss
    }

    fn layer_norm_backward(
        &self,
        ln: &LnCache,
        dy: &[f64],
        g_off: usize,
        b_off: usize,
        d: usize,
        grad: &mut [f64],
    ) -> Vec<f64> {
        let gamma = self.p(g_off, d);
        let mut dx = alloc::vec![0.0; dy.len()];
        for (row, (dyr, xr)) in dy.chunks_exact(d).zip(ln.xhat.chunks_exact(d)).enumerate() {
            let rstd = ln.rstd[row];
            let mut mean_dxhat = 0.0;
            let mut mean_dxhat_x = 0.0;
            for e in 0..d {
                grad[g_off + e] += dyr[e] * xr[e];
                grad[b_off + e] += dyr[e];
                let dxh = dyr[e] * gamma[e];
                mean_dxhat += dxh;
                mean_dxhat_x += dxh * xr[e];
            }
            mean_dxhat /= d as f64;
            mean_dxhat_x /= d as f64;
            let out = &mut dx[row * d..(row + 1) * d];
            for e in 0..d {
                let dxh = dyr[e] * gamma[e];
                out[e] = rstd * (dxh - mean_dxhat - xr[e] * mean_dxhat_x);
            }
        }
        dx
    }
}

pub fn cross_entropy(logits: &[f64; NUM_CLASSES], label: usize) -> f64 {
    let probs = softmax(logits);
    -libm::log(probs[label].max(f64::MIN_POSITIVE))
}

struct LnCache {
    y: Vec<f64>,
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

struct LayerCache {
    ln1: LnCache,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    ctx: Vec<f64>,
    ln2: LnCache,
    u: Vec<f64>,
    r: Vec<f64>,
}

struct Cache {
    t: usize,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    pooled: Vec<f64>,
    z_pre: Vec<f64>,
    z: Vec<f64>,
    logits: [f64; NUM_CLASSES],
}

fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], d: usize) -> LnCache {
    let rows = x.len() / d;
    let mut y = alloc::vec![0.0; x.len()];
    let mut xhat = alloc::vec![0.0; x.len()];
    let mut rstd = alloc::vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
        rstd[r] = rs;
        for e in 0..d {
            let xh = (row[e] - mean) * rs;
            xhat[r * d + e] = xh;
            y[r * d + e] = xh * gamma[e] + beta[e];
        }
    }
    LnCache { y, xhat, rstd }
}

/// Exact GELU, `x·Φ(x)`. Smooth, so finite differences agree with the
/// analytic gradient everywhere.
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2));
    let pdf = libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * core::f64::consts::PI);
    cdf + x * pdf
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `PE[t, 2i] = sin(t / 10000^(2i/d))`, `PE[t, 2i+1] = cos(...)`.
pub fn positional_encoding(t: usize, d: usize) -> Vec<f64> {
    let mut pe = alloc::vec![0.0; t * d];
    for pos in 0..t {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / libm::pow(10000.0, 2.0 * pair / d as f64);
            pe[pos * d + i] = if i % 2 == 0 { libm::sin(angle) } else { libm::cos(angle) };
        }
    }
    pe
}
