//! Dense node-level graph transformer with a hop-distance attention bias.
//!
//! Every query attends to every node. The attention logit between `i` and
//! `j` is `q_i . k_j / sqrt(d_head) - lambda * hops(i, j)`, where unreachable
//! pairs use `diameter + 1` hops. `lambda` is shared by all layers and heads
//! and is a controlled hyperparameter: it is never differentiated.
//!
//! Blocks are pre-norm: `h += Attn(LN(h))`, `h += FF(LN(h))`, followed by a
//! final layer norm and a linear readout to two class logits. All matrices
//! are row-major `Vec<f64>`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graphgen::{DistanceMatrix, Graph};
use crate::rng::rng_from_seed;
use crate::task::{LabeledTask, Split};

const LN_EPS: f64 = 1e-5;
pub const N_CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(deny_unknown_fields, default)
)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub lambda_dist_init: f64,
    pub param_seed: u64,
    pub learning_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 2,
            n_heads: 2,
            d_model: 32,
            d_ff: 64,
            lambda_dist_init: 0.0,
            param_seed: 0,
            learning_rate: 3e-3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.into()));
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad("model dimensions must be positive");
        }
        if self.d_model % self.n_heads != 0 {
            return bad("d_model must be divisible by n_heads");
        }
        if !self.lambda_dist_init.is_finite() {
            return bad("lambda_dist_init must be finite");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// A named dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(name: String, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { name, shape, data: vec![0.0; len] }
    }

    fn filled(name: String, shape: Vec<usize>, value: f64) -> Self {
        let len = shape.iter().product();
        Self { name, shape, data: vec![value; len] }
    }
}

/// Affine map `y = x W + b` with `W` stored as `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn new(prefix: &str, fan_in: usize, fan_out: usize, rng: &mut crate::rng::Rng) -> Self {
        let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        let mut weight = Tensor::zeros(format!("{prefix}.weight"), vec![fan_in, fan_out]);
        for w in &mut weight.data {
            *w = rng.random_range(-limit..limit);
        }
        Self { weight, bias: Tensor::zeros(format!("{prefix}.bias"), vec![fan_out]) }
    }

    fn fan_in(&self) -> usize {
        self.weight.shape[0]
    }

    fn fan_out(&self) -> usize {
        self.weight.shape[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub offset: Tensor,
}

impl LayerNorm {
    fn new(prefix: &str, dim: usize) -> Self {
        Self {
            gain: Tensor::filled(format!("{prefix}.gain"), vec![dim], 1.0),
            offset: Tensor::zeros(format!("{prefix}.offset"), vec![dim]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub norm1: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub norm2: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
}

/// All trainable tensors. Gradients and optimizer moments use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub input: Linear,
    pub blocks: Vec<Block>,
    pub final_norm: LayerNorm,
    pub readout: Linear,
}

impl Params {
    /// Xavier-uniform weights, zero biases, unit layer-norm gains.
    pub fn init(cfg: &ModelConfig, feature_dim: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let d = cfg.d_model;
        let input = Linear::new("input", feature_dim, d, &mut rng);
        let blocks = (0..cfg.n_layers)
            .map(|l| {
                let p = |s: &str| format!("blocks.{l}.{s}");
                Block {
                    norm1: LayerNorm::new(&p("norm1"), d),
                    query: Linear::new(&p("query"), d, d, &mut rng),
                    key: Linear::new(&p("key"), d, d, &mut rng),
                    value: Linear::new(&p("value"), d, d, &mut rng),
                    output: Linear::new(&p("output"), d, d, &mut rng),
                    norm2: LayerNorm::new(&p("norm2"), d),
                    ff_in: Linear::new(&p("ff_in"), d, cfg.d_ff, &mut rng),
                    ff_out: Linear::new(&p("ff_out"), cfg.d_ff, d, &mut rng),
                }
            })
            .collect();
        let final_norm = LayerNorm::new("final_norm", d);
        let readout = Linear::new("readout", d, N_CLASSES, &mut rng);
        Self { input, blocks, final_norm, readout }
    }

    /// Tensors in canonical order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.input.weight, &self.input.bias];
        for b in &self.blocks {
            out.extend([
                &b.norm1.gain,
                &b.norm1.offset,
                &b.query.weight,
                &b.query.bias,
                &b.key.weight,
                &b.key.bias,
                &b.value.weight,
                &b.value.bias,
                &b.output.weight,
                &b.output.bias,
                &b.norm2.gain,
                &b.norm2.offset,
                &b.ff_in.weight,
                &b.ff_in.bias,
                &b.ff_out.weight,
                &b.ff_out.bias,
            ]);
        }
        out.extend([&self.final_norm.gain, &self.final_norm.offset, &self.readout.weight, &self.readout.bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.input.weight, &mut self.input.bias];
        for b in &mut self.blocks {
            out.extend([
                &mut b.norm1.gain,
                &mut b.norm1.offset,
                &mut b.query.weight,
                &mut b.query.bias,
                &mut b.key.weight,
                &mut b.key.bias,
                &mut b.value.weight,
                &mut b.value.bias,
                &mut b.output.weight,
                &mut b.output.bias,
                &mut b.norm2.gain,
                &mut b.norm2.offset,
                &mut b.ff_in.weight,
                &mut b.ff_in.bias,
                &mut b.ff_out.weight,
                &mut b.ff_out.bias,
            ]);
        }
        out.extend([
            &mut self.final_norm.gain,
            &mut self.final_norm.offset,
            &mut self.readout.weight,
            &mut self.readout.bias,
        ]);
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
        z
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_scalars() {
            return Err(Error::ShapeMismatch(format!("{} values for {} parameters", flat.len(), self.n_scalars())));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let len = t.data.len();
            t.data.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// True when both hold tensors with identical names and shapes.
    pub fn same_layout(&self, other: &Params) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.name == y.name && x.shape == y.shape)
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }
}

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub first: Params,
    pub second: Params,
    pub step: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Parameters, optimizer moments and the current distance-bias strength.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: Params,
    pub moments: AdamMoments,
    pub lambda_dist: f64,
}

impl ModelState {
    pub fn new(config: ModelConfig, feature_dim: usize) -> Result<Self> {
        config.validate()?;
        if feature_dim == 0 {
            return Err(Error::InvalidParams("feature_dim must be positive".into()));
        }
        let params = Params::init(&config, feature_dim, config.param_seed);
        let zeros = params.zeros_like();
        Ok(Self {
            lambda_dist: config.lambda_dist_init,
            moments: AdamMoments { first: zeros.clone(), second: zeros, step: 0 },
            params,
            config,
        })
    }

    /// Reassembles a state from stored parts (checkpoint loading).
    pub fn from_parts(config: ModelConfig, params: Params, moments: AdamMoments, lambda_dist: f64) -> Result<Self> {
        config.validate()?;
        let expected = Params::init(&config, params.input.fan_in(), 0);
        if !expected.same_layout(&params) || !params.same_layout(&moments.first) || !params.same_layout(&moments.second)
        {
            return Err(Error::ShapeMismatch("tensor layout does not match the model config".into()));
        }
        if !params.all_finite() || !lambda_dist.is_finite() {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        Ok(Self { config, params, moments, lambda_dist })
    }

    pub fn feature_dim(&self) -> usize {
        self.params.input.fan_in()
    }
}

/// Row-stochastic attention matrices of the most recent forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    n: usize,
    n_layers: usize,
    n_heads: usize,
    matrices: Vec<Vec<f64>>,
}

impl AttentionRecord {
    /// `matrices[layer * n_heads + head]` is a row-major `n x n` matrix.
    pub fn new(n: usize, n_layers: usize, n_heads: usize, matrices: Vec<Vec<f64>>) -> Result<Self> {
        if matrices.len() != n_layers * n_heads || matrices.iter().any(|m| m.len() != n * n) {
            return Err(Error::ShapeMismatch("attention matrices do not match n, layers, heads".into()));
        }
        Ok(Self { n, n_layers, n_heads, matrices })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn matrix(&self, layer: usize, head: usize) -> &[f64] {
        &self.matrices[layer * self.n_heads + head]
    }

    pub fn matrices(&self) -> &[Vec<f64>] {
        &self.matrices
    }
}

/// Attention logits for one head: `dots / sqrt(d_head) - lambda * hops`.
pub fn biased_logits(dots: &[f64], dm: &DistanceMatrix, lambda: f64, d_head: usize) -> Vec<f64> {
    let n = dm.n();
    let scale = 1.0 / libm::sqrt(d_head as f64);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            out.push(dots[i * n + j] * scale + lambda * -(dm.surrogate(i, j) as f64));
        }
    }
    out
}

/// Additive attention bias `-lambda * hops` for all pairs.
pub fn distance_bias(dm: &DistanceMatrix, lambda: f64) -> Vec<f64> {
    dm.surrogate_matrix().into_iter().map(|r| lambda * -r).collect()
}

struct NormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

struct LayerCache {
    norm1: NormCache,
    normed1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    mixed: Vec<f64>,
    norm2: NormCache,
    normed2: Vec<f64>,
    pre_act: Vec<f64>,
    act: Vec<f64>,
}

/// Logits plus everything the backward pass needs.
pub struct ForwardPass {
    n: usize,
    logits: Vec<f64>,
    attention: AttentionRecord,
    features: Vec<f64>,
    layers: Vec<LayerCache>,
    final_norm: NormCache,
    final_out: Vec<f64>,
}

impl ForwardPass {
    /// Row-major `n x 2` class logits.
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn attention(&self) -> &AttentionRecord {
        &self.attention
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Full-graph forward pass with the state's current `lambda_dist`.
pub fn forward(g: &Graph, dm: &DistanceMatrix, state: &ModelState) -> Result<ForwardPass> {
    if dm.n() != g.n() {
        return Err(Error::ShapeMismatch("distance matrix does not match graph".into()));
    }
    if g.feature_dim() != state.feature_dim() {
        return Err(Error::ShapeMismatch(format!(
            "graph features have dim {}, model expects {}",
            g.feature_dim(),
            state.feature_dim()
        )));
    }
    let bias = distance_bias(dm, state.lambda_dist);
    forward_raw(g.features(), g.n(), Some(&bias), state)
}

/// Forward pass on a raw feature matrix. `bias`, when given, is an `n x n`
/// additive attention bias; `None` runs the plain transformer.
pub fn forward_raw(features: &[f64], n: usize, bias: Option<&[f64]>, state: &ModelState) -> Result<ForwardPass> {
    let params = &state.params;
    let cfg = &state.config;
    if features.len() != n * params.input.fan_in() || bias.is_some_and(|b| b.len() != n * n) {
        return Err(Error::ShapeMismatch("forward inputs do not match n".into()));
    }
    let d = cfg.d_model;
    let dh = cfg.d_head();
    let heads = cfg.n_heads;
    let scale = 1.0 / libm::sqrt(dh as f64);

    let mut h = linear_forward(features, n, &params.input);
    let mut layers = Vec::with_capacity(params.blocks.len());
    let mut matrices = Vec::with_capacity(params.blocks.len() * heads);
    let mut kt = vec![0.0; dh * n];
    let mut vt = vec![0.0; dh * n];

    for (layer, block) in params.blocks.iter().enumerate() {
        let (normed1, norm1) = layernorm_forward(&h, n, &block.norm1);
        let q = linear_forward(&normed1, n, &block.query);
        let k = linear_forward(&normed1, n, &block.key);
        let v = linear_forward(&normed1, n, &block.value);
        let mut mixed = vec![0.0; n * d];

        for head in 0..heads {
            let off = head * dh;
            transpose_head(&k, n, d, off, dh, &mut kt);
            transpose_head(&v, n, d, off, dh, &mut vt);
            let mut p = vec![0.0; n * n];
            for i in 0..n {
                let row = &mut p[i * n..(i + 1) * n];
                for c in 0..dh {
                    axpy(q[i * d + off + c] * scale, &kt[c * n..(c + 1) * n], row);
                }
                if let Some(b) = bias {
                    for (s, &bb) in row.iter_mut().zip(&b[i * n..(i + 1) * n]) {
                        *s += bb;
                    }
                }
                softmax_in_place(row);
                for c in 0..dh {
                    mixed[i * d + off + c] = dot(row, &vt[c * n..(c + 1) * n]);
                }
            }
            matrices.push(p);
        }

        let attn_out = linear_forward(&mixed, n, &block.output);
        for (x, y) in h.iter_mut().zip(&attn_out) {
            *x += y;
        }
        let (normed2, norm2) = layernorm_forward(&h, n, &block.norm2);
        let pre_act = linear_forward(&normed2, n, &block.ff_in);
        let act: Vec<f64> = pre_act.iter().map(|&x| gelu(x)).collect();
        let ff_out = linear_forward(&act, n, &block.ff_out);
        for (x, y) in h.iter_mut().zip(&ff_out) {
            *x += y;
        }
        if !h.iter().all(|x| x.is_finite()) {
            return Err(Error::NumericFailure { layer });
        }
        layers.push(LayerCache { norm1, normed1, q, k, v, mixed, norm2, normed2, pre_act, act });
    }

    let (final_out, final_norm) = layernorm_forward(&h, n, &params.final_norm);
    let logits = linear_forward(&final_out, n, &params.readout);
    if !logits.iter().all(|x| x.is_finite()) {
        return Err(Error::NumericFailure { layer: params.blocks.len() });
    }
    Ok(ForwardPass {
        n,
        logits,
        attention: AttentionRecord { n, n_layers: params.blocks.len(), n_heads: heads, matrices },
        features: features.to_vec(),
        layers,
        final_norm,
        final_out,
    })
}

/// Mean softmax cross-entropy over one split, and its gradient with respect
/// to every parameter.
pub fn loss_and_grads(
    fwd: &ForwardPass,
    task: &LabeledTask,
    subset: Split,
    state: &ModelState,
) -> Result<(f64, Params)> {
    let nodes = task.split(subset);
    if nodes.is_empty() {
        return Err(Error::EmptySubset(subset.name()));
    }
    if task.n() != fwd.n {
        return Err(Error::ShapeMismatch("task does not match forward pass".into()));
    }
    let n = fwd.n;
    let count = nodes.len() as f64;
    let mut loss = 0.0;
    let mut dlogits = vec![0.0; n * N_CLASSES];
    for &i in nodes {
        let label = task.labels()[i].ok_or_else(|| Error::InvalidParams(format!("node {i} in split has no label")))?;
        let row = &fwd.logits[i * N_CLASSES..(i + 1) * N_CLASSES];
        let max = row[0].max(row[1]);
        let e0 = libm::exp(row[0] - max);
        let e1 = libm::exp(row[1] - max);
        let lse = max + libm::log(e0 + e1);
        loss += lse - row[label as usize];
        let probs = [e0 / (e0 + e1), e1 / (e0 + e1)];
        for c in 0..N_CLASSES {
            let target = if c == label as usize { 1.0 } else { 0.0 };
            dlogits[i * N_CLASSES + c] = (probs[c] - target) / count;
        }
    }
    Ok((loss / count, backward(fwd, &dlogits, state)))
}

fn backward(fwd: &ForwardPass, dlogits: &[f64], state: &ModelState) -> Params {
    let params = &state.params;
    let cfg = &state.config;
    let n = fwd.n;
    let d = cfg.d_model;
    let dh = cfg.d_head();
    let heads = cfg.n_heads;
    let scale = 1.0 / libm::sqrt(dh as f64);
    let mut grads = params.zeros_like();

    let dfinal_out = linear_backward(&fwd.final_out, dlogits, n, &params.readout, &mut grads.readout);
    let mut dh_res = layernorm_backward(&fwd.final_norm, &dfinal_out, n, &params.final_norm, &mut grads.final_norm);

    let mut kt = vec![0.0; dh * n];
    let mut vt = vec![0.0; dh * n];
    let mut dkt = vec![0.0; dh * n];
    let mut dvt = vec![0.0; dh * n];
    let mut dp = vec![0.0; n];
    let mut ds = vec![0.0; n];

    for (layer, (block, cache)) in params.blocks.iter().zip(&fwd.layers).enumerate().rev() {
        let gb = &mut grads.blocks[layer];

        // Feed-forward sublayer.
        let dact = linear_backward(&cache.act, &dh_res, n, &block.ff_out, &mut gb.ff_out);
        let dpre: Vec<f64> = dact.iter().zip(&cache.pre_act).map(|(&g, &x)| g * gelu_grad(x)).collect();
        let dnormed2 = linear_backward(&cache.normed2, &dpre, n, &block.ff_in, &mut gb.ff_in);
        let dmid = layernorm_backward(&cache.norm2, &dnormed2, n, &block.norm2, &mut gb.norm2);
        for (x, y) in dh_res.iter_mut().zip(&dmid) {
            *x += y;
        }

        // Attention sublayer.
        let dmixed = linear_backward(&cache.mixed, &dh_res, n, &block.output, &mut gb.output);
        let mut dq = vec![0.0; n * d];
        let mut dk = vec![0.0; n * d];
        let mut dv = vec![0.0; n * d];
        for head in 0..heads {
            let off = head * dh;
            let p = fwd.attention.matrix(layer, head);
            transpose_head(&cache.k, n, d, off, dh, &mut kt);
            transpose_head(&cache.v, n, d, off, dh, &mut vt);
            dkt.iter_mut().for_each(|x| *x = 0.0);
            dvt.iter_mut().for_each(|x| *x = 0.0);
            for i in 0..n {
                let prow = &p[i * n..(i + 1) * n];
                dp.iter_mut().for_each(|x| *x = 0.0);
                for c in 0..dh {
                    let g = dmixed[i * d + off + c];
                    axpy(g, &vt[c * n..(c + 1) * n], &mut dp);
                    axpy(g, prow, &mut dvt[c * n..(c + 1) * n]);
                }
                let centre = dot(prow, &dp);
                for ((s, &pj), &gj) in ds.iter_mut().zip(prow).zip(&dp) {
                    *s = pj * (gj - centre);
                }
                for c in 0..dh {
                    dq[i * d + off + c] = scale * dot(&ds, &kt[c * n..(c + 1) * n]);
                    axpy(scale * cache.q[i * d + off + c], &ds, &mut dkt[c * n..(c + 1) * n]);
                }
            }
            for c in 0..dh {
                for j in 0..n {
                    dk[j * d + off + c] = dkt[c * n + j];
                    dv[j * d + off + c] = dvt[c * n + j];
                }
            }
        }
        let mut dnormed1 = linear_backward(&cache.normed1, &dq, n, &block.query, &mut gb.query);
        let from_k = linear_backward(&cache.normed1, &dk, n, &block.key, &mut gb.key);
        let from_v = linear_backward(&cache.normed1, &dv, n, &block.value, &mut gb.value);
        for ((x, a), b) in dnormed1.iter_mut().zip(&from_k).zip(&from_v) {
            *x += a + b;
        }
        let dinput = layernorm_backward(&cache.norm1, &dnormed1, n, &block.norm1, &mut gb.norm1);
        for (x, y) in dh_res.iter_mut().zip(&dinput) {
            *x += y;
        }
    }

    linear_backward(&fwd.features, &dh_res, n, &params.input, &mut grads.input);
    grads
}

/// One Adam step with bias correction. `lambda_dist` is left alone.
pub fn train_step(state: &mut ModelState, grads: &Params) -> Result<()> {
    if !state.params.same_layout(grads) {
        return Err(Error::ShapeMismatch("gradient layout does not match parameters".into()));
    }
    let lr = state.config.learning_rate;
    let moments = &mut state.moments;
    moments.step += 1;
    let t = moments.step as f64;
    let correct1 = 1.0 - libm::pow(ADAM_BETA1, t);
    let correct2 = 1.0 - libm::pow(ADAM_BETA2, t);
    let grads = grads.tensors();
    let firsts = moments.first.tensors_mut();
    let seconds = moments.second.tensors_mut();
    for (((p, g), m), v) in state.params.tensors_mut().into_iter().zip(grads).zip(firsts).zip(seconds) {
        for (((p, &g), m), v) in p.data.iter_mut().zip(&g.data).zip(m.data.iter_mut()).zip(v.data.iter_mut()) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / correct1;
            let v_hat = *v / correct2;
            *p -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPS);
        }
    }
    Ok(())
}

/// Predicted class per node; ties go to class 0.
pub fn predictions(logits: &[f64]) -> Vec<u8> {
    logits.chunks_exact(N_CLASSES).map(|row| u8::from(row[1] > row[0])).collect()
}

/// Fraction of the split whose argmax logit matches the label.
pub fn evaluate(logits: &[f64], task: &LabeledTask, subset: Split) -> Result<f64> {
    let nodes = task.split(subset);
    if nodes.is_empty() {
        return Err(Error::EmptySubset(subset.name()));
    }
    if logits.len() != task.n() * N_CLASSES {
        return Err(Error::ShapeMismatch("logits do not match task".into()));
    }
    let correct = nodes
        .iter()
        .filter(|&&i| {
            let row = &logits[i * N_CLASSES..(i + 1) * N_CLASSES];
            task.labels()[i] == Some(u8::from(row[1] > row[0]))
        })
        .count();
    Ok(correct as f64 / nodes.len() as f64)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the loop vectorize without reassociation flags.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut tail = 0.0;
    for idx in 4 * chunks..a.len() {
        tail += a[idx] * b[idx];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn transpose_head(m: &[f64], n: usize, d: usize, off: usize, dh: usize, out: &mut [f64]) {
    for i in 0..n {
        for c in 0..dh {
            out[c * n + i] = m[i * d + off + c];
        }
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = libm::exp(*x - max);
        sum += *x;
    }
    let inv = 1.0 / sum;
    row.iter_mut().for_each(|x| *x *= inv);
}

fn linear_forward(x: &[f64], n: usize, lin: &Linear) -> Vec<f64> {
    let (fin, fout) = (lin.fan_in(), lin.fan_out());
    let mut y = Vec::with_capacity(n * fout);
    for _ in 0..n {
        y.extend_from_slice(&lin.bias.data);
    }
    for i in 0..n {
        let yi = &mut y[i * fout..(i + 1) * fout];
        for k in 0..fin {
            axpy(x[i * fin + k], &lin.weight.data[k * fout..(k + 1) * fout], yi);
        }
    }
    y
}

/// Accumulates weight and bias gradients; returns the input gradient.
fn linear_backward(x: &[f64], dy: &[f64], n: usize, lin: &Linear, grad: &mut Linear) -> Vec<f64> {
    let (fin, fout) = (lin.fan_in(), lin.fan_out());
    let mut dx = vec![0.0; n * fin];
    for i in 0..n {
        let dyi = &dy[i * fout..(i + 1) * fout];
        axpy(1.0, dyi, &mut grad.bias.data);
        for k in 0..fin {
            axpy(x[i * fin + k], dyi, &mut grad.weight.data[k * fout..(k + 1) * fout]);
            dx[i * fin + k] = dot(dyi, &lin.weight.data[k * fout..(k + 1) * fout]);
        }
    }
    dx
}

fn layernorm_forward(x: &[f64], n: usize, ln: &LayerNorm) -> (Vec<f64>, NormCache) {
    let d = ln.gain.data.len();
    let mut y = vec![0.0; n * d];
    let mut xhat = vec![0.0; n * d];
    let mut inv_std = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / libm::sqrt(var + LN_EPS);
        inv_std[i] = inv;
        for c in 0..d {
            let xh = (row[c] - mean) * inv;
            xhat[i * d + c] = xh;
            y[i * d + c] = xh * ln.gain.data[c] + ln.offset.data[c];
        }
    }
    (y, NormCache { xhat, inv_std })
}

fn layernorm_backward(cache: &NormCache, dy: &[f64], n: usize, ln: &LayerNorm, grad: &mut LayerNorm) -> Vec<f64> {
    let d = ln.gain.data.len();
    let mut dx = vec![0.0; n * d];
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let dyi = &dy[i * d..(i + 1) * d];
        for c in 0..d {
            grad.gain.data[c] += dyi[c] * xh[c];
            grad.offset.data[c] += dyi[c];
            dxhat[c] = dyi[c] * ln.gain.data[c];
        }
        let sum = dxhat.iter().sum::<f64>();
        let sum_xh = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>();
        let k = cache.inv_std[i] / d as f64;
        for c in 0..d {
            dx[i * d + c] = k * (d as f64 * dxhat[c] - sum - xh[c] * sum_xh);
        }
    }
    dx
}

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2)) + x * FRAC_1_SQRT_2PI * libm::exp(-0.5 * x * x)
}
