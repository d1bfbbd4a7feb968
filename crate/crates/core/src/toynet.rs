//! Small dense residual classifier with inverted Bernoulli dropout on every
//! block:
//!
//! ```text
//! X_0     = S^T x
//! X_{k+1} = X_k + (W2_k a(W1_k a(X_k))) ⊙ gamma_k / p
//! logits  = A^T X_K + b
//! ```
//!
//! `gamma_k` holds one Bernoulli(p) draw per component, resampled on every
//! train-mode forward pass; eval mode uses `gamma ≡ 1`, `p = 1`.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::dynamics::Activation;
use crate::error::invalid;
use crate::rng::RngStream;
use crate::{pairwise_sum, Error, Result};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(invalid("ragged matrix rows"));
        }
        Ok(Self { rows: r, cols: c, data: rows.concat() })
    }

    fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut RngStream) -> Self {
        Self { rows, cols, data: (0..rows * cols).map(|_| rng.normal() * std).collect() }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// `M v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data.chunks_exact(self.cols).map(|row| dot(row, v)).collect()
    }

    /// `M^T v`.
    pub fn mul_t_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &vi) in self.data.chunks_exact(self.cols).zip(v) {
            for (o, &m) in out.iter_mut().zip(row) {
                *o += m * vi;
            }
        }
        out
    }

    /// `M += u v^T`.
    fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        for (row, &ui) in self.data.chunks_exact_mut(self.cols).zip(u) {
            for (m, &vj) in row.iter_mut().zip(v) {
                *m += ui * vj;
            }
        }
    }

    fn axpy(&mut self, a: f64, other: &Matrix) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub w1: Matrix,
    pub w2: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyResNetParams {
    /// Input map, `d × n`.
    pub s: Matrix,
    pub blocks: Vec<Block>,
    /// Head weights, `n × m`.
    pub a: Matrix,
    pub b: Vec<f64>,
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub d: usize,
    pub n: usize,
    pub blocks: usize,
    pub m: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self { d: 2, n: 16, blocks: 8, m: 2 }
    }
}

impl ToyResNetParams {
    pub fn zeros(dims: Dims, activation: Activation) -> Self {
        let Dims { d, n, blocks, m } = dims;
        Self {
            s: Matrix::zeros(d, n),
            blocks: (0..blocks).map(|_| Block { w1: Matrix::zeros(n, n), w2: Matrix::zeros(n, n) }).collect(),
            a: Matrix::zeros(n, m),
            b: vec![0.0; m],
            activation,
        }
    }

    /// Gaussian initialization with fan-in scaling; block output weights are
    /// further damped by `1 / sqrt(K)` so the stack starts near identity.
    pub fn init(dims: Dims, activation: Activation, rng: &mut RngStream) -> Result<Self> {
        let Dims { d, n, blocks, m } = dims;
        if d == 0 || n == 0 || m < 2 {
            return Err(invalid(format!("bad dims {dims:?}: need d, n >= 1 and m >= 2")));
        }
        let s = Matrix::gaussian(d, n, (1.0 / d as f64).sqrt(), rng);
        let w_std = (1.0 / n as f64).sqrt();
        let damp = 1.0 / (blocks.max(1) as f64).sqrt();
        let blocks = (0..blocks)
            .map(|_| Block {
                w1: Matrix::gaussian(n, n, w_std, rng),
                w2: Matrix::gaussian(n, n, w_std * damp, rng),
            })
            .collect();
        let a = Matrix::gaussian(n, m, w_std, rng);
        Ok(Self { s, blocks, a, b: vec![0.0; m], activation })
    }

    pub fn dims(&self) -> Dims {
        Dims { d: self.s.rows, n: self.s.cols, blocks: self.blocks.len(), m: self.b.len() }
    }

    pub fn validate(&self) -> Result<()> {
        let Dims { n, m, .. } = self.dims();
        let ok = self.a.rows == n
            && self.a.cols == m
            && self.blocks.iter().all(|bl| {
                bl.w1.rows == n && bl.w1.cols == n && bl.w2.rows == n && bl.w2.cols == n
            });
        if !ok {
            return Err(invalid("inconsistent parameter dimensions"));
        }
        if self.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite { step: 0, context: "toynet parameters".into() });
        }
        Ok(())
    }

    /// Flat views in checkpoint order: S, then W1_k, W2_k for each block,
    /// then A, then b.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.s.data];
        for bl in &self.blocks {
            out.push(&bl.w1.data);
            out.push(&bl.w2.data);
        }
        out.push(&self.a.data);
        out.push(&self.b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.s.data];
        for bl in &mut self.blocks {
            out.push(&mut bl.w1.data);
            out.push(&mut bl.w2.data);
        }
        out.push(&mut self.a.data);
        out.push(&mut self.b);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn axpy(&mut self, a: f64, g: &ToyResNetParams) {
        self.s.axpy(a, &g.s);
        for (bl, gb) in self.blocks.iter_mut().zip(&g.blocks) {
            bl.w1.axpy(a, &gb.w1);
            bl.w2.axpy(a, &gb.w2);
        }
        self.a.axpy(a, &g.a);
        for (x, y) in self.b.iter_mut().zip(&g.b) {
            *x += a * y;
        }
    }

    fn scale(&mut self, c: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= c);
        }
    }
}

/// Gradients share the parameter layout.
pub type Grads = ToyResNetParams;

/// One labeled input.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub label: usize,
}

/// Per-block multiplier vectors, `masks[k][j]`.
pub type Masks = Vec<Vec<f64>>;

/// Forward-pass mode.
pub enum Mode<'a> {
    /// Fresh Bernoulli(p) masks from the stream.
    Train(&'a mut RngStream),
    /// Masks ≡ 1 and `p = 1`.
    Eval,
    /// Given 0/1 masks, divided by `p` as in training.
    Frozen(&'a [Vec<f64>]),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    /// `X_0 .. X_K`.
    pub states: Vec<Vec<f64>>,
    /// `a(X_k)` for each block input.
    pub a0: Vec<Vec<f64>>,
    pub z1: Vec<Vec<f64>>,
    pub a1: Vec<Vec<f64>>,
    /// Effective multipliers `gamma_k / p` actually applied.
    pub multipliers: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid(format!("survival probability must be in (0, 1], got {p}")));
    }
    Ok(())
}

/// Forward pass with explicit per-block multipliers (`gamma_k / p` already
/// folded in).
pub fn forward_with_multipliers(params: &ToyResNetParams, x: &[f64], multipliers: Masks) -> Result<ForwardCache> {
    let Dims { d, n, blocks, .. } = params.dims();
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    if multipliers.len() != blocks || multipliers.iter().any(|m| m.len() != n) {
        return Err(invalid("mask shape does not match the network"));
    }
    let act = params.activation;
    let mut states = Vec::with_capacity(blocks + 1);
    let mut a0s = Vec::with_capacity(blocks);
    let mut z1s = Vec::with_capacity(blocks);
    let mut a1s = Vec::with_capacity(blocks);
    states.push(params.s.mul_t_vec(x));
    for (k, bl) in params.blocks.iter().enumerate() {
        let xk = &states[k];
        let a0: Vec<f64> = xk.iter().map(|&v| act.apply(v)).collect();
        let z1 = bl.w1.mul_vec(&a0);
        let a1: Vec<f64> = z1.iter().map(|&v| act.apply(v)).collect();
        let r = bl.w2.mul_vec(&a1);
        let next: Vec<f64> = xk.iter().zip(&r).zip(&multipliers[k]).map(|((x, r), g)| x + r * g).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k + 1, context: "toynet activations".into() });
        }
        a0s.push(a0);
        z1s.push(z1);
        a1s.push(a1);
        states.push(next);
    }
    let mut logits = params.a.mul_t_vec(&states[blocks]);
    for (l, b) in logits.iter_mut().zip(&params.b) {
        *l += b;
    }
    Ok(ForwardCache { input: x.to_vec(), states, a0: a0s, z1: z1s, a1: a1s, multipliers, logits })
}

/// Forward pass; returns the logits together with everything backprop needs.
pub fn forward(params: &ToyResNetParams, x: &[f64], p: f64, mode: Mode<'_>) -> Result<ForwardCache> {
    check_p(p)?;
    let Dims { n, blocks, .. } = params.dims();
    let multipliers = match mode {
        Mode::Eval => vec![vec![1.0; n]; blocks],
        Mode::Train(rng) => (0..blocks)
            .map(|_| (0..n).map(|_| if rng.bernoulli(p) { 1.0 / p } else { 0.0 }).collect())
            .collect(),
        Mode::Frozen(masks) => masks.iter().map(|m| m.iter().map(|g| g / p).collect()).collect(),
    };
    forward_with_multipliers(params, x, multipliers)
}

/// Draws one set of 0/1 masks.
pub fn sample_masks(dims: Dims, p: f64, rng: &mut RngStream) -> Masks {
    (0..dims.blocks)
        .map(|_| (0..dims.n).map(|_| if rng.bernoulli(p) { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// `-log softmax(logits)[label]` and its gradient in the logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() - (logits[label] - max);
    let mut g: Vec<f64> = exps.iter().map(|e| e / z).collect();
    g[label] -= 1.0;
    (loss, g)
}

#[inline]
fn act_grad(act: Activation, pre: f64, post: f64) -> f64 {
    match act {
        Activation::Tanh => 1.0 - post * post,
        _ => act.derivative(pre),
    }
}

/// Adds the gradient of `weight * CE(cache)` into `grads`.
fn backward(params: &ToyResNetParams, cache: &ForwardCache, dlogits: &[f64], weight: f64, grads: &mut Grads) {
    let act = params.activation;
    let k_total = params.blocks.len();
    let dl: Vec<f64> = dlogits.iter().map(|g| g * weight).collect();
    for (gb, d) in grads.b.iter_mut().zip(&dl) {
        *gb += d;
    }
    grads.a.add_outer(&cache.states[k_total], &dl);
    let mut dx = params.a.mul_vec(&dl);
    for k in (0..k_total).rev() {
        let bl = &params.blocks[k];
        let gb = &mut grads.blocks[k];
        let xk = &cache.states[k];
        let dr: Vec<f64> = dx.iter().zip(&cache.multipliers[k]).map(|(d, g)| d * g).collect();
        gb.w2.add_outer(&dr, &cache.a1[k]);
        let da1 = bl.w2.mul_t_vec(&dr);
        let dz1: Vec<f64> = da1
            .iter()
            .zip(cache.z1[k].iter().zip(&cache.a1[k]))
            .map(|(d, (z, a))| d * act_grad(act, *z, *a))
            .collect();
        gb.w1.add_outer(&dz1, &cache.a0[k]);
        let da0 = bl.w1.mul_t_vec(&dz1);
        for ((d, g), (x, a)) in dx.iter_mut().zip(&da0).zip(xk.iter().zip(&cache.a0[k])) {
            *d += g * act_grad(act, *x, *a);
        }
    }
    grads.s.add_outer(&cache.input, &dx);
}

fn check_batch(params: &ToyResNetParams, batch: &[LabeledPoint]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = params.b.len();
    if let Some(bad) = batch.iter().find(|s| s.label >= m) {
        return Err(invalid(format!("label {} out of range for {m} classes", bad.label)));
    }
    Ok(())
}

fn loss_and_grads_from(params: &ToyResNetParams, batch: &[LabeledPoint], caches: Vec<ForwardCache>) -> Result<(f64, Grads)> {
    let mut grads = ToyResNetParams::zeros(params.dims(), params.activation);
    let w = 1.0 / batch.len() as f64;
    let mut losses = Vec::with_capacity(batch.len());
    for (s, cache) in batch.iter().zip(&caches) {
        let (l, dl) = cross_entropy(&cache.logits, s.label);
        losses.push(l);
        backward(params, cache, &dl, w, &mut grads);
    }
    let loss = pairwise_sum(&losses) * w;
    if !loss.is_finite() {
        return Err(Error::NonFinite { step: 0, context: "cross-entropy".into() });
    }
    Ok((loss, grads))
}

/// Mean cross-entropy over the batch and its exact gradient through the
/// sampled masks. Masks are drawn sample by sample from `rng`.
pub fn loss_and_grads(
    params: &ToyResNetParams,
    batch: &[LabeledPoint],
    p: f64,
    rng: &mut RngStream,
) -> Result<(f64, Grads)> {
    check_batch(params, batch)?;
    let caches = batch
        .iter()
        .map(|s| forward(params, &s.x, p, Mode::Train(rng)))
        .collect::<Result<Vec<_>>>()?;
    loss_and_grads_from(params, batch, caches)
}

/// [`loss_and_grads`] with one frozen 0/1 mask set per sample.
pub fn loss_and_grads_frozen(
    params: &ToyResNetParams,
    batch: &[LabeledPoint],
    p: f64,
    masks: &[Masks],
) -> Result<(f64, Grads)> {
    check_batch(params, batch)?;
    if masks.len() != batch.len() {
        return Err(Error::DimensionMismatch { expected: batch.len(), got: masks.len() });
    }
    let caches = batch
        .iter()
        .zip(masks)
        .map(|(s, m)| forward(params, &s.x, p, Mode::Frozen(m)))
        .collect::<Result<Vec<_>>>()?;
    loss_and_grads_from(params, batch, caches)
}

/// Eval-mode mean loss and accuracy.
pub fn evaluate(params: &ToyResNetParams, data: &[LabeledPoint]) -> Result<(f64, f64)> {
    check_batch(params, data)?;
    let rows = data
        .iter()
        .map(|s| {
            let c = forward(params, &s.x, 1.0, Mode::Eval)?;
            let (l, _) = cross_entropy(&c.logits, s.label);
            let pred = argmax(&c.logits);
            Ok((l, if pred == s.label { 1.0 } else { 0.0 }))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = data.len() as f64;
    let losses: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let hits: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok((pairwise_sum(&losses) / n, pairwise_sum(&hits) / n))
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub p: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub dims: Dims,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.1,
            weight_decay: 1e-4,
            seed: 0,
            dims: Dims::default(),
            activation: Activation::Tanh,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_p(self.p)?;
        if self.batch_size == 0 {
            return Err(invalid("batch size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(invalid(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(invalid(format!("weight decay must be >= 0, got {}", self.weight_decay)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainResult {
    pub params: ToyResNetParams,
    pub history: Vec<EpochRecord>,
}

impl TrainResult {
    /// `val_loss - train_loss` at the last epoch.
    pub fn final_gap(&self) -> f64 {
        let r = self.history.last().expect("history holds the initial evaluation");
        r.val_loss - r.train_loss
    }
}

/// Plain minibatch SGD with an L2 penalty `weight_decay / 2 * ||theta||^2`
/// on all weights (biases excluded). Streams under `(seed, 0x7e7)`:
/// `split(0)` initializes, `split_path([1, epoch])` shuffles, and
/// `split_path([2, epoch, batch])` draws the masks.
pub fn train(train_set: &[LabeledPoint], val_set: &[LabeledPoint], cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let root = RngStream::new(cfg.seed, 0x7e7);
    let mut params = ToyResNetParams::init(cfg.dims, cfg.activation, &mut root.split(0))?;
    check_batch(&params, train_set)?;
    check_batch(&params, val_set)?;
    let record = |epoch: usize, params: &ToyResNetParams| -> Result<EpochRecord> {
        let (train_loss, train_acc) = evaluate(params, train_set)?;
        let (val_loss, val_acc) = evaluate(params, val_set)?;
        Ok(EpochRecord { epoch, train_loss, val_loss, train_acc, val_acc })
    };
    let mut history = vec![record(0, &params)?];
    let bs = cfg.batch_size.min(train_set.len());
    for epoch in 1..=cfg.epochs {
        let order = root.split_path(&[1, epoch as u64]).permutation(train_set.len());
        for (bi, chunk) in order.chunks(bs).enumerate() {
            let batch: Vec<LabeledPoint> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let mut rng = root.split_path(&[2, epoch as u64, bi as u64]);
            let (_, grads) = loss_and_grads(&params, &batch, cfg.p, &mut rng)
                .map_err(|e| match e {
                    Error::NonFinite { context, .. } => Error::NonFinite { step: epoch, context },
                    other => other,
                })?;
            let bias = params.b.clone();
            if cfg.weight_decay > 0.0 {
                params.scale(1.0 - cfg.learning_rate * cfg.weight_decay);
                params.b = bias;
            }
            params.axpy(-cfg.learning_rate, &grads);
        }
        history.push(record(epoch, &params)?);
    }
    Ok(TrainResult { params, history })
}

/// Trains one model per seed in parallel; results follow `seeds` order.
pub fn train_seeds(
    train_set: &[LabeledPoint],
    val_set: &[LabeledPoint],
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<TrainResult>> {
    seeds
        .par_iter()
        .map(|&seed| train(train_set, val_set, &TrainConfig { seed, ..*cfg }))
        .collect()
}

/// Two Gaussian clusters in 2D with centers `(±separation / 2, 0)`, unit
/// spread, and each label flipped with probability `flip`.
pub fn two_cluster_dataset(size: usize, separation: f64, flip: f64, seed: u64) -> Result<Vec<LabeledPoint>> {
    if size == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(0.0..=1.0).contains(&flip) {
        return Err(invalid(format!("flip probability must be in [0, 1], got {flip}")));
    }
    let root = RngStream::new(seed, 0x2c1u64);
    Ok((0..size)
        .map(|i| {
            let mut r = root.split(i as u64);
            let class = i % 2;
            let cx = if class == 1 { separation / 2.0 } else { -separation / 2.0 };
            let x = vec![cx + r.normal(), r.normal()];
            let label = if r.bernoulli(flip) { 1 - class } else { class };
            LabeledPoint { x, label }
        })
        .collect())
}

pub const BUILTIN_SIZE: usize = 512;
pub const BUILTIN_SEPARATION: f64 = 2.0;
pub const BUILTIN_FLIP: f64 = 0.1;

/// The built-in noisy train / validation pair.
pub fn builtin_noisy_dataset(seed: u64) -> Result<(Vec<LabeledPoint>, Vec<LabeledPoint>)> {
    let train = two_cluster_dataset(BUILTIN_SIZE, BUILTIN_SEPARATION, BUILTIN_FLIP, seed)?;
    let val = two_cluster_dataset(BUILTIN_SIZE, BUILTIN_SEPARATION, BUILTIN_FLIP, seed ^ 0x5eed_0001)?;
    Ok((train, val))
}

const CHECKPOINT_MAGIC: &str = "viscoflow-toynet 1";

/// Text checkpoint:
///
/// ```text
/// viscoflow-toynet 1
/// dims <d> <n> <K> <m>
/// activation <tanh|relu|identity>
/// <name> <rows> <cols>
/// <row 0 values, space separated>
/// ...
/// ```
///
/// Tensors follow in the order `S`, `W1_0`, `W2_0`, ..., `A`, `b` (`b` as a
/// `1 × m` row). Values print in shortest round-trip form, so a load
/// restores the parameters bit for bit.
pub fn checkpoint_to_string(params: &ToyResNetParams) -> String {
    let Dims { d, n, blocks, m } = params.dims();
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(out, "dims {d} {n} {blocks} {m}");
    let _ = writeln!(out, "activation {}", activation_name(params.activation));
    let mut put = |name: String, rows: usize, cols: usize, data: &[f64]| {
        let _ = writeln!(out, "{name} {rows} {cols}");
        for row in data.chunks(cols.max(1)) {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    };
    put("S".into(), d, n, &params.s.data);
    for (k, bl) in params.blocks.iter().enumerate() {
        put(format!("W1_{k}"), n, n, &bl.w1.data);
        put(format!("W2_{k}"), n, n, &bl.w2.data);
    }
    put("A".into(), n, m, &params.a.data);
    put("b".into(), 1, m, &params.b);
    out
}

pub fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Tanh => "tanh",
        Activation::Relu => "relu",
        Activation::Identity => "identity",
    }
}

pub fn parse_activation(s: &str) -> Result<Activation> {
    match s.trim() {
        "tanh" => Ok(Activation::Tanh),
        "relu" => Ok(Activation::Relu),
        "identity" | "linear" => Ok(Activation::Identity),
        other => Err(invalid(format!("unknown activation `{other}`"))),
    }
}

pub fn checkpoint_from_str(text: &str) -> Result<ToyResNetParams> {
    let perr = |m: &str| Error::Parse(format!("checkpoint: {m}"));
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CHECKPOINT_MAGIC) {
        return Err(perr("bad header"));
    }
    let nums = |line: Option<&str>, key: &str| -> Result<Vec<usize>> {
        let line = line.ok_or_else(|| perr("truncated"))?;
        let mut it = line.split_whitespace();
        if it.next() != Some(key) {
            return Err(perr(&format!("expected `{key}`")));
        }
        it.map(|t| t.parse().map_err(|_| perr("bad integer"))).collect()
    };
    let dims = nums(lines.next(), "dims")?;
    if dims.len() != 4 {
        return Err(perr("dims needs 4 values"));
    }
    let dims = Dims { d: dims[0], n: dims[1], blocks: dims[2], m: dims[3] };
    let act_line = lines.next().ok_or_else(|| perr("truncated"))?;
    let act = parse_activation(act_line.strip_prefix("activation").ok_or_else(|| perr("expected `activation`"))?)?;
    let mut params = ToyResNetParams::zeros(dims, act);
    let mut names = vec!["S".to_string()];
    for k in 0..dims.blocks {
        names.push(format!("W1_{k}"));
        names.push(format!("W2_{k}"));
    }
    names.push("A".into());
    names.push("b".into());
    for (name, tensor) in names.iter().zip(params.tensors_mut()) {
        let shape = nums(lines.next(), name)?;
        if shape.len() != 2 || shape[0] * shape[1] != tensor.len() {
            return Err(perr(&format!("shape mismatch for {name}")));
        }
        let mut filled = 0;
        for _ in 0..shape[0] {
            let line = lines.next().ok_or_else(|| perr("truncated"))?;
            for tok in line.split_whitespace() {
                if filled >= tensor.len() {
                    return Err(perr(&format!("too many values in {name}")));
                }
                tensor[filled] = tok.parse().map_err(|_| perr(&format!("bad value `{tok}`")))?;
                filled += 1;
            }
        }
        if filled != tensor.len() {
            return Err(perr(&format!("too few values in {name}")));
        }
    }
    params.validate()?;
    Ok(params)
}

pub fn save_checkpoint(params: &ToyResNetParams, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(params))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ToyResNetParams> {
    checkpoint_from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ToyResNetParams {
        ToyResNetParams::init(Dims { d: 2, n: 4, blocks: 3, m: 3 }, Activation::Tanh, &mut RngStream::from_seed(1)).unwrap()
    }

    #[test]
    fn dead_network_outputs_bias() {
        let mut p = ToyResNetParams::zeros(Dims::default(), Activation::Tanh);
        p.b = vec![0.25, -1.5];
        let c = forward(&p, &[3.0, -2.0], 0.7, Mode::Train(&mut RngStream::from_seed(0))).unwrap();
        assert_eq!(c.logits, p.b);
    }

    #[test]
    fn uniform_logits_give_log_m() {
        let p = ToyResNetParams::zeros(Dims { d: 2, n: 3, blocks: 2, m: 5 }, Activation::Tanh);
        let batch = vec![LabeledPoint { x: vec![1.0, 2.0], label: 3 }];
        let (l, _) = loss_and_grads(&p, &batch, 1.0, &mut RngStream::from_seed(0)).unwrap();
        assert_eq!(l, 5f64.ln());
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = small();
        let back = checkpoint_from_str(&checkpoint_to_string(&p)).unwrap();
        assert_eq!(back, p);
        assert!(checkpoint_from_str("nope").is_err());
    }

    #[test]
    fn zero_epochs_history() {
        let data = two_cluster_dataset(16, 4.0, 0.0, 0).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let r = train(&data, &data, &cfg).unwrap();
        assert_eq!(r.history.len(), 1);
        assert_eq!(r.history[0].epoch, 0);
    }

    #[test]
    fn bad_config_rejected() {
        assert!(TrainConfig { p: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { p: 1.1, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..TrainConfig::default() }.validate().is_err());
    }
}
