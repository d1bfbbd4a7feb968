//! Discrete residual-block updates `X_{k+1} = X_k + F(X_k) ⊙ mask`.
//!
//! Every stochastic step is returned already split into its drift part
//! `F(X_k)` (or `(F_1 + F_2) / 2` for shake-shake) and a zero-mean noise part,
//! together with the normalized increment `xi` (mean 0, variance `dt`) that
//! puts the update in Euler–Maruyama form
//! `X_{k+1} = X_k + f dt + eps * g ⊙ xi` with `f = F / eta`, `g = F / eta`.

use std::fmt;
use std::sync::Arc;

use crate::data::{DynamicsConfig, FeatureState, NoiseScheme};
use crate::error::invalid;
use crate::rng::RngStream;
use crate::{Error, Result};

type ResidualFn = dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync;

/// Residual map `F(x, t)`; returns the increment a block adds to its input.
#[derive(Clone)]
pub struct ResidualMap {
    eval: Arc<ResidualFn>,
    description: String,
}

impl fmt::Debug for ResidualMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResidualMap").field("description", &self.description).finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation value.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

fn matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

impl ResidualMap {
    pub fn new<F>(description: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            eval: Arc::new(eval),
            description: description.into(),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(format!("zero({dim})"), move |_, _| vec![0.0; dim])
    }

    pub fn constant(c: Vec<f64>) -> Self {
        Self::new(format!("constant({c:?})"), move |_, _| c.clone())
    }

    /// `F(x) = a * x` componentwise.
    pub fn scaled_identity(a: f64) -> Self {
        Self::new(format!("scaled_identity({a})"), move |x, _| {
            x.iter().map(|v| a * v).collect()
        })
    }

    /// `F(x) = M x` for a square matrix given row by row.
    pub fn linear(matrix: Vec<Vec<f64>>) -> Self {
        let n = matrix.len();
        Self::new(format!("linear({n}x{n})"), move |x, _| matvec(&matrix, x))
    }

    /// `F(x) = W2 a(W1 a(x))`, the pre-activation basic block without
    /// normalization layers.
    pub fn two_layer(w1: Vec<Vec<f64>>, w2: Vec<Vec<f64>>, act: Activation) -> Self {
        Self::new(format!("two_layer({act:?})"), move |x, _| {
            let a0: Vec<f64> = x.iter().map(|&v| act.apply(v)).collect();
            let h: Vec<f64> = matvec(&w1, &a0).into_iter().map(|v| act.apply(v)).collect();
            matvec(&w2, &h)
        })
    }

    /// Map built from a continuous drift field `f(x, t)` as `F = eta * f`.
    pub fn from_drift<F>(eta: f64, drift: F) -> Self
    where
        F: Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::new(format!("eta*f (eta={eta})"), move |x, t| {
            drift(x, t).into_iter().map(|v| eta * v).collect()
        })
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        (self.eval)(x, t)
    }

    fn eval_checked(&self, state: &FeatureState, t: f64) -> Result<Vec<f64>> {
        let out = self.eval(state.values(), t);
        if out.len() != state.dim() {
            return Err(Error::DimensionMismatch {
                expected: state.dim(),
                got: out.len(),
            });
        }
        Ok(out)
    }
}

/// One block update split into drift and noise.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub state_after: FeatureState,
    pub drift_part: Vec<f64>,
    pub noise_part: Vec<f64>,
    /// `xi` with `E[xi] = 0`, `Var[xi] = dt` per component.
    pub normalized_increment: Vec<f64>,
}

fn check_block(cfg: &DynamicsConfig, k: usize) -> Result<()> {
    if k >= cfg.blocks() {
        return Err(invalid(format!("block index {k} out of range 0..{}", cfg.blocks())));
    }
    Ok(())
}

fn finish(
    state: &FeatureState,
    increment: impl Iterator<Item = f64>,
    drift_part: Vec<f64>,
    noise_part: Vec<f64>,
    normalized_increment: Vec<f64>,
    k: usize,
) -> Result<StepRecord> {
    let next: Vec<f64> = state.values().iter().zip(increment).map(|(x, d)| x + d).collect();
    Ok(StepRecord {
        state_after: FeatureState::from_checked(next, k)?,
        drift_part,
        noise_part,
        normalized_increment,
    })
}

/// `X_{k+1} = X_k + F(X_k, k eta)`.
pub fn step_plain(
    state: &FeatureState,
    residual: &ResidualMap,
    cfg: &DynamicsConfig,
    k: usize,
) -> Result<StepRecord> {
    check_block(cfg, k)?;
    let f = residual.eval_checked(state, cfg.time(k))?;
    let n = f.len();
    finish(state, f.clone().into_iter(), f, vec![0.0; n], vec![0.0; n], k)
}

/// Inverted Bernoulli dropout: `X_{k+1} = X_k + F ⊙ gamma / p`, gamma_i ~ Bern(p).
pub fn step_bernoulli(
    state: &FeatureState,
    residual: &ResidualMap,
    cfg: &DynamicsConfig,
    k: usize,
    rng: &mut RngStream,
) -> Result<StepRecord> {
    let NoiseScheme::Bernoulli { p } = cfg.scheme() else {
        return Err(invalid(format!("step_bernoulli called with scheme {}", cfg.scheme())));
    };
    cfg.scheme().validate()?;
    check_block(cfg, k)?;
    let f = residual.eval_checked(state, cfg.time(k))?;
    let gamma: Vec<f64> = (0..f.len())
        .map(|_| if rng.bernoulli(p) { 1.0 } else { 0.0 })
        .collect();
    let scale = (cfg.eta() / (p * (1.0 - p))).sqrt();
    let xi: Vec<f64> = if p < 1.0 {
        gamma.iter().map(|g| (g - p) * scale).collect()
    } else {
        vec![0.0; f.len()]
    };
    let noise: Vec<f64> = f.iter().zip(&gamma).map(|(fi, g)| fi * (g / p - 1.0)).collect();
    let inc = f.iter().zip(&gamma).map(|(fi, g)| fi * (g / p));
    finish(state, inc, f.clone(), noise, xi, k)
}

/// Gaussian dropout: `X_{k+1} = X_k + F ⊙ gamma`, gamma_i ~ N(1, nu^2).
pub fn step_gaussian(
    state: &FeatureState,
    residual: &ResidualMap,
    cfg: &DynamicsConfig,
    k: usize,
    rng: &mut RngStream,
) -> Result<StepRecord> {
    let NoiseScheme::Gaussian { nu } = cfg.scheme() else {
        return Err(invalid(format!("step_gaussian called with scheme {}", cfg.scheme())));
    };
    cfg.scheme().validate()?;
    check_block(cfg, k)?;
    let f = residual.eval_checked(state, cfg.time(k))?;
    let z: Vec<f64> = (0..f.len()).map(|_| rng.normal()).collect();
    let gamma: Vec<f64> = z.iter().map(|zi| 1.0 + nu * zi).collect();
    let xi: Vec<f64> = if nu > 0.0 {
        let s = cfg.eta().sqrt() / nu;
        gamma.iter().map(|g| (g - 1.0) * s).collect()
    } else {
        vec![0.0; f.len()]
    };
    let noise: Vec<f64> = f.iter().zip(&gamma).map(|(fi, g)| fi * (g - 1.0)).collect();
    let inc = f.iter().zip(&gamma).map(|(fi, g)| fi * g);
    finish(state, inc, f.clone(), noise, xi, k)
}

/// Uniform dropout: `X_{k+1} = X_k + F ⊙ (1 + gamma)`, gamma_i ~ U(-beta, beta).
pub fn step_uniform(
    state: &FeatureState,
    residual: &ResidualMap,
    cfg: &DynamicsConfig,
    k: usize,
    rng: &mut RngStream,
) -> Result<StepRecord> {
    let NoiseScheme::Uniform { beta } = cfg.scheme() else {
        return Err(invalid(format!("step_uniform called with scheme {}", cfg.scheme())));
    };
    cfg.scheme().validate()?;
    check_block(cfg, k)?;
    let f = residual.eval_checked(state, cfg.time(k))?;
    let gamma: Vec<f64> = (0..f.len()).map(|_| rng.uniform_range(-beta, beta)).collect();
    let xi: Vec<f64> = if beta > 0.0 {
        let s = (3.0 * cfg.eta()).sqrt() / beta;
        gamma.iter().map(|g| g * s).collect()
    } else {
        vec![0.0; f.len()]
    };
    let noise: Vec<f64> = f.iter().zip(&gamma).map(|(fi, g)| fi * g).collect();
    let inc = f.iter().zip(&gamma).map(|(fi, g)| fi * (1.0 + g));
    finish(state, inc, f.clone(), noise, xi, k)
}

/// Shake-shake: `X_{k+1} = X_k + F_1 gamma + F_2 (1 - gamma)` with one scalar
/// gamma ~ U(0, 1) shared by every component.
pub fn step_shake(
    state: &FeatureState,
    residual_a: &ResidualMap,
    residual_b: &ResidualMap,
    cfg: &DynamicsConfig,
    k: usize,
    rng: &mut RngStream,
) -> Result<StepRecord> {
    let gamma = rng.uniform();
    step_shake_with(state, residual_a, residual_b, cfg, k, gamma)
}

/// Shake-shake step with a fixed blend weight; `gamma = 0.5` is the
/// evaluation-time convention.
pub fn step_shake_with(
    state: &FeatureState,
    residual_a: &ResidualMap,
    residual_b: &ResidualMap,
    cfg: &DynamicsConfig,
    k: usize,
    gamma: f64,
) -> Result<StepRecord> {
    check_block(cfg, k)?;
    let t = cfg.time(k);
    let f1 = residual_a.eval_checked(state, t)?;
    let f2 = residual_b.eval_checked(state, t)?;
    let drift: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| (a + b) / 2.0).collect();
    let noise: Vec<f64> = f1
        .iter()
        .zip(&f2)
        .map(|(a, b)| (a - b) / 2.0 * (2.0 * gamma - 1.0))
        .collect();
    let xi = vec![(2.0 * gamma - 1.0) * (3.0 * cfg.eta()).sqrt(); f1.len()];
    let inc = f1.iter().zip(&f2).map(|(a, b)| a * gamma + b * (1.0 - gamma));
    finish(state, inc, drift, noise, xi, k)
}

/// Dispatches on `cfg.scheme()`. Shake-shake needs two residuals.
pub fn step(
    state: &FeatureState,
    residuals: &[ResidualMap],
    cfg: &DynamicsConfig,
    k: usize,
    rng: &mut RngStream,
) -> Result<StepRecord> {
    let needed = cfg.scheme().branches();
    if residuals.len() != needed {
        return Err(invalid(format!(
            "scheme {} needs {needed} residual map(s), got {}",
            cfg.scheme(),
            residuals.len()
        )));
    }
    match cfg.scheme() {
        NoiseScheme::Plain => step_plain(state, &residuals[0], cfg, k),
        NoiseScheme::Bernoulli { .. } => step_bernoulli(state, &residuals[0], cfg, k, rng),
        NoiseScheme::Gaussian { .. } => step_gaussian(state, &residuals[0], cfg, k, rng),
        NoiseScheme::Uniform { .. } => step_uniform(state, &residuals[0], cfg, k, rng),
        NoiseScheme::ShakeShake => step_shake(state, &residuals[0], &residuals[1], cfg, k, rng),
    }
}

/// Runs all `K` blocks from `x0`. Block `k` draws from `rng.split(k)`.
pub fn run_block_chain(
    x0: &FeatureState,
    residuals: &[ResidualMap],
    cfg: &DynamicsConfig,
    rng: &RngStream,
) -> Result<Vec<StepRecord>> {
    let mut records = Vec::with_capacity(cfg.blocks());
    let mut state = x0.clone();
    for k in 0..cfg.blocks() {
        let mut stream = rng.split(k as u64);
        let rec = step(&state, residuals, cfg, k, &mut stream)?;
        state = rec.state_after.clone();
        records.push(rec);
    }
    Ok(records)
}

/// Final feature `X_K` of a chain, without keeping the per-step records.
pub fn chain_output(
    x0: &FeatureState,
    residuals: &[ResidualMap],
    cfg: &DynamicsConfig,
    rng: &RngStream,
) -> Result<FeatureState> {
    let mut state = x0.clone();
    for k in 0..cfg.blocks() {
        let mut stream = rng.split(k as u64);
        state = step(&state, residuals, cfg, k, &mut stream)?.state_after;
    }
    Ok(state)
}

/// Rebuilds `X_k + f dt + eps * g ⊙ xi` from the continuous coefficients
/// `f`, `g`, `eps` and the recorded `xi`, independently of the step code.
pub fn reconstruct_euler_maruyama(
    state: &FeatureState,
    residuals: &[ResidualMap],
    cfg: &DynamicsConfig,
    k: usize,
    record: &StepRecord,
) -> Vec<f64> {
    let eta = cfg.eta();
    let t = cfg.time(k);
    let (f, g): (Vec<f64>, Vec<f64>) = match cfg.scheme() {
        NoiseScheme::ShakeShake => {
            let a = residuals[0].eval(state.values(), t);
            let b = residuals[1].eval(state.values(), t);
            (
                a.iter().zip(&b).map(|(x, y)| (x + y) / (2.0 * eta)).collect(),
                a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * eta)).collect(),
            )
        }
        _ => {
            let a = residuals[0].eval(state.values(), t);
            let f: Vec<f64> = a.iter().map(|x| x / eta).collect();
            (f.clone(), f)
        }
    };
    let eps = cfg.epsilon();
    state
        .values()
        .iter()
        .enumerate()
        .map(|(i, x)| x + f[i] * eta + eps * g[i] * record.normalized_increment[i])
        .collect()
}

/// Empirical moments of the normalized increment `xi` for one scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentReport {
    pub scheme: NoiseScheme,
    pub draws: usize,
    pub dt: f64,
    pub mean: f64,
    pub variance: f64,
    /// `dt` for nondegenerate noise, `0` otherwise.
    pub expected_variance: f64,
    pub pass: bool,
}

const MOMENT_CHUNK: usize = 1 << 16;

/// Draws `xi` `draws` times from block 0 of a `blocks`-block scalar chain
/// with unit residual. Chunk `c` of 65536 draws uses `rng.split(c)`. Passes
/// when `|mean| <= 4 sqrt(dt / N)` and the variance is within 1% of `dt`
/// (exactly zero for degenerate noise).
pub fn increment_moments(scheme: NoiseScheme, blocks: usize, draws: usize, rng: &RngStream) -> Result<MomentReport> {
    use rayon::prelude::*;
    if draws < 2 {
        return Err(invalid("need at least two draws"));
    }
    let cfg = DynamicsConfig::new(blocks, scheme)?;
    let residuals: Vec<ResidualMap> = match scheme {
        NoiseScheme::ShakeShake => vec![ResidualMap::constant(vec![1.0]), ResidualMap::constant(vec![-1.0])],
        _ => vec![ResidualMap::constant(vec![1.0])],
    };
    let x0 = FeatureState::scalar(0.0)?;
    let chunks = draws.div_ceil(MOMENT_CHUNK);
    let xi: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut stream = rng.split(c as u64);
            let n = MOMENT_CHUNK.min(draws - c * MOMENT_CHUNK);
            (0..n)
                .map(|_| step(&x0, &residuals, &cfg, 0, &mut stream).map(|r| r.normalized_increment[0]))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    let (mean, variance) = crate::mean_and_variance(&xi);
    let dt = cfg.eta();
    let degenerate = scheme.variance() == 0.0;
    let expected_variance = if degenerate { 0.0 } else { dt };
    let pass = if degenerate {
        mean == 0.0 && variance == 0.0
    } else {
        mean.abs() <= 4.0 * (dt / draws as f64).sqrt() && (variance - dt).abs() <= 0.01 * dt
    };
    Ok(MomentReport { scheme, draws, dt, mean, variance, expected_variance, pass })
}
