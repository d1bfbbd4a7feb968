//! Continuous side: `dX = f(X, t) dt + eps * g(X, t) ⊙ dW` on `[t0, 1]`.
//!
//! Paths are integrated with Euler–Maruyama (one Gaussian draw per component
//! per step). Ensembles give each path its own stream `rng.split(path)` and
//! reduce in fixed order, so results are bit-identical for any thread count.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::data::{DynamicsConfig, FeatureState, NoiseScheme};
use crate::dynamics::{chain_output, ResidualMap};
use crate::error::invalid;
use crate::rng::RngStream;
use crate::{mean_and_variance, Error, Result};

/// Any component above this magnitude aborts the path.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

/// Default number of Euler–Maruyama steps for [`estimate_u`].
pub const DEFAULT_STEPS: usize = 64;

pub type VectorField = Arc<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;
pub type TestFunction = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub struct SdeSpec {
    pub drift: VectorField,
    pub diffusion_diag: VectorField,
    pub epsilon: f64,
    pub dim: usize,
}

impl fmt::Debug for SdeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeSpec")
            .field("epsilon", &self.epsilon)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl SdeSpec {
    pub fn new(dim: usize, epsilon: f64, drift: VectorField, diffusion_diag: VectorField) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(invalid(format!("noise level must be >= 0, got {epsilon}")));
        }
        if dim == 0 {
            return Err(invalid("SDE dimension must be >= 1"));
        }
        Ok(Self {
            drift,
            diffusion_diag,
            epsilon,
            dim,
        })
    }

    /// Scalar SDE `dX = f dt + eps * g dW` with constant `f` and `g`.
    pub fn constant_1d(f: f64, g: f64, epsilon: f64) -> Result<Self> {
        Self::new(1, epsilon, Arc::new(move |_, _| vec![f]), Arc::new(move |_, _| vec![g]))
    }

    /// Continuous limit of a residual chain: `f = F / eta`, `g = diag(F / eta)`
    /// (`(F_1 ± F_2) / (2 eta)` for shake-shake) and `eps = sqrt(eta) * nu`.
    pub fn from_residuals(residuals: &[ResidualMap], cfg: &DynamicsConfig, dim: usize) -> Result<Self> {
        let eta = cfg.eta();
        let needed = cfg.scheme().branches();
        if residuals.len() != needed {
            return Err(invalid(format!("scheme {} needs {needed} residual map(s)", cfg.scheme())));
        }
        let (drift, diffusion): (VectorField, VectorField) = match cfg.scheme() {
            NoiseScheme::ShakeShake => {
                let (a, b) = (residuals[0].clone(), residuals[1].clone());
                let (a2, b2) = (a.clone(), b.clone());
                (
                    Arc::new(move |x, t| {
                        a.eval(x, t).iter().zip(b.eval(x, t)).map(|(p, q)| (p + q) / (2.0 * eta)).collect()
                    }),
                    Arc::new(move |x, t| {
                        a2.eval(x, t).iter().zip(b2.eval(x, t)).map(|(p, q)| (p - q) / (2.0 * eta)).collect()
                    }),
                )
            }
            _ => {
                let (a, a2) = (residuals[0].clone(), residuals[0].clone());
                (
                    Arc::new(move |x, t| a.eval(x, t).into_iter().map(|v| v / eta).collect()),
                    Arc::new(move |x, t| a2.eval(x, t).into_iter().map(|v| v / eta).collect()),
                )
            }
        };
        Self::new(dim, cfg.epsilon(), drift, diffusion)
    }
}

fn check_state(x: &[f64], step: usize) -> Result<()> {
    for &v in x {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                step,
                context: "SDE path".into(),
            });
        }
        if v.abs() > BLOW_UP_THRESHOLD {
            return Err(Error::BlowUp { step, magnitude: v.abs() });
        }
    }
    Ok(())
}

/// Integrates from `(x0, t0)` to `t = 1` in `steps` equal steps.
pub fn integrate_em(
    spec: &SdeSpec,
    x0: &FeatureState,
    t0: f64,
    steps: usize,
    rng: &mut RngStream,
) -> Result<FeatureState> {
    if !(0.0..1.0).contains(&t0) {
        return Err(invalid(format!("start time must be in [0, 1), got {t0}")));
    }
    if steps == 0 {
        return Err(invalid("step count must be >= 1"));
    }
    if x0.dim() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            got: x0.dim(),
        });
    }
    let dt = (1.0 - t0) / steps as f64;
    let sqrt_dt = dt.sqrt();
    let mut x = x0.values().to_vec();
    for j in 0..steps {
        let t = t0 + j as f64 * dt;
        let f = (spec.drift)(&x, t);
        if spec.epsilon > 0.0 {
            let g = (spec.diffusion_diag)(&x, t);
            for i in 0..x.len() {
                let dw = sqrt_dt * rng.normal();
                x[i] += f[i] * dt + spec.epsilon * g[i] * dw;
            }
        } else {
            for i in 0..x.len() {
                x[i] += f[i] * dt;
            }
        }
        check_state(&x, j + 1)?;
    }
    FeatureState::from_checked(x, steps)
}

/// Terminal states of `num_paths` independent paths from one start point.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub terminal_states: Vec<FeatureState>,
    pub num_paths: usize,
    pub steps: usize,
    pub seed: u64,
}

/// Path `i` draws from `rng.split(i)`.
pub fn sample_ensemble(
    spec: &SdeSpec,
    x0: &FeatureState,
    t0: f64,
    num_paths: usize,
    steps: usize,
    rng: &RngStream,
) -> Result<PathEnsemble> {
    let terminal_states = (0..num_paths)
        .into_par_iter()
        .map(|i| integrate_em(spec, x0, t0, steps, &mut rng.split(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble {
        terminal_states,
        num_paths,
        steps,
        seed: rng.seed(),
    })
}

/// Monte Carlo estimate with per-component standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct McEstimate {
    pub estimate: Vec<f64>,
    pub std_error: Vec<f64>,
}

/// Componentwise sample mean and standard error of a set of vectors.
pub fn summarize(values: &[Vec<f64>]) -> McEstimate {
    let m = values.len();
    let dim = values.first().map_or(0, |v| v.len());
    let mut estimate = Vec::with_capacity(dim);
    let mut std_error = Vec::with_capacity(dim);
    for c in 0..dim {
        let col: Vec<f64> = values.iter().map(|v| v[c]).collect();
        let (mean, var) = mean_and_variance(&col);
        estimate.push(mean);
        std_error.push((var / m as f64).sqrt());
    }
    McEstimate { estimate, std_error }
}

/// Feynman–Kac estimate of `u(x, t) = E[T(X_1) | X_t = x]`.
pub fn estimate_u(
    spec: &SdeSpec,
    terminal: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    x: &FeatureState,
    t: f64,
    num_paths: usize,
    steps: usize,
    rng: &RngStream,
) -> Result<McEstimate> {
    if num_paths < 2 {
        return Err(invalid("at least two paths are needed for a standard error"));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("evaluation time must be in [0, 1], got {t}")));
    }
    if t == 1.0 {
        let v = terminal(x.values());
        let n = v.len();
        return Ok(McEstimate {
            estimate: v,
            std_error: vec![0.0; n],
        });
    }
    let values = (0..num_paths)
        .into_par_iter()
        .map(|i| {
            let end = integrate_em(spec, x, t, steps, &mut rng.split(i as u64))?;
            Ok(terminal(end.values()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(&values))
}

/// One row of a weak-convergence table.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakGap {
    pub blocks: usize,
    pub epsilon: f64,
    pub discrete_mean: f64,
    pub discrete_se: f64,
    pub sde_mean: f64,
    pub sde_se: f64,
}

impl WeakGap {
    pub fn gap(&self) -> f64 {
        (self.discrete_mean - self.sde_mean).abs()
    }

    pub fn combined_se(&self) -> f64 {
        self.discrete_se.hypot(self.sde_se)
    }
}

/// Compares `E[test(X_K)]` of the noisy block chain against `E[test(X_1)]`
/// of its continuous limit, for each block count in `blocks_list`.
///
/// `branches` are continuous drift fields; for `K` blocks the residual maps
/// are `F = f / K`. The SDE side is integrated with `K * sde_refinement`
/// Euler–Maruyama steps (refinement 1 puts both on the same time grid).
#[allow(clippy::too_many_arguments)]
pub fn weak_convergence_check(
    branches: &[VectorField],
    scheme: NoiseScheme,
    test_fn: &(dyn Fn(&[f64]) -> f64 + Sync),
    x0: &FeatureState,
    blocks_list: &[usize],
    num_paths: usize,
    sde_refinement: usize,
    rng: &RngStream,
) -> Result<Vec<WeakGap>> {
    if num_paths < 2 || sde_refinement == 0 {
        return Err(invalid("need >= 2 paths and refinement >= 1"));
    }
    blocks_list
        .iter()
        .enumerate()
        .map(|(row, &k)| {
            let cfg = DynamicsConfig::new(k, scheme)?;
            let residuals: Vec<ResidualMap> = branches
                .iter()
                .map(|f| {
                    let f = f.clone();
                    ResidualMap::from_drift(cfg.eta(), move |x, t| f(x, t))
                })
                .collect();
            let spec = SdeSpec::from_residuals(&residuals, &cfg, x0.dim())?;
            let disc_rng = rng.split_path(&[row as u64, 0]);
            let sde_rng = rng.split_path(&[row as u64, 1]);
            let disc: Vec<f64> = (0..num_paths)
                .into_par_iter()
                .map(|i| chain_output(x0, &residuals, &cfg, &disc_rng.split(i as u64)).map(|x| test_fn(x.values())))
                .collect::<Result<_>>()?;
            let cont: Vec<f64> = (0..num_paths)
                .into_par_iter()
                .map(|i| {
                    integrate_em(&spec, x0, 0.0, k * sde_refinement, &mut sde_rng.split(i as u64))
                        .map(|x| test_fn(x.values()))
                })
                .collect::<Result<_>>()?;
            let (dm, dv) = mean_and_variance(&disc);
            let (sm, sv) = mean_and_variance(&cont);
            Ok(WeakGap {
                blocks: k,
                epsilon: cfg.epsilon(),
                discrete_mean: dm,
                discrete_se: (dv / num_paths as f64).sqrt(),
                sde_mean: sm,
                sde_se: (sv / num_paths as f64).sqrt(),
            })
        })
        .collect()
}
