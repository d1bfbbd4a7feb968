//! Minibatch SGD on the scalar-drift objectives, and a grid basin map for
//! telling sharp minima from flat ones.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::data::Sample1D;
use crate::error::invalid;
use crate::landscape::{loss_plain, uniform_grid, LossMetric};
use crate::pde1d::{viscous_solution_analytic, viscous_solution_analytic_df, TerminalCondition1D};
use crate::quadrature::QuadOptions;
use crate::rng::RngStream;
use crate::{pairwise_sum, sigmoid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradMode {
    Analytic,
    CentralDifference { h: f64 },
}

impl fmt::Display for GradMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradMode::Analytic => write!(f, "analytic"),
            GradMode::CentralDifference { h } => write!(f, "central-difference(h={h})"),
        }
    }
}

impl FromStr for GradMode {
    type Err = Error;

    /// Accepts `analytic`, `central` (h = 1e-5) or `central:<h>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "analytic" {
            return Ok(GradMode::Analytic);
        }
        if s == "central" || s == "central-difference" {
            return Ok(GradMode::CentralDifference { h: 1e-5 });
        }
        if let Some(h) = s.strip_prefix("central:") {
            let h: f64 = h.parse().map_err(|_| Error::Parse(format!("bad step in `{s}`")))?;
            return Ok(GradMode::CentralDifference { h });
        }
        Err(invalid(format!("unknown gradient mode `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub init_f: f64,
    pub seed: u64,
    pub grad_mode: GradMode,
}

impl SgdConfig {
    pub const SMALL_BATCH: usize = 4;
    pub const DEFAULT_LEARNING_RATE: f64 = 10.0;
    pub const DEFAULT_ITERATIONS: usize = 500;

    /// Full-batch defaults for a dataset of `n` samples.
    pub fn large_batch(n: usize, init_f: f64, seed: u64) -> Self {
        Self {
            batch_size: n,
            learning_rate: Self::DEFAULT_LEARNING_RATE,
            iterations: Self::DEFAULT_ITERATIONS,
            init_f,
            seed,
            grad_mode: GradMode::Analytic,
        }
    }

    pub fn small_batch(init_f: f64, seed: u64) -> Self {
        Self { batch_size: Self::SMALL_BATCH, ..Self::large_batch(0, init_f, seed) }
    }

    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        if self.batch_size == 0 || self.batch_size > dataset_len {
            return Err(invalid(format!(
                "batch size must be in 1..={dataset_len}, got {}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(invalid(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if !self.init_f.is_finite() {
            return Err(invalid("initial f must be finite"));
        }
        if let GradMode::CentralDifference { h } = self.grad_mode {
            if !(h > 0.0) {
                return Err(invalid(format!("difference step must be > 0, got {h}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Iterate {
    pub iteration: usize,
    pub f: f64,
    /// Loss of the minibatch whose gradient produced this iterate, evaluated
    /// at the previous iterate. At iteration 0 this is the full loss.
    pub minibatch_loss: f64,
    pub full_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub iterates: Vec<Iterate>,
    pub config: SgdConfig,
}

impl Trajectory {
    pub fn final_f(&self) -> f64 {
        self.iterates.last().map(|it| it.f).unwrap_or(self.config.init_f)
    }
}

/// Loss and `d/df` on a subset of samples.
pub trait Objective: Sync {
    fn loss_and_grad(&self, f: f64, batch: &[Sample1D]) -> Result<(f64, f64)>;

    fn loss(&self, f: f64, batch: &[Sample1D]) -> Result<f64> {
        Ok(self.loss_and_grad(f, batch)?.0)
    }

    fn describe(&self) -> String;
}

/// `J_eps` with the analytic (quadrature) route.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViscousObjective {
    pub eps: f64,
    pub metric: LossMetric,
    pub mode: GradMode,
}

impl ViscousObjective {
    pub fn new(eps: f64, metric: LossMetric, mode: GradMode) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(invalid(format!("viscosity must be >= 0, got {eps}")));
        }
        Ok(Self { eps, metric, mode })
    }
}

impl Objective for ViscousObjective {
    fn loss_and_grad(&self, f: f64, batch: &[Sample1D]) -> Result<(f64, f64)> {
        let loss = viscous_loss_analytic(f, self.eps, batch, self.metric)?;
        let grad = gradient_of_viscous_loss(f, self.eps, batch, self.metric, self.mode)?;
        Ok((loss, grad))
    }

    fn loss(&self, f: f64, batch: &[Sample1D]) -> Result<f64> {
        viscous_loss_analytic(f, self.eps, batch, self.metric)
    }

    fn describe(&self) -> String {
        format!("viscous(eps={},metric={},grad={})", self.eps, self.metric.name(), self.mode)
    }
}

/// Objective that ignores the batch, e.g. a quadratic surrogate.
#[derive(Clone)]
pub struct FnObjective {
    func: Arc<dyn Fn(f64) -> (f64, f64) + Send + Sync>,
    description: String,
}

impl FnObjective {
    pub fn new<F>(description: impl Into<String>, func: F) -> Self
    where
        F: Fn(f64) -> (f64, f64) + Send + Sync + 'static,
    {
        Self { func: Arc::new(func), description: description.into() }
    }

    /// `(f - center)^2`.
    pub fn quadratic(center: f64) -> Self {
        Self::new(format!("quadratic(center={center})"), move |f| {
            let d = f - center;
            (d * d, 2.0 * d)
        })
    }
}

impl Objective for FnObjective {
    fn loss_and_grad(&self, f: f64, _batch: &[Sample1D]) -> Result<(f64, f64)> {
        Ok((self.func)(f))
    }

    fn describe(&self) -> String {
        self.description.clone()
    }
}

fn viscous_loss_analytic(f: f64, eps: f64, batch: &[Sample1D], metric: LossMetric) -> Result<f64> {
    if eps == 0.0 {
        return loss_plain(f, batch, metric);
    }
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let terminal = TerminalCondition1D::sigmoid();
    let d = batch
        .iter()
        .map(|s| Ok(metric.distance(viscous_solution_analytic(f, eps, &terminal, s.y, 0.0)?, s.target())))
        .collect::<Result<Vec<_>>>()?;
    Ok(metric.aggregate(&d))
}

/// `d J_eps / df`. The analytic mode differentiates under the kernel
/// integral (closed form `sigma' = sigma (1 - sigma)` at `eps = 0`); the
/// central mode returns `(J(f+h) - J(f-h)) / 2h`.
pub fn gradient_of_viscous_loss(
    f: f64,
    eps: f64,
    dataset: &[Sample1D],
    metric: LossMetric,
    mode: GradMode,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(eps >= 0.0) {
        return Err(invalid(format!("viscosity must be >= 0, got {eps}")));
    }
    let grad = match mode {
        GradMode::CentralDifference { h } => {
            if !(h > 0.0) {
                return Err(invalid(format!("difference step must be > 0, got {h}")));
            }
            let hi = viscous_loss_analytic(f + h, eps, dataset, metric)?;
            let lo = viscous_loss_analytic(f - h, eps, dataset, metric)?;
            (hi - lo) / (2.0 * h)
        }
        GradMode::Analytic => {
            let terminal = TerminalCondition1D::sigmoid();
            let opts = QuadOptions::default();
            let mut u = Vec::with_capacity(dataset.len());
            let mut du = Vec::with_capacity(dataset.len());
            for s in dataset {
                if eps == 0.0 {
                    let v = sigmoid(s.y + f);
                    u.push(v);
                    du.push(v * (1.0 - v));
                } else {
                    u.push(viscous_solution_analytic(f, eps, &terminal, s.y, 0.0)?);
                    du.push(viscous_solution_analytic_df(f, eps, &terminal, s.y, 0.0, &opts)?);
                }
            }
            let n = dataset.len() as f64;
            let terms: Vec<f64> = dataset
                .iter()
                .zip(u.iter().zip(&du))
                .map(|(s, (u, du))| metric.distance_derivative(*u, s.target()) * du)
                .collect();
            let mean = pairwise_sum(&terms) / n;
            if metric == LossMetric::L2Root {
                let d: Vec<f64> = dataset.iter().zip(&u).map(|(s, u)| metric.distance(*u, s.target())).collect();
                let root = metric.aggregate(&d);
                if root == 0.0 { 0.0 } else { mean / (2.0 * root) }
            } else {
                mean
            }
        }
    };
    if !grad.is_finite() {
        return Err(Error::NonFinite { step: 0, context: format!("gradient at f = {f}") });
    }
    Ok(grad)
}

/// Minibatch SGD `f <- f - lr * grad`. Each epoch draws a fresh permutation
/// from `RngStream::new(seed, 0).split(epoch)` and walks it in chunks of
/// `batch_size`; a trailing short chunk is used as is. A full batch keeps the
/// dataset order, so it reproduces plain gradient descent exactly.
pub fn sgd_run(objective: &dyn Objective, dataset: &[Sample1D], cfg: &SgdConfig) -> Result<Trajectory> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate(dataset.len())?;
    let n = dataset.len();
    let root = RngStream::new(cfg.seed, 0);
    let mut f = cfg.init_f;
    let mut iterates = Vec::with_capacity(cfg.iterations + 1);
    let full0 = objective.loss(f, dataset)?;
    iterates.push(Iterate { iteration: 0, f, minibatch_loss: full0, full_loss: full0 });

    let full_batch = cfg.batch_size == n;
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut epoch = 0u64;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for it in 1..=cfg.iterations {
        let (loss, grad) = if full_batch {
            objective.loss_and_grad(f, dataset)?
        } else {
            if cursor >= n {
                order = root.split(epoch).permutation(n);
                epoch += 1;
                cursor = 0;
            }
            let end = (cursor + cfg.batch_size).min(n);
            batch.clear();
            batch.extend(order[cursor..end].iter().map(|&i| dataset[i]));
            cursor = end;
            objective.loss_and_grad(f, &batch)?
        };
        if !grad.is_finite() {
            return Err(Error::NonFinite { step: it, context: format!("SGD gradient at f = {f}") });
        }
        f -= cfg.learning_rate * grad;
        if !f.is_finite() {
            return Err(Error::NonFinite { step: it, context: "SGD iterate".into() });
        }
        let full_loss = objective.loss(f, dataset)?;
        iterates.push(Iterate { iteration: it, f, minibatch_loss: loss, full_loss });
    }
    Ok(Trajectory { iterates, config: *cfg })
}

/// Plain gradient descent on the whole dataset, for reference.
pub fn gradient_descent(
    objective: &dyn Objective,
    dataset: &[Sample1D],
    learning_rate: f64,
    iterations: usize,
    init_f: f64,
) -> Result<Vec<f64>> {
    let mut f = init_f;
    let mut out = vec![f];
    for _ in 0..iterations {
        f -= learning_rate * objective.loss_and_grad(f, dataset)?.1;
        out.push(f);
    }
    Ok(out)
}

/// Landscape on a dense grid with a steepest-descent basin label per point.
#[derive(Clone, Debug, PartialEq)]
pub struct BasinMap {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Grid index of the sink each point descends to.
    pub sink_of: Vec<usize>,
    /// Sinks in ascending grid order; a basin id is a position here.
    pub sinks: Vec<usize>,
}

impl BasinMap {
    pub const DEFAULT_LO: f64 = -6.0;
    pub const DEFAULT_HI: f64 = 6.0;
    pub const DEFAULT_STEP: f64 = 0.01;

    pub fn from_values(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() || grid.is_empty() {
            return Err(invalid("basin map needs matching nonempty grid and values"));
        }
        let n = grid.len();
        let next = |i: usize| -> usize {
            // Strictly lower neighbor with the smaller value; ties go left.
            let left = (i > 0 && values[i - 1] < values[i]).then(|| i - 1);
            let right = (i + 1 < n && values[i + 1] < values[i]).then(|| i + 1);
            match (left, right) {
                (Some(l), Some(r)) => if values[r] < values[l] { r } else { l },
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (None, None) => i,
            }
        };
        let sinks: Vec<usize> = (0..n).filter(|&i| next(i) == i).collect();
        let mut sink_of = vec![usize::MAX; n];
        for start in 0..n {
            if sink_of[start] != usize::MAX {
                continue;
            }
            let mut path = vec![start];
            let mut i = start;
            loop {
                let j = next(i);
                if j == i || sink_of[j] != usize::MAX {
                    let s = if j == i { i } else { sink_of[j] };
                    for p in path {
                        sink_of[p] = s;
                    }
                    break;
                }
                path.push(j);
                i = j;
            }
        }
        Ok(Self { grid, values, sink_of, sinks })
    }

    /// Scans `J_eps` (analytic route) on `[lo, hi]` at spacing `step`.
    pub fn scan(dataset: &[Sample1D], metric: LossMetric, eps: f64, lo: f64, hi: f64, step: f64) -> Result<Self> {
        let grid = uniform_grid(lo, hi, step)?;
        let values = grid
            .par_iter()
            .map(|&f| viscous_loss_analytic(f, eps, dataset, metric))
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(grid, values)
    }

    pub fn default_scan(dataset: &[Sample1D], metric: LossMetric, eps: f64) -> Result<Self> {
        Self::scan(dataset, metric, eps, Self::DEFAULT_LO, Self::DEFAULT_HI, Self::DEFAULT_STEP)
    }

    pub fn step(&self) -> f64 {
        if self.grid.len() < 2 { 0.0 } else { (self.grid[self.grid.len() - 1] - self.grid[0]) / (self.grid.len() - 1) as f64 }
    }

    fn index_of(&self, f: f64) -> Result<usize> {
        let lo = self.grid[0];
        let hi = self.grid[self.grid.len() - 1];
        if !(f >= lo && f <= hi) {
            return Err(invalid(format!("f = {f} outside basin grid [{lo}, {hi}]")));
        }
        if self.grid.len() == 1 {
            return Ok(0);
        }
        Ok((((f - lo) / self.step()).round() as usize).min(self.grid.len() - 1))
    }

    /// Basin id of the grid point nearest to `f`.
    pub fn classify(&self, f: f64) -> Result<usize> {
        let s = self.sink_of[self.index_of(f)?];
        Ok(self.sinks.binary_search(&s).expect("sink is listed"))
    }

    pub fn minimum_f(&self, id: usize) -> f64 {
        self.grid[self.sinks[id]]
    }

    /// Second central difference at the sink; `None` at the grid ends.
    pub fn flatness(&self, id: usize) -> Option<f64> {
        let i = self.sinks[id];
        if i == 0 || i + 1 == self.grid.len() {
            return None;
        }
        let h = self.step();
        Some((self.values[i - 1] - 2.0 * self.values[i] + self.values[i + 1]) / (h * h))
    }
}

/// Basin id of `f` on the default `[-6, 6]` grid at spacing 0.01.
pub fn basin_classify(f: f64, dataset: &[Sample1D], metric: LossMetric, eps: f64) -> Result<usize> {
    BasinMap::default_scan(dataset, metric, eps)?.classify(f)
}
