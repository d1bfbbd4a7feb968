//! Loss functionals over the scalar drift `f` for the 1D binary task.
//!
//! With the identity input map and sigmoid head, a sample `y` is predicted as
//! `u(y, 0)`: `sigma(y + f)` for the plain network and
//! `E[sigma(y + f + eps f W_1)]` under noise. `J_0(f)` and `J_eps(f)` average
//! the discrepancy between prediction and label over the dataset.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::{dataset_digest, FeatureState, Sample1D};
use crate::error::invalid;
use crate::pde1d::{
    constant_field, solve_kolmogorov_fd, viscous_solution_analytic, Grid1D, TerminalCondition1D,
};
use crate::rng::RngStream;
use crate::sde::{estimate_u, SdeSpec};
use crate::{pairwise_sum, sigmoid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossMetric {
    /// Mean absolute distance.
    L1,
    /// Mean squared distance.
    L2,
    /// Root of the mean squared distance.
    L2Root,
}

impl LossMetric {
    #[inline]
    pub fn distance(self, prediction: f64, target: f64) -> f64 {
        let d = prediction - target;
        match self {
            LossMetric::L1 => d.abs(),
            LossMetric::L2 | LossMetric::L2Root => d * d,
        }
    }

    /// Derivative of [`distance`](Self::distance) in the prediction.
    #[inline]
    pub fn distance_derivative(self, prediction: f64, target: f64) -> f64 {
        let d = prediction - target;
        match self {
            LossMetric::L1 => d.signum(),
            LossMetric::L2 | LossMetric::L2Root => 2.0 * d,
        }
    }

    /// Reduces per-sample distances to a loss.
    pub fn aggregate(self, distances: &[f64]) -> f64 {
        let mean = pairwise_sum(distances) / distances.len() as f64;
        match self {
            LossMetric::L2Root => mean.sqrt(),
            _ => mean,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossMetric::L1 => "l1",
            LossMetric::L2 => "l2",
            LossMetric::L2Root => "l2-root",
        }
    }
}

impl FromStr for LossMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l1" => Ok(LossMetric::L1),
            "l2" => Ok(LossMetric::L2),
            "l2-root" | "l2_root" | "rms" => Ok(LossMetric::L2Root),
            other => Err(invalid(format!("unknown loss metric `{other}`"))),
        }
    }
}

/// How `u(y, 0)` is computed for `eps > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolverRoute {
    /// Gaussian-kernel convolution by adaptive quadrature.
    Analytic,
    /// Finite differences on `[x_min, x_max]` with `nx` points and the
    /// smallest stable time step count.
    Fd { x_min: f64, x_max: f64, nx: usize },
    /// Feynman–Kac Monte Carlo with `paths` paths of `steps` steps each.
    Mc { paths: usize, steps: usize },
}

impl SolverRoute {
    pub const DEFAULT_FD: SolverRoute = SolverRoute::Fd {
        x_min: -20.0,
        x_max: 20.0,
        nx: 801,
    };

    pub const DEFAULT_MC: SolverRoute = SolverRoute::Mc {
        paths: 10_000,
        steps: 16,
    };

    pub fn name(&self) -> &'static str {
        match self {
            SolverRoute::Analytic => "analytic",
            SolverRoute::Fd { .. } => "fd",
            SolverRoute::Mc { .. } => "mc",
        }
    }
}

impl fmt::Display for SolverRoute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverRoute::Analytic => write!(f, "analytic"),
            SolverRoute::Fd { x_min, x_max, nx } => write!(f, "fd(x=[{x_min},{x_max}],nx={nx})"),
            SolverRoute::Mc { paths, steps } => write!(f, "mc(paths={paths},steps={steps})"),
        }
    }
}

fn check_dataset(dataset: &[Sample1D]) -> Result<()> {
    if dataset.is_empty() {
        Err(Error::EmptyDataset)
    } else {
        Ok(())
    }
}

/// `J_0(f) = mean_y ||sigma(y + f) - h(y)||`.
pub fn loss_plain(f: f64, dataset: &[Sample1D], metric: LossMetric) -> Result<f64> {
    check_dataset(dataset)?;
    let d: Vec<f64> = dataset
        .iter()
        .map(|s| metric.distance(sigmoid(s.y + f), s.target()))
        .collect();
    Ok(metric.aggregate(&d))
}

/// Predictions `u(y_i, 0)` for every sample. `rng` is used by the Monte
/// Carlo route only; sample `i` draws from `rng.split(i)`.
pub fn predictions(
    f: f64,
    eps: f64,
    dataset: &[Sample1D],
    route: SolverRoute,
    rng: &RngStream,
) -> Result<Vec<f64>> {
    if !(eps >= 0.0) {
        return Err(invalid(format!("viscosity must be >= 0, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(dataset.iter().map(|s| sigmoid(s.y + f)).collect());
    }
    let terminal = TerminalCondition1D::sigmoid();
    match route {
        SolverRoute::Analytic => dataset
            .iter()
            .map(|s| viscous_solution_analytic(f, eps, &terminal, s.y, 0.0))
            .collect(),
        SolverRoute::Fd { x_min, x_max, nx } => {
            let grid = Grid1D::stable(x_min, x_max, nx, f.abs(), eps * eps * f * f)?;
            let field = solve_kolmogorov_fd(&constant_field(f), &constant_field(f), eps, &terminal, &grid)?;
            Ok(dataset.iter().map(|s| field.interpolate(0, s.y)).collect())
        }
        SolverRoute::Mc { paths, steps } => Ok(mc_predictions(f, eps, dataset, paths, steps, rng)?.0),
    }
}

fn mc_predictions(
    f: f64,
    eps: f64,
    dataset: &[Sample1D],
    paths: usize,
    steps: usize,
    rng: &RngStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let spec = SdeSpec::constant_1d(f, f, eps)?;
    let terminal = |x: &[f64]| vec![sigmoid(x[0])];
    let mut est = Vec::with_capacity(dataset.len());
    let mut se = Vec::with_capacity(dataset.len());
    for (i, s) in dataset.iter().enumerate() {
        let e = estimate_u(&spec, &terminal, &FeatureState::scalar(s.y)?, 0.0, paths, steps, &rng.split(i as u64))?;
        est.push(e.estimate[0]);
        se.push(e.std_error[0]);
    }
    Ok((est, se))
}

/// `J_eps(f) = mean_y ||u(y, 0) - h(y)||`; delegates to [`loss_plain`] at
/// `eps = 0`.
pub fn loss_viscous(
    f: f64,
    eps: f64,
    dataset: &[Sample1D],
    metric: LossMetric,
    route: SolverRoute,
    rng: &RngStream,
) -> Result<f64> {
    check_dataset(dataset)?;
    if eps == 0.0 {
        return loss_plain(f, dataset, metric);
    }
    let u = predictions(f, eps, dataset, route, rng)?;
    let d: Vec<f64> = u.iter().zip(dataset).map(|(u, s)| metric.distance(*u, s.target())).collect();
    Ok(metric.aggregate(&d))
}

/// Monte Carlo `J_eps(f)` with a delta-method standard error.
pub fn loss_viscous_mc(
    f: f64,
    eps: f64,
    dataset: &[Sample1D],
    metric: LossMetric,
    paths: usize,
    steps: usize,
    rng: &RngStream,
) -> Result<(f64, f64)> {
    check_dataset(dataset)?;
    if eps == 0.0 {
        return Ok((loss_plain(f, dataset, metric)?, 0.0));
    }
    let (u, se) = mc_predictions(f, eps, dataset, paths, steps, rng)?;
    let n = dataset.len() as f64;
    let d: Vec<f64> = u.iter().zip(dataset).map(|(u, s)| metric.distance(*u, s.target())).collect();
    let loss = metric.aggregate(&d);
    let mut var = 0.0;
    for ((u, s), e) in u.iter().zip(dataset).zip(&se) {
        let mut w = metric.distance_derivative(*u, s.target()) / n;
        if metric == LossMetric::L2Root && loss > 0.0 {
            w /= 2.0 * loss;
        }
        var += w * w * e * e;
    }
    Ok((loss, var.sqrt()))
}

/// Loss values on an `eps × f` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Landscape {
    pub f_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    /// `values[e][i]` is the loss at `(eps_grid[e], f_grid[i])`.
    pub values: Vec<Vec<f64>>,
    pub metric: LossMetric,
    pub dataset_digest: String,
    pub route: SolverRoute,
    pub seed: u64,
}

impl Landscape {
    pub fn row(&self, eps_index: usize) -> &[f64] {
        &self.values[eps_index]
    }
}

/// `n` points from `lo` to `hi` (inclusive) at spacing `step`.
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(hi >= lo) || !(step > 0.0) {
        return Err(invalid(format!("bad grid [{lo}, {hi}] step {step}")));
    }
    let n = ((hi - lo) / step).round() as usize + 1;
    Ok((0..n)
        .map(|i| if i + 1 == n && n > 1 { hi } else { lo + i as f64 * step })
        .collect())
}

fn check_sorted(grid: &[f64], name: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid(format!("{name} grid is empty")));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid(format!("{name} grid must be strictly ascending")));
    }
    Ok(())
}

/// Evaluates `J_eps(f)` on every `(eps, f)` cell. Cells run in parallel;
/// cell `(e, i)` uses the stream `(seed, 0).split(e).split(i)`.
pub fn sweep_landscape(
    dataset: &[Sample1D],
    f_grid: &[f64],
    eps_grid: &[f64],
    metric: LossMetric,
    route: SolverRoute,
    seed: u64,
) -> Result<Landscape> {
    check_dataset(dataset)?;
    check_sorted(f_grid, "f")?;
    check_sorted(eps_grid, "eps")?;
    let root = RngStream::new(seed, 0);
    let values = eps_grid
        .iter()
        .enumerate()
        .map(|(e, &eps)| {
            f_grid
                .par_iter()
                .enumerate()
                .map(|(i, &f)| loss_viscous(f, eps, dataset, metric, route, &root.split_path(&[e as u64, i as u64])))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Landscape {
        f_grid: f_grid.to_vec(),
        eps_grid: eps_grid.to_vec(),
        values,
        metric,
        dataset_digest: dataset_digest(dataset),
        route,
        seed,
    })
}

/// Sum of absolute consecutive differences.
pub fn total_variation(values: &[f64]) -> f64 {
    let d: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    pairwise_sum(&d)
}

/// Interior indices strictly below both neighbors.
pub fn strict_local_minima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] < values[i - 1] && values[i] < values[i + 1])
        .collect()
}

/// Index of the smallest value; ties go to the smaller index.
pub fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
        .0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverdampingRow {
    pub eps: f64,
    pub best_f: f64,
    /// `J_eps(best_f)`, the training objective at its grid minimizer.
    pub best_loss: f64,
    /// `J_0(best_f)`, the same parameter evaluated without noise.
    pub plain_loss: f64,
}

/// Grid-minimizes `J_eps` for each `eps` and re-evaluates the minimizer
/// noise-free.
pub fn overdamping_probe(
    dataset: &[Sample1D],
    metric: LossMetric,
    eps_list: &[f64],
    f_grid: &[f64],
) -> Result<Vec<OverdampingRow>> {
    let land = sweep_landscape(dataset, f_grid, eps_list, metric, SolverRoute::Analytic, 0)?;
    eps_list
        .iter()
        .enumerate()
        .map(|(e, &eps)| {
            let row = land.row(e);
            let i = argmin(row);
            Ok(OverdampingRow {
                eps,
                best_f: f_grid[i],
                best_loss: row[i],
                plain_loss: loss_plain(f_grid[i], dataset, metric)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(y: f64, h: u8) -> Vec<Sample1D> {
        vec![Sample1D::new(y, h).unwrap()]
    }

    #[test]
    fn plain_loss_single_sample() {
        let d = one(0.0, 1);
        assert_eq!(loss_plain(0.0, &d, LossMetric::L2).unwrap(), 0.25);
        assert_eq!(loss_plain(0.0, &d, LossMetric::L1).unwrap(), 0.5);
        assert_eq!(loss_plain(0.0, &d, LossMetric::L2Root).unwrap(), 0.5);
        assert!(loss_plain(40.0, &d, LossMetric::L2).unwrap() < 1e-30);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(matches!(loss_plain(0.0, &[], LossMetric::L2), Err(Error::EmptyDataset)));
    }

    #[test]
    fn zero_viscosity_delegates_bitwise() {
        let d = vec![
            Sample1D::new(0.3, 1).unwrap(),
            Sample1D::new(-1.2, 0).unwrap(),
            Sample1D::new(2.5, 0).unwrap(),
        ];
        let rng = RngStream::from_seed(0);
        for f in [-3.0, -0.1, 0.0, 1.7] {
            for route in [SolverRoute::Analytic, SolverRoute::DEFAULT_FD, SolverRoute::DEFAULT_MC] {
                assert_eq!(
                    loss_viscous(f, 0.0, &d, LossMetric::L2, route, &rng).unwrap().to_bits(),
                    loss_plain(f, &d, LossMetric::L2).unwrap().to_bits()
                );
            }
        }
    }

    #[test]
    fn single_cell_sweep_is_single_call() {
        let d = one(0.5, 0);
        let land = sweep_landscape(&d, &[1.25], &[0.4], LossMetric::L2, SolverRoute::Analytic, 3).unwrap();
        let direct = loss_viscous(1.25, 0.4, &d, LossMetric::L2, SolverRoute::Analytic, &RngStream::from_seed(3)).unwrap();
        assert_eq!(land.values, vec![vec![direct]]);
    }

    #[test]
    fn grids_must_be_sorted() {
        let d = one(0.5, 0);
        assert!(sweep_landscape(&d, &[1.0, 0.0], &[0.0], LossMetric::L2, SolverRoute::Analytic, 0).is_err());
        assert!(sweep_landscape(&d, &[], &[0.0], LossMetric::L2, SolverRoute::Analytic, 0).is_err());
    }

    #[test]
    fn helpers() {
        assert_eq!(total_variation(&[0.0, 1.0, 0.5, 2.0]), 3.0);
        assert_eq!(strict_local_minima(&[3.0, 1.0, 2.0, 2.0, 0.0, 5.0, 5.0]), vec![1, 4]);
        assert_eq!(strict_local_minima(&[1.0, 1.0, 1.0]), Vec::<usize>::new());
        assert_eq!(argmin(&[2.0, 1.0, 1.0, 3.0]), 1);
        let g = uniform_grid(-6.0, 6.0, 0.01).unwrap();
        assert_eq!(g.len(), 1201);
        assert_eq!(g[0], -6.0);
        assert_eq!(g[1200], 6.0);
    }

    #[test]
    fn singleton_overdamping_probe() {
        let d = one(0.0, 1);
        let g = uniform_grid(-2.0, 2.0, 0.5).unwrap();
        let rows = overdamping_probe(&d, LossMetric::L2, &[0.0], &g).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].best_f, 2.0);
        assert_eq!(rows[0].best_loss, rows[0].plain_loss);
    }
}
