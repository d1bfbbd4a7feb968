//! Python bindings. Datasets cross the boundary as lists of `(y, label)`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use viscoflow_core::data::{make_dataset_1d, DatasetKind, DatasetSpec, NoiseScheme, Sample1D};
use viscoflow_core::dynamics::increment_moments as core_moments;
use viscoflow_core::landscape::{self, LossMetric, SolverRoute};
use viscoflow_core::optimizer::{self, GradMode, SgdConfig, ViscousObjective};
use viscoflow_core::pde1d::{self, constant_field, Grid1D, TerminalCondition1D};
use viscoflow_core::rng::RngStream;
use viscoflow_core::sde::{self, SdeSpec};
use viscoflow_core::toynet::{self, TrainConfig};
use viscoflow_core::{data::FeatureState, sigmoid, Error};

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn samples(data: Vec<(f64, u8)>) -> PyResult<Vec<Sample1D>> {
    data.into_iter().map(|(y, h)| Sample1D::new(y, h).map_err(py_err)).collect()
}

fn metric(name: &str) -> PyResult<LossMetric> {
    name.parse().map_err(py_err)
}

fn route(name: &str, paths: usize, steps: usize) -> PyResult<SolverRoute> {
    match name {
        "analytic" => Ok(SolverRoute::Analytic),
        "fd" => Ok(SolverRoute::DEFAULT_FD),
        "mc" => Ok(SolverRoute::Mc { paths, steps }),
        other => Err(PyValueError::new_err(format!("unknown route `{other}`"))),
    }
}

/// Built-in 1-D dataset (`rugged`, `double-well`) as `(y, label)` pairs.
#[pyfunction]
#[pyo3(signature = (kind, size = 64, seed = 7))]
fn make_dataset(kind: &str, size: usize, seed: u64) -> PyResult<Vec<(f64, u8)>> {
    let kind: DatasetKind = kind.parse().map_err(py_err)?;
    let d = make_dataset_1d(&DatasetSpec::new(kind, size, seed)).map_err(py_err)?;
    Ok(d.iter().map(|s| (s.y, s.label())).collect())
}

/// `u(x, t)` for constant `f = g`, sigmoid terminal.
#[pyfunction]
#[pyo3(signature = (f, eps, x, t = 0.0))]
fn u_analytic(f: f64, eps: f64, x: f64, t: f64) -> PyResult<f64> {
    pde1d::viscous_solution_analytic(f, eps, &TerminalCondition1D::sigmoid(), x, t).map_err(py_err)
}

/// Finite-difference `u(x, 0)` at each of `xs`.
#[pyfunction]
#[pyo3(signature = (f, eps, xs, nx = 801, x_min = -20.0, x_max = 20.0))]
fn u_fd(f: f64, eps: f64, xs: Vec<f64>, nx: usize, x_min: f64, x_max: f64) -> PyResult<Vec<f64>> {
    let grid = Grid1D::stable(x_min, x_max, nx, f.abs(), eps * eps * f * f).map_err(py_err)?;
    let field = pde1d::solve_kolmogorov_fd(&constant_field(f), &constant_field(f), eps, &TerminalCondition1D::sigmoid(), &grid)
        .map_err(py_err)?;
    Ok(xs.iter().map(|&x| field.interpolate(0, x)).collect())
}

/// Monte Carlo `u(x, 0)`; returns `(estimate, std_error)`.
#[pyfunction]
#[pyo3(signature = (f, eps, x, paths = 10_000, steps = 16, seed = 0))]
fn u_mc(f: f64, eps: f64, x: f64, paths: usize, steps: usize, seed: u64) -> PyResult<(f64, f64)> {
    let spec = SdeSpec::constant_1d(f, f, eps).map_err(py_err)?;
    let terminal = |v: &[f64]| vec![sigmoid(v[0])];
    let state = FeatureState::scalar(x).map_err(py_err)?;
    let e = sde::estimate_u(&spec, &terminal, &state, 0.0, paths, steps, &RngStream::new(seed, 0)).map_err(py_err)?;
    Ok((e.estimate[0], e.std_error[0]))
}

#[pyfunction]
#[pyo3(signature = (f, eps, data, metric_name = "l2", route_name = "analytic", paths = 10_000, steps = 16, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn loss(
    f: f64,
    eps: f64,
    data: Vec<(f64, u8)>,
    metric_name: &str,
    route_name: &str,
    paths: usize,
    steps: usize,
    seed: u64,
) -> PyResult<f64> {
    let d = samples(data)?;
    landscape::loss_viscous(f, eps, &d, metric(metric_name)?, route(route_name, paths, steps)?, &RngStream::new(seed, 0))
        .map_err(py_err)
}

/// Loss landscape; row `e` holds `J_{eps[e]}` over `f_grid`.
#[pyfunction]
#[pyo3(signature = (data, f_grid, eps_grid, metric_name = "l2", route_name = "analytic", paths = 10_000, steps = 16, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    data: Vec<(f64, u8)>,
    f_grid: Vec<f64>,
    eps_grid: Vec<f64>,
    metric_name: &str,
    route_name: &str,
    paths: usize,
    steps: usize,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let d = samples(data)?;
    let land = landscape::sweep_landscape(&d, &f_grid, &eps_grid, metric(metric_name)?, route(route_name, paths, steps)?, seed)
        .map_err(py_err)?;
    Ok(land.values)
}

#[pyfunction]
#[pyo3(signature = (f, eps, data, metric_name = "l2"))]
fn gradient(f: f64, eps: f64, data: Vec<(f64, u8)>, metric_name: &str) -> PyResult<f64> {
    optimizer::gradient_of_viscous_loss(f, eps, &samples(data)?, metric(metric_name)?, GradMode::Analytic).map_err(py_err)
}

/// SGD on `f`; returns the iterate sequence starting at `init_f`.
#[pyfunction]
#[pyo3(signature = (data, eps, batch_size = 0, learning_rate = 10.0, iterations = 500, init_f = 5.0, seed = 0, metric_name = "l2"))]
#[allow(clippy::too_many_arguments)]
fn sgd(
    data: Vec<(f64, u8)>,
    eps: f64,
    batch_size: usize,
    learning_rate: f64,
    iterations: usize,
    init_f: f64,
    seed: u64,
    metric_name: &str,
) -> PyResult<Vec<f64>> {
    let d = samples(data)?;
    let cfg = SgdConfig {
        batch_size: if batch_size == 0 { d.len() } else { batch_size },
        learning_rate,
        iterations,
        init_f,
        seed,
        grad_mode: GradMode::Analytic,
    };
    let obj = ViscousObjective::new(eps, metric(metric_name)?, GradMode::Analytic).map_err(py_err)?;
    let traj = optimizer::sgd_run(&obj, &d, &cfg).map_err(py_err)?;
    Ok(traj.iterates.iter().map(|it| it.f).collect())
}

#[pyfunction]
#[pyo3(signature = (f, data, eps = 0.0, metric_name = "l2"))]
fn basin_classify(f: f64, data: Vec<(f64, u8)>, eps: f64, metric_name: &str) -> PyResult<usize> {
    optimizer::basin_classify(f, &samples(data)?, metric(metric_name)?, eps).map_err(py_err)
}

/// `(mean, variance, expected_variance, pass)` of the normalized increment.
#[pyfunction]
#[pyo3(signature = (scheme, param = 0.9, blocks = 10, draws = 1_000_000, seed = 0))]
fn increment_moments(scheme: &str, param: f64, blocks: usize, draws: usize, seed: u64) -> PyResult<(f64, f64, f64, bool)> {
    let s = match scheme {
        "bernoulli" => NoiseScheme::Bernoulli { p: param },
        "gaussian" => NoiseScheme::Gaussian { nu: param },
        "uniform" => NoiseScheme::Uniform { beta: param },
        "shake" => NoiseScheme::ShakeShake,
        "plain" => NoiseScheme::Plain,
        other => return Err(PyValueError::new_err(format!("unknown scheme `{other}`"))),
    };
    let r = core_moments(s, blocks, draws, &RngStream::new(seed, 0)).map_err(py_err)?;
    Ok((r.mean, r.variance, r.expected_variance, r.pass))
}

/// Trains the toy network on the built-in noisy dataset. Returns per-epoch
/// `(train_loss, val_loss, train_acc, val_acc)`.
#[pyfunction]
#[pyo3(signature = (p = 1.0, epochs = 100, seed = 0, data_seed = 0))]
fn toynet_train(p: f64, epochs: usize, seed: u64, data_seed: u64) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let (train, val) = toynet::builtin_noisy_dataset(data_seed).map_err(py_err)?;
    let cfg = TrainConfig { p, epochs, seed, ..TrainConfig::default() };
    let r = toynet::train(&train, &val, &cfg).map_err(py_err)?;
    Ok(r.history.iter().map(|h| (h.train_loss, h.val_loss, h.train_acc, h.val_acc)).collect())
}

#[pymodule]
fn viscoflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(make_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(u_analytic, m)?)?;
    m.add_function(wrap_pyfunction!(u_fd, m)?)?;
    m.add_function(wrap_pyfunction!(u_mc, m)?)?;
    m.add_function(wrap_pyfunction!(loss, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(gradient, m)?)?;
    m.add_function(wrap_pyfunction!(sgd, m)?)?;
    m.add_function(wrap_pyfunction!(basin_classify, m)?)?;
    m.add_function(wrap_pyfunction!(increment_moments, m)?)?;
    m.add_function(wrap_pyfunction!(toynet_train, m)?)?;
    Ok(())
}
