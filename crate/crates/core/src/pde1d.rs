//! One-dimensional backward Kolmogorov equation
//! `u_t + f u_x + (eps^2 g^2 / 2) u_xx = 0`, `u(x, 1) = T(x)`.
//!
//! Three routes to the same solution:
//! * [`transport_solution`]: the `eps = 0` limit, constant along
//!   characteristics, `u(x, t) = T(x + (1 - t) f)`.
//! * [`viscous_solution_analytic`]: constant coefficients with `g = f`, as a
//!   Gaussian convolution of the terminal condition.
//! * [`solve_kolmogorov_fd`]: explicit upwind / centered finite differences
//!   for general `f(x, t)`, `g(x, t)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::invalid;
use crate::quadrature::{integrate, QuadOptions};
use crate::{sigmoid, Error, Result};

/// Half-width of the convolution window, in kernel standard deviations.
pub const KERNEL_WINDOW: f64 = 10.0;

/// Safety factor applied to the explicit stability bound.
pub const STABILITY_SAFETY: f64 = 0.9;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type CoefficientField = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct TerminalCondition1D {
    eval: ScalarFn,
    derivative: Option<ScalarFn>,
    description: String,
}

impl fmt::Debug for TerminalCondition1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TerminalCondition1D({})", self.description)
    }
}

impl TerminalCondition1D {
    pub fn new<F>(description: impl Into<String>, eval: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            eval: Arc::new(eval),
            derivative: None,
            description: description.into(),
        }
    }

    pub fn with_derivative<F>(mut self, derivative: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.derivative = Some(Arc::new(derivative));
        self
    }

    /// `T(x) = 1 / (1 + e^{-x})`.
    pub fn sigmoid() -> Self {
        Self::new("sigmoid", sigmoid).with_derivative(|x| {
            let s = sigmoid(x);
            s * (1.0 - s)
        })
    }

    /// Shifted and scaled sigmoid `sigma(scale * x + shift)`.
    pub fn logistic(scale: f64, shift: f64) -> Self {
        Self::new(format!("sigmoid({scale}*x+{shift})"), move |x| sigmoid(scale * x + shift))
            .with_derivative(move |x| {
                let s = sigmoid(scale * x + shift);
                scale * s * (1.0 - s)
            })
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant({c})"), move |_| c).with_derivative(|_| 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn derivative(&self, x: f64) -> Option<f64> {
        self.derivative.as_ref().map(|d| d(x))
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

/// Two-class softmax head: `(sigma(z), 1 - sigma(z))` with
/// `z = (a_0 - a_1) . x + (b_0 - b_1)`.
pub fn softmax_binary_terminal(a: [&[f64]; 2], b: [f64; 2], x: &[f64]) -> Result<(f64, f64)> {
    for row in a {
        if row.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: row.len(),
            });
        }
    }
    let z: f64 = a[0].iter().zip(a[1]).zip(x).map(|((p, q), v)| (p - q) * v).sum::<f64>() + (b[0] - b[1]);
    let s = sigmoid(z);
    Ok((s, 1.0 - s))
}

/// Zero-viscosity solution `T(x + (1 - t) f)`.
pub fn transport_solution(f: f64, terminal: &TerminalCondition1D, x: f64, t: f64) -> f64 {
    terminal.eval(x + (1.0 - t) * f)
}

/// Heat-type kernel `phi(s, tau) = N(s; -tau f, tau eps^2 f^2)`.
pub fn kernel(s: f64, tau: f64, f: f64, eps: f64) -> f64 {
    let var = tau * eps * eps * f * f;
    let d = s + tau * f;
    (-d * d / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Total mass of the kernel over its integration window.
pub fn kernel_mass(tau: f64, f: f64, eps: f64) -> Result<f64> {
    let w = eps * f.abs() * tau.sqrt();
    let mu = -tau * f;
    let r = integrate(
        |s| kernel(s, tau, f, eps),
        mu - KERNEL_WINDOW * w,
        mu + KERNEL_WINDOW * w,
        &QuadOptions::default(),
    )?;
    Ok(r.value)
}

/// `u(x, t) = ∫ T(x - s) phi(s, 1 - t) ds` for constant drift `f` and
/// diffusion `g = f`. Routes to [`transport_solution`] when `eps = 0` or
/// `f = 0`.
pub fn viscous_solution_analytic(
    f: f64,
    eps: f64,
    terminal: &TerminalCondition1D,
    x: f64,
    t: f64,
) -> Result<f64> {
    viscous_solution_analytic_with(f, eps, terminal, x, t, &QuadOptions::default())
}

pub fn viscous_solution_analytic_with(
    f: f64,
    eps: f64,
    terminal: &TerminalCondition1D,
    x: f64,
    t: f64,
    opts: &QuadOptions,
) -> Result<f64> {
    if eps < 0.0 {
        return Err(invalid(format!("viscosity must be >= 0, got {eps}")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("time must be in [0, 1], got {t}")));
    }
    if eps == 0.0 || f == 0.0 || t == 1.0 {
        return Ok(transport_solution(f, terminal, x, t));
    }
    let tau = 1.0 - t;
    let w = eps * f.abs() * tau.sqrt();
    let mu = -tau * f;
    let r = integrate(
        |s| terminal.eval(x - s) * kernel(s, tau, f, eps),
        mu - KERNEL_WINDOW * w,
        mu + KERNEL_WINDOW * w,
        opts,
    )?;
    Ok(r.value)
}

/// `d/df` of [`viscous_solution_analytic`], differentiating under the
/// integral. Written in standardized kernel coordinates `s = -tau f - w z`,
/// `u = E[T(x + tau f + eps f sqrt(tau) Z)]`, which stays regular at `f = 0`.
pub fn viscous_solution_analytic_df(
    f: f64,
    eps: f64,
    terminal: &TerminalCondition1D,
    x: f64,
    t: f64,
    opts: &QuadOptions,
) -> Result<f64> {
    if eps < 0.0 {
        return Err(invalid(format!("viscosity must be >= 0, got {eps}")));
    }
    let tau = 1.0 - t;
    let dterm = |v: f64| {
        terminal
            .derivative(v)
            .ok_or_else(|| invalid(format!("terminal `{}` has no derivative", terminal.description())))
    };
    if eps == 0.0 || tau == 0.0 {
        return Ok(tau * dterm(x + tau * f)?);
    }
    dterm(x)?;
    let sq = tau.sqrt();
    let norm = 1.0 / (2.0 * PI).sqrt();
    let r = integrate(
        |z| {
            let v = x + tau * f + eps * f * sq * z;
            terminal.derivative(v).unwrap_or(0.0) * (tau + eps * sq * z) * norm * (-0.5 * z * z).exp()
        },
        -KERNEL_WINDOW,
        KERNEL_WINDOW,
        opts,
    )?;
    Ok(r.value)
}

/// Space-time grid over `[x_min, x_max] × [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub nt: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, nx: usize, nt: usize) -> Result<Self> {
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(invalid(format!("need x_min < x_max, got [{x_min}, {x_max}]")));
        }
        if nx < 3 {
            return Err(invalid("grid needs at least 3 points"));
        }
        if nt == 0 {
            return Err(invalid("grid needs at least one time step"));
        }
        Ok(Self { x_min, x_max, nx, nt })
    }

    /// Smallest `nt` that satisfies the stability bound for the given
    /// coefficient maxima.
    pub fn stable(x_min: f64, x_max: f64, nx: usize, f_max: f64, diffusion_max: f64) -> Result<Self> {
        let g = Self::new(x_min, x_max, nx, 1)?;
        let bound = stability_bound(g.dx(), f_max, diffusion_max);
        let nt = if bound.is_finite() { (1.0 / bound).ceil().max(1.0) as usize } else { 1 };
        Self::new(x_min, x_max, nx, nt)
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.nt as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.nx {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx()
        }
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 / self.nt as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }
}

/// Largest stable `dt`: `0.9 * dx^2 / (eps^2 g^2_max + |f|_max dx)`, where
/// `diffusion_max = eps^2 g^2_max`.
pub fn stability_bound(dx: f64, f_max: f64, diffusion_max: f64) -> f64 {
    let denom = diffusion_max + f_max.abs() * dx;
    if denom == 0.0 {
        f64::INFINITY
    } else {
        STABILITY_SAFETY * dx * dx / denom
    }
}

/// Sampled solution; `values[j][i]` is the field at `(x_i, t_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field1D {
    pub grid: Grid1D,
    pub values: Vec<Vec<f64>>,
    /// `true` when rows are indexed by forward time `tau = 1 - t`.
    pub forward_time: bool,
}

impl Field1D {
    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    /// Linear interpolation in `x` on time level `j`; clamps outside the grid.
    pub fn interpolate(&self, j: usize, x: f64) -> f64 {
        let g = &self.grid;
        let row = &self.values[j];
        if x <= g.x_min {
            return row[0];
        }
        if x >= g.x_max {
            return row[g.nx - 1];
        }
        let pos = (x - g.x_min) / g.dx();
        let i = (pos.floor() as usize).min(g.nx - 2);
        let w = pos - i as f64;
        row[i] * (1.0 - w) + row[i + 1] * w
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }
}

/// One explicit step of `u <- u + dt (a u_x + d u_xx)` with upwinded
/// advection, centered diffusion, and upwind one-sided / zero-curvature
/// boundaries.
fn advance(u: &[f64], a: &[f64], d: &[f64], dt: f64, dx: f64) -> Vec<f64> {
    let n = u.len();
    let mut next = vec![0.0; n];
    let inv_dx = 1.0 / dx;
    let inv_dx2 = inv_dx * inv_dx;
    // At each end the advection difference stays upwind: one-sided inward
    // when the upwind side is interior, zero (constant ghost value) when it
    // lies outside the domain.
    next[0] = if a[0] > 0.0 { u[0] + dt * a[0] * (u[1] - u[0]) * inv_dx } else { u[0] };
    for i in 1..n - 1 {
        let adv = if a[i] > 0.0 {
            (u[i + 1] - u[i]) * inv_dx
        } else {
            (u[i] - u[i - 1]) * inv_dx
        };
        let diff = (u[i + 1] - 2.0 * u[i] + u[i - 1]) * inv_dx2;
        next[i] = u[i] + dt * (a[i] * adv + d[i] * diff);
    }
    next[n - 1] = if a[n - 1] < 0.0 {
        u[n - 1] + dt * a[n - 1] * (u[n - 1] - u[n - 2]) * inv_dx
    } else {
        u[n - 1]
    };
    next
}

struct Coefficients {
    advection: Vec<Vec<f64>>,
    diffusion: Vec<Vec<f64>>,
}

/// Samples `f` and `eps^2 g^2 / 2` on every node at the given time levels and
/// checks the stability bound before any marching happens.
fn sample_coefficients(
    f_field: &CoefficientField,
    g_field: &CoefficientField,
    eps: f64,
    grid: &Grid1D,
    times: impl Iterator<Item = f64>,
) -> Result<Coefficients> {
    let xs = grid.xs();
    let mut advection = Vec::with_capacity(grid.nt);
    let mut diffusion = Vec::with_capacity(grid.nt);
    let (mut f_max, mut d_max) = (0.0f64, 0.0f64);
    for t in times {
        let a: Vec<f64> = xs.iter().map(|&x| f_field(x, t)).collect();
        let d: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let g = g_field(x, t);
                0.5 * eps * eps * g * g
            })
            .collect();
        if a.iter().chain(&d).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: advection.len(),
                context: "PDE coefficient".into(),
            });
        }
        f_max = a.iter().fold(f_max, |m, v| m.max(v.abs()));
        d_max = d.iter().fold(d_max, |m, v| m.max(*v));
        advection.push(a);
        diffusion.push(d);
    }
    let bound = stability_bound(grid.dx(), f_max, 2.0 * d_max);
    if grid.dt() > bound {
        return Err(Error::Stability { dt: grid.dt(), bound });
    }
    Ok(Coefficients { advection, diffusion })
}

fn march(initial: Vec<f64>, coeffs: &Coefficients, grid: &Grid1D) -> Result<Vec<Vec<f64>>> {
    let (dt, dx) = (grid.dt(), grid.dx());
    let mut rows = Vec::with_capacity(grid.nt + 1);
    rows.push(initial);
    for (level, (a, d)) in coeffs.advection.iter().zip(&coeffs.diffusion).enumerate() {
        let next = advance(rows.last().unwrap(), a, d, dt, dx);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: level + 1,
                context: "finite-difference field".into(),
            });
        }
        rows.push(next);
    }
    Ok(rows)
}

/// Marches the backward Kolmogorov equation from `t = 1` down to `t = 0`.
/// The step from level `j + 1` to `j` uses coefficients at `t_{j+1}`.
pub fn solve_kolmogorov_fd(
    f_field: &CoefficientField,
    g_field: &CoefficientField,
    eps: f64,
    terminal: &TerminalCondition1D,
    grid: &Grid1D,
) -> Result<Field1D> {
    if eps < 0.0 {
        return Err(invalid(format!("viscosity must be >= 0, got {eps}")));
    }
    let coeffs = sample_coefficients(f_field, g_field, eps, grid, (1..=grid.nt).rev().map(|j| grid.t(j)))?;
    let initial: Vec<f64> = grid.xs().iter().map(|&x| terminal.eval(x)).collect();
    let mut rows = march(initial, &coeffs, grid)?;
    rows.reverse();
    Ok(Field1D {
        grid: *grid,
        values: rows,
        forward_time: false,
    })
}

/// Forward-time form `v_tau = f v_x + (eps^2 g^2 / 2) v_xx`, `v(x, 0) = T(x)`,
/// with coefficients evaluated at `t = 1 - tau`. Row `j` holds
/// `v(x, tau_j) = u(x, 1 - tau_j)`.
pub fn solve_forward_kolmogorov_fd(
    f_field: &CoefficientField,
    g_field: &CoefficientField,
    eps: f64,
    terminal: &TerminalCondition1D,
    grid: &Grid1D,
) -> Result<Field1D> {
    if eps < 0.0 {
        return Err(invalid(format!("viscosity must be >= 0, got {eps}")));
    }
    let coeffs = sample_coefficients(f_field, g_field, eps, grid, (0..grid.nt).map(|j| 1.0 - grid.t(j)))?;
    let initial: Vec<f64> = grid.xs().iter().map(|&x| terminal.eval(x)).collect();
    Ok(Field1D {
        grid: *grid,
        values: march(initial, &coeffs, grid)?,
        forward_time: true,
    })
}

pub fn constant_field(c: f64) -> CoefficientField {
    Arc::new(move |_, _| c)
}
