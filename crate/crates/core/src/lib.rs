//! Noisy residual networks as discretized stochastic differential equations.
//!
//! The crate is organized the way the math flows:
//!
//! * [`data`] and [`rng`]: shared domain types, the splittable random stream
//!   contract, and the built-in 1D datasets.
//! * [`dynamics`]: discrete residual-block updates for plain, Bernoulli,
//!   Gaussian, uniform and shake-shake noise, each decomposed into
//!   drift + noise in Euler–Maruyama form.
//! * [`sde`]: Euler–Maruyama integration of the continuous limit and
//!   Feynman–Kac Monte Carlo estimates of `u(x, t) = E[T(X_1) | X_t = x]`.
//! * [`pde1d`]: the 1D backward Kolmogorov equation, solved analytically
//!   (Gaussian convolution), by finite differences, and in the zero-viscosity
//!   transport limit.
//! * [`landscape`] and [`optimizer`]: loss functionals `J_0` / `J_eps` over
//!   scalar drift grids, and minibatch SGD on them.
//! * [`toynet`]: a small trainable residual classifier with inverted
//!   Bernoulli dropout.
//! * [`export`]: CSV writers for every artifact.

// NaN-rejecting `!(x > 0.0)` checks are intentional; quadrature tables keep
// their published digits.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod data;
pub mod dynamics;
mod error;
pub mod export;
pub mod landscape;
pub mod optimizer;
pub mod pde1d;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod toynet;

pub use error::{Error, Result};

/// Logistic sigmoid `1 / (1 + e^{-x})`, evaluated without overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pairwise (tree) summation in fixed order, so totals do not depend on how
/// the inputs were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sample mean and unbiased sample variance, both reduced pairwise.
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let centered: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, pairwise_sum(&centered) / (n - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_symmetric_and_finite() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
    }

    #[test]
    fn mean_variance_of_small_sample() {
        let (m, v) = mean_and_variance(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((v - 5.0 / 3.0).abs() < 1e-15);
    }
}
