#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Gauss–Hermite nodes and weights for the weight `exp(-x^2)`, located by
/// Newton iteration on the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `E[g(Z)]`, `Z ~ N(0, 1)`, by `n`-node Gauss–Hermite quadrature.
pub fn normal_expectation(g: impl Fn(f64) -> f64, n: usize) -> f64 {
    let (x, w) = gauss_hermite(n);
    let s: f64 = x.iter().zip(&w).map(|(x, w)| w * g(std::f64::consts::SQRT_2 * x)).sum();
    s / std::f64::consts::PI.sqrt()
}

/// Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = cdf(v);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at level 0.01.
pub fn ks_critical_001(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Pearson chi-square statistic for uniformity of values in `[0, 1)` and
/// the critical value at `alpha`.
pub fn chi_square_uniform(values: &[f64], bins: usize, alpha: f64) -> (f64, f64) {
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[((v * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = values.len() as f64 / bins as f64;
    let stat = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let crit = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(1.0 - alpha);
    (stat, crit)
}

/// Sample mean and unbiased variance.
pub fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
