mod common;

use common::normal_expectation;
use proptest::prelude::*;
use viscoflow_core::pde1d::*;
use viscoflow_core::sigmoid;

fn linf_vs_analytic(field: &Field1D, f: f64, eps: f64, j: usize) -> f64 {
    let g = field.grid;
    let t = g.t(j);
    let sig = TerminalCondition1D::sigmoid();
    g.xs()
        .iter()
        .zip(field.row(j))
        .map(|(&x, u)| (u - viscous_solution_analytic(f, eps, &sig, x, t).unwrap()).abs())
        .fold(0.0, f64::max)
}

fn fd(f: f64, eps: f64, nx: usize, nt: Option<usize>) -> Field1D {
    let grid = match nt {
        Some(nt) => Grid1D::new(-20.0, 20.0, nx, nt).unwrap(),
        None => Grid1D::stable(-20.0, 20.0, nx, f.abs(), eps * eps * f * f).unwrap(),
    };
    solve_kolmogorov_fd(&constant_field(f), &constant_field(f), eps, &TerminalCondition1D::sigmoid(), &grid).unwrap()
}

#[test]
fn analytic_solution_matches_hermite_oracle() {
    let sig = TerminalCondition1D::sigmoid();
    for &f in &[-3.0, -0.5, 0.7, 2.0] {
        for &eps in &[0.05, 0.5, 1.0] {
            for &t in &[0.0, 0.3, 0.9] {
                for &x in &[-4.0, -1.0, 0.0, 2.5] {
                    let tau: f64 = 1.0 - t;
                    let oracle = normal_expectation(|z| sigmoid(x + tau * f + eps * f * tau.sqrt() * z), 96);
                    let u = viscous_solution_analytic(f, eps, &sig, x, t).unwrap();
                    assert!((u - oracle).abs() < 1e-9, "f={f} eps={eps} t={t} x={x}: {u} vs {oracle}");
                }
            }
        }
    }
}

#[test]
fn analytic_f_derivative_matches_hermite_oracle() {
    let sig = TerminalCondition1D::sigmoid();
    let opts = viscoflow_core::quadrature::QuadOptions::default();
    for &(f, eps, x) in &[(2.0, 0.5, 0.0), (-1.2, 0.9, 1.5), (0.0, 0.4, -0.3), (0.3, 1.0, -2.0)] {
        let oracle = normal_expectation(
            |z| {
                let s = sigmoid(x + f + eps * f * z);
                s * (1.0 - s) * (1.0 + eps * z)
            },
            96,
        );
        let d = viscous_solution_analytic_df(f, eps, &sig, x, 0.0, &opts).unwrap();
        assert!((d - oracle).abs() < 1e-9, "{d} vs {oracle}");
    }
}

#[test]
fn vanishing_viscosity_recovers_transport() {
    let sig = TerminalCondition1D::sigmoid();
    let v = transport_solution(2.0, &sig, 0.0, 0.0);
    let gaps: Vec<f64> = [0.1, 0.01, 0.001]
        .iter()
        .map(|&e| (viscous_solution_analytic(2.0, e, &sig, 0.0, 0.0).unwrap() - v).abs())
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
    assert!(gaps[2] < 1e-3);
}

#[test]
fn fd_matches_analytic_at_reference_resolution() {
    let field = fd(2.0, 0.5, 801, Some(2000));
    let err = linf_vs_analytic(&field, 2.0, 0.5, 0);
    assert!(err < 1e-2, "L-inf {err}");
}

#[test]
fn fd_is_first_order_in_dx() {
    for &(f, eps) in &[(2.0, 0.5), (-1.0, 0.8)] {
        let errs: Vec<f64> = [201, 401, 801]
            .iter()
            .map(|&nx| linf_vs_analytic(&fd(f, eps, nx, None), f, eps, 0))
            .collect();
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!((1.6..=2.4).contains(&r), "f={f} eps={eps}: errors {errs:?}");
        }
    }
}

#[test]
fn inviscid_fd_converges_to_transport() {
    let sig = TerminalCondition1D::sigmoid();
    let errs: Vec<f64> = [401, 801, 1601]
        .iter()
        .map(|&nx| {
            let field = fd(2.0, 0.0, nx, None);
            let g = field.grid;
            g.xs().iter().zip(field.row(0)).map(|(&x, u)| (u - transport_solution(2.0, &sig, x, 0.0)).abs()).fold(0.0, f64::max)
        })
        .collect();
    for w in errs.windows(2) {
        let r = w[0] / w[1];
        assert!((1.4..=2.6).contains(&r), "errors {errs:?}");
    }
}

fn coefficient(kind: u8, a: f64) -> CoefficientField {
    match kind {
        0 => constant_field(a),
        1 => std::sync::Arc::new(move |x: f64, _| a * (0.5 * x).sin()),
        _ => std::sync::Arc::new(move |x: f64, t: f64| a * (1.0 + t) / (1.0 + 0.05 * x * x)),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn maximum_principle(kf in 0u8..3, kg in 0u8..3, a in -3.0f64..3.0, b in -2.0f64..2.0, eps in 0.0f64..1.0,
                         scale in 0.2f64..3.0, shift in -2.0f64..2.0) {
        let (ff, gf) = (coefficient(kf, a), coefficient(kg, b));
        let grid = Grid1D::stable(-10.0, 10.0, 161, a.abs() * 1.5 * 2.0, eps * eps * b * b * 4.0).unwrap();
        let term = TerminalCondition1D::logistic(scale, shift);
        let field = solve_kolmogorov_fd(&ff, &gf, eps, &term, &grid).unwrap();
        let row = field.row(grid.nt);
        let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (min, max) = field.min_max();
        prop_assert!(min >= lo - 1e-10 && max <= hi + 1e-10);
    }

    #[test]
    fn monotone_terminal_gives_monotone_slices(f in -3.0f64..3.0, eps in 0.0f64..1.0, scale in 0.2f64..3.0) {
        let grid = Grid1D::stable(-15.0, 15.0, 241, f.abs(), eps * eps * f * f).unwrap();
        let field = solve_kolmogorov_fd(&constant_field(f), &constant_field(f), eps, &TerminalCondition1D::logistic(scale, 0.0), &grid).unwrap();
        for row in &field.values {
            prop_assert!(row.windows(2).all(|w| w[1] >= w[0] - 1e-10));
        }
    }

    #[test]
    fn forward_and_backward_solves_agree(f in -3.0f64..3.0, g in -2.0f64..2.0, eps in 0.0f64..1.0) {
        let grid = Grid1D::stable(-12.0, 12.0, 121, f.abs(), eps * eps * g * g).unwrap();
        let term = TerminalCondition1D::sigmoid();
        let back = solve_kolmogorov_fd(&constant_field(f), &constant_field(g), eps, &term, &grid).unwrap();
        let fwd = solve_forward_kolmogorov_fd(&constant_field(f), &constant_field(g), eps, &term, &grid).unwrap();
        for j in 0..=grid.nt {
            for (a, b) in fwd.row(grid.nt - j).iter().zip(back.row(j)) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
        }
    }
}
