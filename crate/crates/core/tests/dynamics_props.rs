mod common;

use std::sync::Arc;

use common::{ks_critical_001, ks_statistic, moments};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use viscoflow_core::data::{DynamicsConfig, FeatureState, NoiseScheme};
use viscoflow_core::dynamics::*;
use viscoflow_core::rng::RngStream;
use viscoflow_core::sde::{weak_convergence_check, VectorField};

fn st(v: &[f64]) -> FeatureState {
    FeatureState::new(v.to_vec()).unwrap()
}

#[test]
fn normalized_increment_moments() {
    let root = RngStream::new(1, 0);
    for (i, scheme) in [
        NoiseScheme::Bernoulli { p: 0.9 },
        NoiseScheme::Gaussian { nu: 0.5 },
        NoiseScheme::Uniform { beta: 0.8 },
        NoiseScheme::ShakeShake,
    ]
    .into_iter()
    .enumerate()
    {
        let r = increment_moments(scheme, 10, 1_000_000, &root.split(i as u64)).unwrap();
        assert!(r.pass, "{scheme}: mean {} variance {} (dt {})", r.mean, r.variance, r.dt);
    }
}

#[test]
fn degenerate_moment_rows_are_exactly_zero() {
    for scheme in [
        NoiseScheme::Bernoulli { p: 1.0 },
        NoiseScheme::Gaussian { nu: 0.0 },
        NoiseScheme::Uniform { beta: 0.0 },
    ] {
        let r = increment_moments(scheme, 10, 10_000, &RngStream::from_seed(0)).unwrap();
        assert_eq!((r.mean, r.variance, r.expected_variance), (0.0, 0.0, 0.0));
        assert!(r.pass);
    }
}

#[test]
fn bernoulli_noise_part_has_zero_mean() {
    let cfg = DynamicsConfig::new(10, NoiseScheme::Bernoulli { p: 0.5 }).unwrap();
    let f = ResidualMap::constant(vec![2.0, 2.0]);
    let x = st(&[0.3, -0.7]);
    let mut rng = RngStream::new(3, 0);
    let mut cols = [Vec::new(), Vec::new()];
    for _ in 0..1_000_000 {
        let r = step_bernoulli(&x, &f, &cfg, 0, &mut rng).unwrap();
        cols[0].push(r.noise_part[0]);
        cols[1].push(r.noise_part[1]);
    }
    for c in &cols {
        let (m, v) = moments(c);
        // Exact law: ±2 with equal odds.
        assert!((v - 4.0).abs() < 0.02);
        assert!(m.abs() <= 3.0 * (v / c.len() as f64).sqrt(), "mean {m}");
    }
}

#[test]
fn gaussian_single_block_increment_law() {
    let cfg = DynamicsConfig::new(1, NoiseScheme::Gaussian { nu: 1.0 }).unwrap();
    let f = ResidualMap::constant(vec![1.0]);
    let x = st(&[0.25]);
    let mut rng = RngStream::new(4, 0);
    let d: Vec<f64> = (0..100_000)
        .map(|_| step_gaussian(&x, &f, &cfg, 0, &mut rng).unwrap().state_after.values()[0] - 0.25)
        .collect();
    let n = Normal::new(1.0, 1.0).unwrap();
    let ks = ks_statistic(&d, |v| n.cdf(v));
    assert!(ks < ks_critical_001(d.len()), "KS {ks}");
}

#[test]
fn bernoulli_chain_mean_matches_plain_for_linear_residual() {
    let k = 10;
    let a = vec![vec![0.5, -0.3], vec![0.2, 0.4]];
    let scaled: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|v| v / k as f64).collect()).collect();
    let res = [ResidualMap::linear(scaled)];
    let x0 = st(&[1.0, -0.5]);
    let plain = chain_output(&x0, &res, &DynamicsConfig::new(k, NoiseScheme::Plain).unwrap(), &RngStream::from_seed(0)).unwrap();
    let cfg = DynamicsConfig::new(k, NoiseScheme::Bernoulli { p: 0.7 }).unwrap();
    let root = RngStream::new(12, 0);
    let outs: Vec<Vec<f64>> = (0..100_000u64)
        .map(|i| chain_output(&x0, &res, &cfg, &root.split(i)).unwrap().into_values())
        .collect();
    for c in 0..2 {
        let col: Vec<f64> = outs.iter().map(|v| v[c]).collect();
        let (m, v) = moments(&col);
        let se = (v / col.len() as f64).sqrt();
        assert!((m - plain.values()[c]).abs() <= 3.0 * se, "component {c}: {m} vs {}", plain.values()[c]);
    }
}

#[test]
fn single_block_chain_is_a_step() {
    let cfg = DynamicsConfig::new(1, NoiseScheme::Uniform { beta: 0.4 }).unwrap();
    let res = [ResidualMap::scaled_identity(0.3)];
    let rng = RngStream::new(6, 2);
    let chain = run_block_chain(&st(&[1.5]), &res, &cfg, &rng).unwrap();
    let single = step(&st(&[1.5]), &res, &cfg, 0, &mut rng.split(0)).unwrap();
    assert_eq!(chain, vec![single]);
}

#[test]
fn bernoulli_first_moment_matches_sde_for_linear_drift() {
    let f: VectorField = Arc::new(|x: &[f64], _| vec![-0.8 * x[0]]);
    let gaps = weak_convergence_check(
        &[f],
        NoiseScheme::Bernoulli { p: 0.9 },
        &|x| x[0],
        &st(&[1.0]),
        &[4, 16],
        40_000,
        1,
        &RngStream::new(21, 0),
    )
    .unwrap();
    for g in gaps {
        assert!(g.gap() <= 3.0 * g.combined_se(), "K={}: gap {} se {}", g.blocks, g.gap(), g.combined_se());
    }
}

#[test]
fn plain_scheme_gap_shrinks_with_blocks() {
    let f: VectorField = Arc::new(|x: &[f64], _| vec![x[0]]);
    let gaps = weak_convergence_check(&[f], NoiseScheme::Plain, &|x| x[0], &st(&[1.0]), &[4, 16, 64], 2, 8, &RngStream::from_seed(0)).unwrap();
    assert!(gaps[0].gap() > gaps[1].gap() && gaps[1].gap() > gaps[2].gap());
    assert!(gaps.iter().all(|g| g.combined_se() == 0.0));
}

#[test]
fn second_moment_gap_trend() {
    let f: VectorField = Arc::new(|x: &[f64], _| vec![1.5 * x[0]]);
    let gaps = weak_convergence_check(
        &[f],
        NoiseScheme::Bernoulli { p: 0.9 },
        &|x| x[0] * x[0],
        &st(&[1.0]),
        &[8, 64],
        40_000,
        8,
        &RngStream::new(33, 0),
    )
    .unwrap();
    let (g8, g64) = (&gaps[0], &gaps[1]);
    if g8.gap() > 5.0 * g8.combined_se() && g64.gap() > 5.0 * g64.combined_se() {
        assert!(g64.gap() < g8.gap(), "gap(64) {} >= gap(8) {}", g64.gap(), g8.gap());
    }
}

fn scheme_strategy() -> impl Strategy<Value = NoiseScheme> {
    prop_oneof![
        Just(NoiseScheme::Plain),
        (0.05f64..=1.0).prop_map(|p| NoiseScheme::Bernoulli { p }),
        (0.0f64..2.0).prop_map(|nu| NoiseScheme::Gaussian { nu }),
        (0.0f64..1.5).prop_map(|beta| NoiseScheme::Uniform { beta }),
        Just(NoiseScheme::ShakeShake),
    ]
}

fn residuals_for(scheme: NoiseScheme, w: &[f64]) -> Vec<ResidualMap> {
    let m = |s: usize| vec![vec![w[s], w[s + 1]], vec![w[s + 2], w[s + 3]]];
    let first = ResidualMap::two_layer(m(0), m(4), Activation::Tanh);
    match scheme {
        NoiseScheme::ShakeShake => vec![first, ResidualMap::linear(m(8))],
        _ => vec![first],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn every_step_has_euler_maruyama_form(
        scheme in scheme_strategy(),
        blocks in 1usize..64,
        x in prop::collection::vec(-5.0f64..5.0, 2),
        w in prop::collection::vec(-1.5f64..1.5, 12),
        seed in any::<u64>(),
    ) {
        let cfg = DynamicsConfig::new(blocks, scheme).unwrap();
        let res = residuals_for(scheme, &w);
        let state = st(&x);
        let k = (seed as usize) % blocks;
        let rec = step(&state, &res, &cfg, k, &mut RngStream::from_seed(seed)).unwrap();
        let rebuilt = reconstruct_euler_maruyama(&state, &res, &cfg, k, &rec);
        for (a, b) in rebuilt.iter().zip(rec.state_after.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
        }
        for i in 0..2 {
            let parts = x[i] + rec.drift_part[i] + rec.noise_part[i];
            prop_assert!((parts - rec.state_after.values()[i]).abs() <= 1e-12 * (1.0 + parts.abs()));
        }
    }

    #[test]
    fn degenerate_noise_is_bitwise_plain(
        x in prop::collection::vec(-10.0f64..10.0, 3),
        a in -2.0f64..2.0,
        blocks in 1usize..32,
        seed in any::<u64>(),
    ) {
        let res = ResidualMap::scaled_identity(a);
        let state = st(&x);
        let plain = step_plain(&state, &res, &DynamicsConfig::new(blocks, NoiseScheme::Plain).unwrap(), 0).unwrap();
        for scheme in [
            NoiseScheme::Bernoulli { p: 1.0 },
            NoiseScheme::Gaussian { nu: 0.0 },
            NoiseScheme::Uniform { beta: 0.0 },
        ] {
            let cfg = DynamicsConfig::new(blocks, scheme).unwrap();
            let rec = step(&state, std::slice::from_ref(&res), &cfg, 0, &mut RngStream::from_seed(seed)).unwrap();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(rec.state_after.values()), bits(plain.state_after.values()));
            prop_assert!(rec.normalized_increment.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn chains_are_reproducible(scheme in scheme_strategy(), seed in any::<u64>(), w in prop::collection::vec(-1.0f64..1.0, 12)) {
        let cfg = DynamicsConfig::new(6, scheme).unwrap();
        let res = residuals_for(scheme, &w);
        let rng = RngStream::from_seed(seed);
        let a = run_block_chain(&st(&[0.5, -0.5]), &res, &cfg, &rng).unwrap();
        let b = run_block_chain(&st(&[0.5, -0.5]), &res, &cfg, &rng).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn epsilon_squared_is_eta_nu_squared(blocks in 1usize..1000, scheme in scheme_strategy()) {
        let cfg = DynamicsConfig::new(blocks, scheme).unwrap();
        let lhs = cfg.epsilon() * cfg.epsilon();
        let rhs = cfg.eta() * scheme.variance();
        prop_assert!((lhs - rhs).abs() <= 1e-14 * rhs.max(1e-300));
        prop_assert_eq!(cfg.time(blocks), 1.0);
    }
}
