mod common;

use common::{chi_square_uniform, ks_critical_001, ks_statistic, normal_expectation};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use viscoflow_core::rng::RngStream;

#[test]
fn hermite_oracle_reproduces_normal_moments() {
    assert!((normal_expectation(|_| 1.0, 80) - 1.0).abs() < 1e-13);
    assert!((normal_expectation(|z| z * z, 80) - 1.0).abs() < 1e-12);
    assert!((normal_expectation(|z| z.powi(4), 80) - 3.0).abs() < 1e-11);
    assert!((normal_expectation(|z| z.cos(), 80) - (-0.5f64).exp()).abs() < 1e-13);
}

#[test]
fn first_draws_of_split_children_are_uniform() {
    let root = RngStream::new(2024, 0);
    let draws: Vec<f64> = (0..10_000u64).map(|i| root.split(i).uniform()).collect();
    let (stat, crit) = chi_square_uniform(&draws, 100, 0.01);
    assert!(stat < crit, "chi-square {stat} >= {crit}");
}

#[test]
fn sibling_streams_differ() {
    let root = RngStream::new(5, 9);
    let mut a = root.split(0);
    let mut b = root.split(1);
    let same = (0..10_000).filter(|_| a.uniform() == b.uniform()).count();
    assert_eq!(same, 0);
}

#[test]
fn normal_draws_pass_ks() {
    let mut r = RngStream::new(11, 3);
    let z: Vec<f64> = (0..100_000).map(|_| r.normal()).collect();
    let n = Normal::new(0.0, 1.0).unwrap();
    let d = ks_statistic(&z, |x| n.cdf(x));
    assert!(d < ks_critical_001(z.len()), "KS {d}");
}

#[test]
fn shuffles_are_uniform_over_positions() {
    // Where element 0 lands after a shuffle of 10 should be uniform.
    let root = RngStream::new(8, 0);
    let pos: Vec<f64> = (0..20_000u64)
        .map(|i| root.split(i).permutation(10).iter().position(|&v| v == 0).unwrap() as f64 / 10.0 + 0.05)
        .collect();
    let (stat, crit) = chi_square_uniform(&pos, 10, 0.01);
    assert!(stat < crit, "chi-square {stat} >= {crit}");
}

proptest! {
    #[test]
    fn split_depends_only_on_identity(seed in any::<u64>(), id in any::<u64>(), child in any::<u64>(), burn in 0usize..50) {
        let parent = RngStream::new(seed, id);
        let mut used = parent.clone();
        for _ in 0..burn {
            used.uniform();
        }
        let mut a = parent.split(child);
        let mut b = used.split(child);
        for _ in 0..16 {
            prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn split_path_is_repeated_split(seed in any::<u64>(), i in any::<u64>(), j in any::<u64>()) {
        let r = RngStream::from_seed(seed);
        let mut a = r.split_path(&[i, j]);
        let mut b = r.split(i).split(j);
        prop_assert_eq!(a.normal().to_bits(), b.normal().to_bits());
    }

    #[test]
    fn uniform_range_stays_in_range(seed in any::<u64>(), lo in -1e3f64..1e3, width in 1e-6f64..1e3) {
        let mut r = RngStream::from_seed(seed);
        for _ in 0..32 {
            let u = r.uniform_range(lo, lo + width);
            prop_assert!(u >= lo && u <= lo + width);
        }
    }
}
