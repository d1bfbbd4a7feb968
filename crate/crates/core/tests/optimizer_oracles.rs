use proptest::prelude::*;
use viscoflow_core::data::{make_dataset_1d, DatasetKind, DatasetSpec, Sample1D};
use viscoflow_core::landscape::{loss_plain, LossMetric};
use viscoflow_core::optimizer::*;
use viscoflow_core::rng::RngStream;

fn dataset(kind: DatasetKind, seed: u64) -> Vec<Sample1D> {
    make_dataset_1d(&DatasetSpec::new(kind, 64, seed)).unwrap()
}

const CENTRAL: GradMode = GradMode::CentralDifference { h: 1e-5 };

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

#[test]
fn analytic_gradient_matches_central_difference() {
    let d = dataset(DatasetKind::Rugged, 7);
    let a = gradient_of_viscous_loss(1.7, 0.4, &d, LossMetric::L2, GradMode::Analytic).unwrap();
    let c = gradient_of_viscous_loss(1.7, 0.4, &d, LossMetric::L2, CENTRAL).unwrap();
    assert!(rel_err(a, c) < 1e-4, "{a} vs {c}");
}

#[test]
fn analytic_gradient_on_random_configurations() {
    let mut rng = RngStream::new(99, 0);
    let d = dataset(DatasetKind::Rugged, 7);
    let mut checked = 0;
    for _ in 0..20 {
        let f = rng.uniform_range(-5.0, 5.0);
        let eps = rng.uniform_range(0.0, 1.2);
        for metric in [LossMetric::L2, LossMetric::L2Root] {
            let a = gradient_of_viscous_loss(f, eps, &d, metric, GradMode::Analytic).unwrap();
            let c = gradient_of_viscous_loss(f, eps, &d, metric, CENTRAL).unwrap();
            if a.abs() > 1e-6 {
                assert!(rel_err(a, c) < 1e-4, "f={f} eps={eps} {metric:?}: {a} vs {c}");
                checked += 1;
            }
        }
    }
    assert!(checked >= 10);
}

#[test]
fn plain_gradient_closed_form() {
    let d = dataset(DatasetKind::DoubleWell, 7);
    for f in [-3.0, -0.7, 0.0, 2.2, 4.9] {
        let closed: f64 = d
            .iter()
            .map(|s| {
                let u = viscoflow_core::sigmoid(s.y + f);
                2.0 * (u - s.target()) * u * (1.0 - u)
            })
            .sum::<f64>()
            / d.len() as f64;
        let a = gradient_of_viscous_loss(f, 0.0, &d, LossMetric::L2, GradMode::Analytic).unwrap();
        let c = gradient_of_viscous_loss(f, 0.0, &d, LossMetric::L2, CENTRAL).unwrap();
        assert!((a - closed).abs() < 1e-15);
        assert!(rel_err(a, c) < 1e-6);
    }
}

#[test]
fn mirrored_dataset_has_zero_gradient_at_origin() {
    let mut d = Vec::new();
    for y in [0.3, 1.1, 2.5, 4.0] {
        d.push(Sample1D::new(y, 1).unwrap());
        d.push(Sample1D::new(-y, 0).unwrap());
    }
    for eps in [0.0, 0.5] {
        for metric in [LossMetric::L1, LossMetric::L2] {
            let g = gradient_of_viscous_loss(0.0, eps, &d, metric, GradMode::Analytic).unwrap();
            assert!(g.abs() <= 1e-10, "eps={eps}: {g}");
        }
    }
}

#[test]
fn nonpositive_step_rejected() {
    let d = dataset(DatasetKind::Rugged, 7);
    assert!(gradient_of_viscous_loss(0.0, 0.2, &d, LossMetric::L2, GradMode::CentralDifference { h: 0.0 }).is_err());
    assert!(gradient_of_viscous_loss(0.0, 0.2, &d, LossMetric::L2, GradMode::CentralDifference { h: -1e-3 }).is_err());
}

#[test]
fn full_batch_sgd_is_gradient_descent() {
    let d = dataset(DatasetKind::DoubleWell, 7);
    let obj = ViscousObjective::new(0.3, LossMetric::L2, GradMode::Analytic).unwrap();
    let cfg = SgdConfig { iterations: 40, ..SgdConfig::large_batch(d.len(), 2.0, 5) };
    let t = sgd_run(&obj, &d, &cfg).unwrap();
    let gd = gradient_descent(&obj, &d, cfg.learning_rate, cfg.iterations, cfg.init_f).unwrap();
    assert_eq!(t.iterates.len(), gd.len());
    for (it, f) in t.iterates.iter().zip(&gd) {
        assert!((it.f - f).abs() <= 1e-12);
    }
}

#[test]
fn small_batch_trajectories_are_reproducible() {
    let d = dataset(DatasetKind::DoubleWell, 7);
    let obj = ViscousObjective::new(0.0, LossMetric::L2, GradMode::Analytic).unwrap();
    let cfg = SgdConfig { iterations: 100, ..SgdConfig::small_batch(5.0, 11) };
    let a = sgd_run(&obj, &d, &cfg).unwrap();
    let b = sgd_run(&obj, &d, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.iterates.len(), 101);
    let c = sgd_run(&obj, &d, &SgdConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(a, c);
    for it in &a.iterates {
        assert_eq!(it.full_loss, loss_plain(it.f, &d, LossMetric::L2).unwrap());
    }
}

#[test]
fn oversized_batch_rejected() {
    let d = dataset(DatasetKind::Rugged, 7);
    let obj = FnObjective::quadratic(0.0);
    assert!(sgd_run(&obj, &d, &SgdConfig::large_batch(65, 0.0, 0)).is_err());
}

#[test]
fn large_batch_sgd_escapes_sharp_basin_under_noise() {
    let d = dataset(DatasetKind::DoubleWell, 42);
    let map = BasinMap::default_scan(&d, LossMetric::L2, 0.0).unwrap();
    assert_eq!(map.sinks.len(), 2);
    let (flat_id, sharp_id) = if map.flatness(0) < map.flatness(1) { (0, 1) } else { (1, 0) };
    let end = |eps| {
        let obj = ViscousObjective::new(eps, LossMetric::L2, GradMode::Analytic).unwrap();
        sgd_run(&obj, &d, &SgdConfig::large_batch(d.len(), 5.0, 42)).unwrap().final_f()
    };
    assert_eq!(map.classify(5.0).unwrap(), sharp_id);
    assert_eq!(map.classify(end(0.0)).unwrap(), sharp_id);
    assert_eq!(map.classify(end(0.6)).unwrap(), flat_id);
}

#[test]
fn basin_ids_on_a_double_well() {
    let d = dataset(DatasetKind::DoubleWell, 7);
    let map = BasinMap::default_scan(&d, LossMetric::L2, 0.0).unwrap();
    for id in 0..map.sinks.len() {
        assert_eq!(map.classify(map.minimum_f(id)).unwrap(), id);
    }
    let (a, b) = (map.minimum_f(0), map.minimum_f(1));
    let barrier = (map.sinks[0]..=map.sinks[1]).max_by(|&i, &j| map.values[i].total_cmp(&map.values[j])).unwrap();
    let fb = map.grid[barrier];
    assert_ne!(map.classify(fb - 0.2).unwrap(), map.classify(fb + 0.2).unwrap());
    assert!(a < fb && fb < b);
    assert!(basin_classify(7.0, &d, LossMetric::L2, 0.0).is_err());
}

#[test]
fn monotone_landscape_has_one_basin() {
    let d = vec![Sample1D::new(0.0, 1).unwrap()];
    let map = BasinMap::default_scan(&d, LossMetric::L2, 0.0).unwrap();
    assert_eq!(map.sinks.len(), 1);
    for f in [-6.0, -1.234, 0.0, 5.5, 6.0] {
        assert_eq!(map.classify(f).unwrap(), 0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sgd_trajectory_shape_and_determinism(batch in 1usize..=16, iters in 0usize..30, seed in any::<u64>(), init in -5.0f64..5.0) {
        let d: Vec<Sample1D> = make_dataset_1d(&DatasetSpec::new(DatasetKind::Rugged, 16, 3)).unwrap();
        let obj = ViscousObjective::new(0.0, LossMetric::L2, GradMode::Analytic).unwrap();
        let cfg = SgdConfig { batch_size: batch, learning_rate: 1.0, iterations: iters, init_f: init, seed, grad_mode: GradMode::Analytic };
        let a = sgd_run(&obj, &d, &cfg).unwrap();
        prop_assert_eq!(a.iterates.len(), iters + 1);
        prop_assert_eq!(a.iterates[0].f, init);
        prop_assert_eq!(&a, &sgd_run(&obj, &d, &cfg).unwrap());
    }
}
