mod common;

use bopp::acquisition::{ei_value, pi_value, ucb_value};
use bopp::engine::{run_bo, run_bopp, RunConfig};
use bopp::gp::{Dataset, GpModel, KernelParams, MeanMode};
use bopp::objectives::{make_synthetic, Objective};
use bopp::optimizer::{maximize, BoxDomain, DirectConfig};
use bopp::pseudo::{generate_with_tau, PseudoCorrection};
use bopp::rng::{substream, Substream};
use common::DenseGp;
use proptest::prelude::*;
use rand::Rng;

fn dataset(seed: u64, n: usize, dim: usize) -> Dataset {
    let mut rng = substream(seed, Substream::InitialDesign);
    let mut data = Dataset::new(dim);
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = x.iter().map(|v| (3.0 * v).sin()).sum::<f64>();
        data.push(x, y).unwrap();
    }
    data
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_variance_within_prior(seed in any::<u64>(), n in 0usize..15, dim in 1usize..4,
                                       ell in 0.1f64..2.0, amp in 0.2f64..3.0, noise in 1e-6f64..0.5) {
        let data = dataset(seed, n, dim);
        let params = KernelParams::new(vec![ell; dim], amp, noise).unwrap();
        let model = GpModel::new(params, data, MeanMode::Centered).unwrap();
        let mut rng = substream(seed, Substream::Theory);
        for _ in 0..5 {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let p = model.posterior(&x).unwrap();
            prop_assert!(p.variance >= 0.0);
            prop_assert!(p.variance <= amp * (1.0 + 1e-12));
        }
    }

    #[test]
    fn augmentation_matches_dense_joint(seed in any::<u64>(), n in 1usize..10, l in 1usize..6,
                                        tau in 0.0f64..0.3, noise in 1e-4f64..0.1) {
        let dim = 2;
        let data = dataset(seed, n, dim);
        let domain = BoxDomain::cube(dim, -1.0, 1.0).unwrap();
        let mut rng = substream(seed, Substream::PseudoSigns);
        let pp = generate_with_tau(&data, l, tau, &domain, &mut rng).unwrap();
        let params = KernelParams::new(vec![0.4, 0.7], 1.0, noise).unwrap();
        let model = GpModel::new(params, data.clone(), MeanMode::Zero).unwrap();
        let augmented = model.augment(&pp.to_dataset(dim).unwrap()).unwrap();
        let (points, ys) = common::joined(data.points(), data.observations(), &pp.points, &pp.values);
        let dense = DenseGp::new(&points, &ys, &[0.4, 0.7], 1.0, noise, 0.0);
        let correction = PseudoCorrection::new(&model, &pp).unwrap();
        for x in [[0.1, -0.3], [0.9, 0.9], [-0.5, 0.2]] {
            let p = augmented.posterior_raw(&x).unwrap();
            prop_assert!((p.mean - dense.mean(&x)).abs() <= 1e-7 * (1.0 + dense.mean(&x).abs()));
            prop_assert!((p.variance - dense.variance(&x)).abs() <= 1e-7);
            prop_assert!(correction.variance_reduction(&x).unwrap() >= -1e-9);
        }
    }

    #[test]
    fn pseudo_points_at_distance_tau(seed in any::<u64>(), n in 1usize..8, dim in 1usize..5, tau in 0.0f64..1.5) {
        let data = dataset(seed, n, dim);
        let domain = BoxDomain::cube(dim, -1.0, 1.0).unwrap();
        let mut rng = substream(seed, Substream::PseudoSigns);
        let pp = generate_with_tau(&data, n, tau, &domain, &mut rng).unwrap();
        prop_assert_eq!(pp.len(), n);
        for i in 0..n {
            let parent = &data.points()[pp.parents[i]];
            prop_assert_eq!(pp.values[i], data.observations()[pp.parents[i]]);
            prop_assert!(domain.contains(&pp.points[i]));
            for j in 0..dim {
                let moved = (pp.points[i][j] - parent[j]).abs();
                if !pp.clipped[i][j] {
                    prop_assert!((moved - tau).abs() <= 1e-12);
                } else {
                    prop_assert!(moved < tau);
                }
            }
        }
    }

    #[test]
    fn acquisition_ranges(mean in -5.0f64..5.0, std in 0.0f64..3.0, incumbent in -5.0f64..5.0, beta in 0.0f64..20.0) {
        let pi = pi_value(mean, std, incumbent).unwrap();
        prop_assert!((0.0..=1.0).contains(&pi));
        let ei = ei_value(mean, std, incumbent).unwrap();
        prop_assert!(ei >= 0.0);
        prop_assert!(ei >= (mean - incumbent).max(0.0) - 1e-12);
        prop_assert!(ei_value(mean + 0.1, std, incumbent).unwrap() >= ei);
        prop_assert!(ucb_value(mean, std, beta) >= mean);
    }

    #[test]
    fn direct_anytime_and_in_domain(c0 in 0.0f64..1.0, c1 in 0.0f64..1.0, budget in 10usize..150) {
        let domain = BoxDomain::cube(2, 0.0, 1.0).unwrap();
        let f = |x: &[f64]| Ok(-(x[0] - c0).powi(2) - 3.0 * (x[1] - c1).powi(2));
        let mut small = DirectConfig::for_dim(2);
        small.max_evaluations = budget;
        let mut large = small.clone();
        large.max_evaluations = budget * 2;
        let a = maximize(f, &domain, &small).unwrap();
        let b = maximize(f, &domain, &large).unwrap();
        prop_assert!(domain.contains(&a.argmax));
        prop_assert!(a.evaluations <= budget);
        prop_assert!(b.value >= a.value);
    }

    #[test]
    fn rescaling_round_trip(u0 in -1.0f64..1.0, u1 in -1.0f64..1.0) {
        for name in ["dropwave", "griewank", "rastrigin"] {
            let f = make_synthetic(name).unwrap();
            let canonical = f.to_canonical(&[u0, u1]);
            let value = -f.benchmark().canonical(&canonical);
            prop_assert!((f.evaluate_true(&[u0, u1]).unwrap() - value).abs() <= 1e-10);
            let back = f.from_canonical(&canonical);
            prop_assert!((back[0] - u0).abs() <= 1e-12 && (back[1] - u1).abs() <= 1e-12);
            prop_assert!(f.evaluate_true(&[u0, u1]).unwrap() <= f.optimum_value().unwrap() + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn regret_trace_invariants(seed in any::<u64>(), tau0 in prop_oneof![Just(0.0), Just(0.01), Just(0.001)], which in 0usize..3) {
        let f = make_synthetic("dropwave").unwrap();
        let kind = [bopp::acquisition::AcquisitionKind::Ucb, bopp::acquisition::AcquisitionKind::Pi, bopp::acquisition::AcquisitionKind::Ei][which];
        let mut config = RunConfig::experiment(kind, tau0, 2, seed).unwrap();
        config.budget = 12;
        config.fit_starts = 2;
        config.fit_iterations = 20;
        config.direct.max_evaluations = 120;
        let trace = run_bopp(&f, &config).unwrap();
        let mut sum = 0.0;
        let mut previous_simple = f64::INFINITY;
        let mut previous_gain = 0.0;
        for (k, s) in trace.steps.iter().enumerate() {
            let r = s.instant_regret.unwrap();
            prop_assert!(r >= 0.0);
            sum += r;
            prop_assert_eq!(s.cumulative_regret.unwrap(), sum);
            let simple = s.simple_regret.unwrap();
            prop_assert!(simple <= previous_simple);
            prop_assert!(simple <= sum / (k + 1) as f64 + 1e-12);
            prop_assert!(s.delta_v >= 0.0);
            prop_assert!(s.info_gain >= previous_gain);
            previous_simple = simple;
            previous_gain = s.info_gain;
        }
    }
}

#[test]
fn hyper_parameters_ignore_pseudo_values() {
    let f = make_synthetic("rastrigin").unwrap();
    let mut base = RunConfig::experiment(bopp::acquisition::AcquisitionKind::Ei, 0.0, 2, 5).unwrap();
    base.budget = 1;
    let mut pp = base.clone();
    pp.pseudo = bopp::pseudo::PseudoSchedule::new(0.01, 2.0).unwrap();
    let a = run_bo(&f, &base).unwrap();
    let b = run_bopp(&f, &pp).unwrap();
    assert_eq!(a.steps[0].params, b.steps[0].params);
    assert_eq!(a.initial, b.initial);
}
