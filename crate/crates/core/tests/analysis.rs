mod common;

use common::*;
use mol::analysis::*;
use mol::linops::{make_mask, ComplexImage, LinearOperatorSpec, Measurement};
use mol::net::{random_unnormalized, NetworkConfig, NetworkWeights};
use mol::solver::{solve_fixed_point, step_size_bound, SolverConfig};
use proptest::prelude::*;

fn deep_cfg(shape: (usize, usize)) -> NetworkConfig {
    NetworkConfig {
        channels: 6,
        image_shape: shape,
        ..NetworkConfig::default()
    }
}

#[test]
fn lipschitz_of_zero_map_is_zero() {
    let w = NetworkWeights::scaled_identity(0.0, (6, 6));
    let est = local_lipschitz(&w, &random_image(6, 6, 1), 5, 1.0, 2).unwrap();
    assert_eq!(est.value_squared, 0.0);
    assert_eq!(est.value, 0.0);
}

#[test]
fn lipschitz_of_linear_gain_converges_to_top_singular_value() {
    let w = NetworkWeights::linear_1x1([[2.0, 0.0], [0.0, 1.0]], (8, 8));
    let f = random_image(8, 8, 3);
    let few = local_lipschitz(&w, &f, 1, 1.0, 4).unwrap();
    let many = local_lipschitz(&w, &f, 30, 1.0, 4).unwrap();
    assert!(few.value_squared <= many.value_squared);
    assert!((many.value_squared - 4.0).abs() <= 0.01 * 4.0, "{}", many.value_squared);
    assert!((many.value - many.value_squared.sqrt()).abs() < 1e-15);
}

#[test]
fn lipschitz_of_mixing_matrix_matches_dense_singular_value() {
    let mix = [[0.6, -0.8], [0.3, 0.2]];
    let sigma = nalgebra::Matrix2::new(mix[0][0], mix[0][1], mix[1][0], mix[1][1]).singular_values().max();
    let w = NetworkWeights::linear_1x1(mix, (6, 6));
    let est = local_lipschitz(&w, &random_image(6, 6, 8), 40, 1.0, 9).unwrap();
    assert!((est.value - sigma).abs() <= 1e-6, "{} vs {sigma}", est.value);
}

#[test]
fn lipschitz_bounded_by_spectral_product_and_monotone_in_steps() {
    for seed in 0..4 {
        let w = random_unnormalized(&deep_cfg((8, 8)), seed).unwrap().spectral_normalize(0.9, 100);
        let bound = w.global_lipschitz_bound();
        let f = random_image(8, 8, 10 + seed);
        let mut prev = 0.0;
        for steps in [1, 3, 10, 20] {
            let est = local_lipschitz(&w, &f, steps, 1.0, 77).unwrap();
            assert!(est.value <= bound + 1e-3, "seed {seed}: {} > {bound}", est.value);
            assert!(est.value_squared >= prev);
            prev = est.value_squared;
        }
    }
}

#[test]
fn lipschitz_perturbation_stays_local() {
    let w = small_net((8, 8), 4, 3);
    let f = random_image(8, 8, 4);
    let est = local_lipschitz(&w, &f, 10, 1.0, 5).unwrap();
    assert!(est.perturbation.norm() <= 0.1 * f.norm() * (1.0 + 1e-12));
    assert_eq!(est.ascent_steps, 10);
}

#[test]
fn penalty_gradient_matches_finite_differences() {
    let w = random_unnormalized(&deep_cfg((6, 6)), 5).unwrap();
    let f = random_image(6, 6, 6);
    let eps = random_image(6, 6, 7).scaled(0.05);
    let (value, gw, gf) = lipschitz_penalty_gradient(&w, &f, &eps).unwrap();
    let penalty = |w: &NetworkWeights, f: &ComplexImage| {
        let d = w.h_forward(&f.add(&eps)).unwrap().sub(&w.h_forward(f).unwrap());
        d.norm_sqr() / eps.norm_sqr()
    };
    assert!((value - penalty(&w, &f)).abs() <= 1e-12 * value);
    let params = w.flatten();
    let grad = gw.flatten();
    let h = 1e-6;
    for i in rand::seq::index::sample(&mut rng(8), params.len(), 15) {
        let mut p = params.clone();
        p[i] += h;
        let up = penalty(&w.with_params(&p).unwrap(), &f);
        p[i] -= 2.0 * h;
        let down = penalty(&w.with_params(&p).unwrap(), &f);
        let fd = (up - down) / (2.0 * h);
        assert!((fd - grad[i]).abs() <= 1e-4 * fd.abs().max(grad[i].abs()).max(1e-6), "param {i}: {fd} vs {}", grad[i]);
    }
    let fv = f.to_channels();
    let gfv = gf.to_channels();
    for i in [0, 7, 40, 71] {
        let mut p = fv.clone();
        p[i] += h;
        let up = penalty(&w, &ComplexImage::from_channels(6, 6, &p).unwrap());
        p[i] -= 2.0 * h;
        let down = penalty(&w, &ComplexImage::from_channels(6, 6, &p).unwrap());
        let fd = (up - down) / (2.0 * h);
        assert!((fd - gfv[i]).abs() <= 1e-4 * fd.abs().max(gfv[i].abs()).max(1e-6), "input {i}: {fd} vs {}", gfv[i]);
    }
}

#[test]
fn margin_of_identity_residual_maps() {
    let spec = SamplingSpec::random((6, 6), 1.0);
    let zero = monotone_margin(&NetworkWeights::scaled_identity(0.0, (6, 6)), 20, 1, &spec).unwrap();
    assert!((zero.m_hat - 1.0).abs() < 1e-12);
    assert_eq!(zero.num_pairs, 20);
    for c in [0.3, 0.75, -0.5] {
        let est = monotone_margin(&NetworkWeights::scaled_identity(c, (6, 6)), 20, 2, &spec).unwrap();
        assert!((est.m_hat - (1.0 - c)).abs() < 1e-12, "c {c}: {}", est.m_hat);
    }
}

#[test]
fn margin_of_normalized_net_respects_target() {
    let m = 0.1;
    let shape = (8, 8);
    let w = random_unnormalized(&deep_cfg(shape), 12).unwrap().spectral_normalize(1.0 - m, 100);
    let op = LinearOperatorSpec::masked_fourier(make_mask(shape, 2.0, 2.0, 3).unwrap());
    let cfg = SolverConfig::new(m, 1.0).unwrap();
    let anchors: Vec<ComplexImage> = (0..4)
        .map(|s| solve_fixed_point(&w, &op, &random_problem(&op, s), None, &cfg).unwrap().solution)
        .collect();
    let spec = SamplingSpec {
        shape,
        random_scale: 1.0,
        anchors,
        perturb_scale: 0.1,
    };
    let est = monotone_margin(&w, 1000, 13, &spec).unwrap();
    assert_eq!(est.num_pairs, 1000);
    assert!(est.m_hat >= m - 0.02, "{}", est.m_hat);
    assert!(est.m_hat >= certified_margin(&w) - 1e-6);
    assert!(est.m_hat <= 1.0);
    assert!(est.f_lipschitz <= 2.0 - est.m_hat + 0.02, "F ratio {} vs m_hat {}", est.f_lipschitz, est.m_hat);
    assert!(est.h_lipschitz <= w.global_lipschitz_bound() + 1e-9);
}

#[test]
fn degenerate_pairs_are_skipped() {
    let spec = SamplingSpec::random((4, 4), 0.0);
    assert!(monotone_margin(&NetworkWeights::scaled_identity(0.2, (4, 4)), 5, 1, &spec).is_err());
    assert!(monotone_margin(&NetworkWeights::scaled_identity(0.2, (4, 4)), 1, 1, &SamplingSpec::random((4, 4), 1.0)).is_err());
}

#[test]
fn robustness_bound_limits_and_oracle() {
    let (m, lambda) = (0.3, 2.0);
    let bound = step_size_bound(m).unwrap();
    let small = robustness_bound(1e-6 * bound, lambda, m).unwrap();
    assert!((small - lambda / m).abs() <= 1e-3 * lambda / m);
    assert_eq!(robustness_bound(0.0, lambda, m).unwrap(), lambda / m);
    assert!(robustness_bound(bound, lambda, m).unwrap().is_infinite());
    assert!(robustness_bound(1.01 * bound, lambda, m).is_err());

    let alpha = 0.5 * step_size_bound(0.5).unwrap();
    let r = (1.0 - 2.0 * alpha * 0.5 + alpha * alpha * 1.5f64.powi(2)).sqrt();
    let expect = alpha / (1.0 - r);
    assert!((robustness_bound(alpha, 1.0, 0.5).unwrap() - expect).abs() <= 1e-12 * expect);
}

#[test]
fn robustness_of_zero_net_on_identity_is_one_half() {
    let op = LinearOperatorSpec::identity(6, 6);
    let w = NetworkWeights::scaled_identity(0.0, (6, 6));
    let b = random_problem(&op, 1);
    let cfg = SolverConfig::new(0.5, 1.0).unwrap().with_tolerances(1e-12, 1e-12).with_max_iters(1000, 10);
    let rep = verify_robustness(&w, &op, &b, 8, 0.1, &cfg, 3).unwrap();
    assert_eq!(rep.empirical_ratios.len(), 8);
    for r in &rep.empirical_ratios {
        assert!((r - 0.5).abs() < 1e-9, "{r}");
    }
    assert!(!rep.violated);
    assert!((rep.m_hat - 1.0).abs() < 1e-12);
}

#[test]
fn zero_perturbation_trials_are_skipped() {
    let op = LinearOperatorSpec::identity(4, 4);
    let w = NetworkWeights::scaled_identity(0.1, (4, 4));
    let b = random_problem(&op, 2);
    let rep = verify_robustness(&w, &op, &b, 5, 0.0, &SolverConfig::new(0.5, 1.0).unwrap(), 1).unwrap();
    assert_eq!(rep.skipped_trials, 5);
    assert!(rep.empirical_ratios.is_empty());
    assert!(!rep.violated);
}

#[test]
fn robustness_holds_for_constrained_net() {
    let shape = (8, 8);
    let w = small_net(shape, 6, 4).rescaled_to_bound(0.8);
    let op = LinearOperatorSpec::masked_fourier(make_mask(shape, 2.0, 2.0, 5).unwrap());
    let b = random_problem(&op, 6);
    let cfg = SolverConfig::new(0.2, 1.0).unwrap().with_tolerances(1e-9, 1e-9).with_max_iters(3000, 10);
    let rep = verify_robustness(&w, &op, &b, 20, 0.05, &cfg, 7).unwrap();
    assert_eq!(rep.empirical_ratios.len() + rep.nonconverged_trials + rep.skipped_trials, 20);
    assert_eq!(rep.nonconverged_trials, 0);
    assert!(rep.bound_factor.is_finite());
    assert!(!rep.violated, "max {} bound {}", rep.max_ratio, rep.bound_factor);
    assert_eq!(rep.violated, rep.max_ratio > rep.bound_factor * (1.0 + ROBUSTNESS_SLACK));
}

#[test]
fn robustness_requires_converged_base() {
    let op = LinearOperatorSpec::identity(4, 4);
    let w = NetworkWeights::scaled_identity(0.1, (4, 4));
    let b = Measurement::zeros(op.layout());
    let mut b2 = b.clone();
    b2.data_mut()[0] = num_complex::Complex64::new(1.0, 0.0);
    let cfg = SolverConfig::new(0.5, 1.0).unwrap().with_max_iters(1, 1);
    assert!(verify_robustness(&w, &op, &b2, 3, 0.1, &cfg, 1).is_err());
}

#[test]
fn reports_serialize_to_key_value_text() {
    let w = NetworkWeights::scaled_identity(0.25, (4, 4));
    let est = monotone_margin(&w, 4, 1, &SamplingSpec::random((4, 4), 1.0)).unwrap();
    let kv = parse_key_value(&est.to_key_value());
    let m: f64 = kv.iter().find(|(k, _)| k == "m_hat").unwrap().1.parse().unwrap();
    assert!((m - 0.75).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn robustness_bound_nonincreasing_in_margin(m1 in 0.01f64..1.0, m2 in 0.01f64..1.0, frac in 0.01f64..0.99, lambda in 0.1f64..10.0) {
        let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
        let b_lo = robustness_bound(frac * step_size_bound(lo).unwrap(), lambda, lo).unwrap();
        let b_hi = robustness_bound(frac * step_size_bound(hi).unwrap(), lambda, hi).unwrap();
        prop_assert!(b_hi <= b_lo * (1.0 + 1e-12));
    }

    #[test]
    fn margin_bounded_by_certified_margin(seed in 0u64..500, target in 0.2f64..1.5) {
        let w = small_net((6, 6), 4, seed).rescaled_to_bound(target);
        let est = monotone_margin(&w, 30, seed, &SamplingSpec::random((6, 6), 1.0)).unwrap();
        let bound = w.global_lipschitz_bound();
        prop_assert!(est.m_hat >= 1.0 - bound - 1e-6);
        prop_assert!(est.m_hat <= 1.0 + bound + 1e-6);
    }
}
