//! Simulation and numerics checked against independent closed forms.

use renewal_core::linalg::SymMatrix;
use renewal_core::mixture::{mixture_weights, ChiSquareMixture, CovarianceEstimate};
use renewal_core::passage::{estimate_et, PerturbedWalkModel};
use renewal_core::perturbation::{QuadraticSpec, ResidualSpec, StationarySpec};
use renewal_core::rng::ids;
use renewal_core::stats::{ks_critical_one_sample, ks_statistic};
use renewal_core::trial::*;
use renewal_core::verification::*;
use renewal_core::walk::{renewal_window_count, IncrementLaw, VectorLaw};
use renewal_core::RngStream;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn exp1() -> IncrementLaw {
    IncrementLaw::Exponential { rate: 1.0 }
}

#[test]
fn equal_weights_match_scaled_chi_square() {
    for k in 1..=5usize {
        for &w in &[0.3, 1.0, 2.5] {
            let m = ChiSquareMixture::new(vec![w; k]).unwrap();
            let chi = ChiSquared::new(k as f64).unwrap();
            for &z in &[0.05, 0.5, 1.0, 3.0, 7.5, 15.0] {
                let want = chi.cdf(z / w);
                assert!((m.cdf(z).unwrap() - want).abs() < 1e-6, "k={k} w={w} z={z}");
            }
        }
    }
}

/// `P(λ₁N₁² + λ₂N₂² ≤ z)` by conditioning on `N₁ = v`.
fn two_weight_oracle(l1: f64, l2: f64, z: f64) -> f64 {
    let chi = ChiSquared::new(1.0).unwrap();
    let vmax = (z / l1).sqrt();
    let steps = 20_000;
    let h = vmax / steps as f64;
    let f = |v: f64| {
        let dens = 2.0 * (-0.5 * v * v).exp() / (2.0 * std::f64::consts::PI).sqrt();
        dens * chi.cdf(((z - l1 * v * v) / l2).max(0.0))
    };
    // Simpson's rule on [0, vmax].
    let mut acc = f(0.0) + f(vmax);
    for i in 1..steps {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn distinct_weights_match_conditioning_oracle() {
    for &(l1, l2) in &[(1.0, 0.25), (2.0, 0.7), (0.5, 0.05)] {
        let m = ChiSquareMixture::new(vec![l1, l2]).unwrap();
        for &z in &[0.1, 0.8, 2.0, 6.0] {
            let want = two_weight_oracle(l1, l2, z);
            assert!((m.cdf(z).unwrap() - want).abs() < 2e-6, "({l1},{l2}) z={z}");
        }
    }
}

#[test]
fn mixture_sampler_matches_cdf() {
    let m = ChiSquareMixture::new(vec![1.5, -0.5, 0.25]).unwrap();
    let mut rng = RngStream::new(11).with_stream(ids::MIXTURE).rng();
    let draws: Vec<f64> = (0..20_000).map(|_| m.sample(&mut rng)).collect();
    let d = renewal_core::stats::ks_statistic_bracketed(&draws, 400, |z| m.cdf(z).unwrap());
    assert!(d < ks_critical_one_sample(draws.len(), 0.001), "KS {d}");
}

#[test]
fn trace_identity_for_weights() {
    let q = QuadraticSpec::new(SymMatrix::from_rows(vec![vec![0.5f64, 0.1], vec![0.1, 0.2]]).unwrap()).unwrap();
    let s = CovarianceEstimate::analytic(SymMatrix::diagonal(&[2.0, 3.0])).unwrap();
    let m = mixture_weights(&q, &s).unwrap();
    assert!((m.mean() - (0.5 * 2.0 + 0.2 * 3.0)).abs() < 1e-12);
}

#[test]
fn exponential_walk_passage_is_a_plus_one() {
    let m = PerturbedWalkModel::plain(exp1());
    let s = estimate_et(&m, 30.0, 20_000, RngStream::new(1)).unwrap();
    assert!((s.t.mean - 31.0).abs() <= 3.0 * s.t.se, "{:?}", s.t);
    assert_eq!(s.noncrossing_fraction, 0.0);
}

#[test]
fn exponential_overshoot_is_memoryless() {
    let m = PerturbedWalkModel::plain(exp1());
    let s = estimate_et(&m, 40.0, 5_000, RngStream::new(2)).unwrap();
    let r = s.crossed_values(|x| x.excess);
    let d = ks_statistic(&r, |x| 1.0 - (-x).exp());
    assert!(d < ks_critical_one_sample(r.len(), 0.01));
}

#[test]
fn poisson_renewal_window() {
    let w = renewal_window_count(&exp1(), 20.0, 0.5, 200, 20_000, RngStream::new(3)).unwrap();
    assert!((w.count.mean - 0.5).abs() <= 3.0 * w.count.se);
}

#[test]
fn window_count_theory_and_two_code_paths() {
    let m = PerturbedWalkModel::plain(exp1());
    let r = theorem1_experiment(&m, &EventPredicate::Always, f64::INFINITY, 20.0, 0.5, 20_000, RngStream::new(4))
        .unwrap();
    assert_eq!(r.theory_value, 0.5);
    assert!(r.pass, "{r:?}");
    let w = renewal_window_count(&exp1(), 20.0, 0.5, 200, 20_000, RngStream::new(5)).unwrap();
    let se = (r.std_error.powi(2) + w.count.se.powi(2)).sqrt();
    assert!((r.estimate - w.count.mean).abs() <= 2.0 * se);
}

#[test]
fn zeta_only_model_prediction() {
    let model = PerturbedWalkModel {
        stationary: StationarySpec::Zero,
        ..PerturbedWalkModel::tm1()
    };
    let p = model.prepare().unwrap();
    assert!((p.lambda() - 0.5).abs() < 1e-15);
    let c = p.estimate_rho_nu(None, 20_000, RngStream::new(6)).unwrap();
    // With ξ = 0 the backward infimum is the first increment.
    assert_eq!(c.nu, 0.0);
    assert!((c.rho - 1.0).abs() <= 4.0 * c.se_rho);
    assert!((c.predicted_et(50.0) - (50.0 + c.rho - 0.5)).abs() < 1e-12);
}

#[test]
fn constant_shift_moves_prediction() {
    let base = PerturbedWalkModel::tm1();
    let shifted = PerturbedWalkModel { residual: ResidualSpec::Shift(0.75), ..base.clone() };
    let s = RngStream::new(8);
    let c0 = base.prepare().unwrap().estimate_rho_nu(None, 2_000, s).unwrap();
    let c1 = shifted.prepare().unwrap().estimate_rho_nu(None, 2_000, s).unwrap();
    assert_eq!(c0.predicted_et(80.0) - c1.predicted_et(80.0), 0.75 / c0.mu);
}

#[test]
fn plain_walk_theorem4_wald() {
    let m = PerturbedWalkModel::plain(exp1());
    let r = theorem4_experiment(&m, &[25.0, 50.0], 20_000, 20_000, None, RngStream::new(9)).unwrap();
    for row in &r.rows {
        assert!((row.predicted - (row.a + r.constants.rho)).abs() < 1e-12);
    }
    assert!(r.final_pass, "{r:?}");
    assert!(r.constants.consistent);
}

#[test]
fn theorem3_plain_walk() {
    let m = PerturbedWalkModel::plain(exp1());
    let r = theorem3_experiment(&m, 60.0, 4_000, 20_000, None, RngStream::new(10)).unwrap();
    assert!(r.excess.pass, "{:?}", r.excess);
    assert!(r.xi.is_none() && r.xi_degenerate);
}

#[test]
fn theorem3_zeta_marginal_on_tm1() {
    let r = theorem3_experiment(&PerturbedWalkModel::tm1(), 200.0, 10_000, 20_000, None, RngStream::new(12)).unwrap();
    assert!(r.zeta.statistic < 0.03, "{:?}", r.zeta);
}

#[test]
fn gaussian_vector_law() {
    let model = PerturbedWalkModel {
        vector_law: VectorLaw::Gaussian { covariance: SymMatrix::diagonal(&[1.0, 4.0]) },
        quadratic: QuadraticSpec::new(SymMatrix::diagonal(&[0.5, 0.25])).unwrap(),
        stationary: StationarySpec::Zero,
        ..PerturbedWalkModel::tm1()
    };
    let p = model.prepare().unwrap();
    assert_eq!(p.mixture().weights(), &[1.0, 0.5]);
}

#[test]
fn builtin_derivatives_match_finite_differences() {
    for theta in [0.5, 1.0, 2.0, 3.7] {
        for kind in [GKind::FixedWidthCi, GKind::RepeatedLrt] {
            let exact = GStatistic::new(kind.clone(), theta).unwrap();
            let g = exact.clone();
            let h = 1e-5;
            let f = move |x: f64, y: f64| g.eval(x, y);
            let (x, y) = (1.0, 1.0 / theta);
            let fd = [
                (f(x + h, y) - f(x - h, y)) / (2.0 * h),
                (f(x, y + h) - f(x, y - h)) / (2.0 * h),
                (f(x + h, y) - 2.0 * f(x, y) + f(x - h, y)) / (h * h),
                (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h),
                (f(x, y + h) - 2.0 * f(x, y) + f(x, y - h)) / (h * h),
            ];
            let sym = [exact.g10, exact.g01, exact.g20, exact.g11, exact.g02];
            assert!((f(x, y) - exact.g).abs() < 1e-12);
            for (a, b) in fd.iter().zip(&sym) {
                assert!((a - b).abs() <= 1e-4 * b.abs().max(1.0), "{kind:?} θ={theta}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn custom_g_uses_finite_differences() {
    let f: CustomFn = std::sync::Arc::new(|x: f64, y: f64| (y / x).powi(2));
    let custom: GStatistic<f64> = GStatistic::new(GKind::Custom(CustomG(f)), 1.5).unwrap();
    let exact: GStatistic<f64> = GStatistic::fixed_width_ci(1.5).unwrap();
    for (a, b) in [
        (custom.g10, exact.g10),
        (custom.g01, exact.g01),
        (custom.g20, exact.g20),
        (custom.g11, exact.g11),
        (custom.g02, exact.g02),
    ] {
        assert!((a - b).abs() <= 1e-4 * b.abs().max(1.0));
    }
}

#[test]
fn rapid_failures_are_all_observed() {
    let model = StaggeredExponentialModel::new(1e6, GKind::FixedWidthCi);
    let s = simulate_trial(&model, 30, RngStream::new(13)).unwrap();
    assert_eq!(s.deaths, 30);
    let total: f64 = s.lifetimes.iter().sum();
    assert!((s.total_time_on_test - total).abs() < 1e-12);
}

#[test]
fn observed_death_fraction_grows() {
    let model = StaggeredExponentialModel::new(1.0, GKind::FixedWidthCi);
    let frac = |n: usize| {
        let v: Vec<f64> = (0..2_000u64)
            .map(|r| simulate_trial(&model, n, RngStream::new(14).replication(r)).unwrap().deaths as f64 / n as f64)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (f5, f20, f80) = (frac(5), frac(20), frac(80));
    assert!(f5 < f20 && f20 < f80 && f80 < 1.0, "{f5} {f20} {f80}");
}

#[test]
fn stationary_term_matches_walk_module() {
    let model = StaggeredExponentialModel::new(0.8, GKind::FixedWidthCi);
    for r in 0..200u64 {
        let s = simulate_trial(&model, 25, RngStream::new(15).replication(r)).unwrap();
        let window: Vec<_> = (1..=25)
            .rev()
            .map(|k| renewal_core::walk::Innovation {
                base: s.lifetimes[k - 1],
                gap: s.tau[k] - s.tau[k - 1],
                ..Default::default()
            })
            .collect();
        let spec = StationarySpec::StaggeredResidual {
            count_weight: 0.0,
            excess_weight: 1.0,
            depth: 25,
            centering: renewal_core::perturbation::Centering::None,
        };
        assert_eq!(spec.evaluate(&window).unwrap(), xi_staggered_residual(&s));
    }
}

#[test]
fn repeated_test_power_and_size() {
    let null = StaggeredExponentialModel::new(1.0, GKind::RepeatedLrt);
    let horizon = 300;
    let a = calibrate_example2(&null, 0.04, 2_000, horizon, RngStream::new(16)).unwrap();
    let size = example2_run(&null, a, 2_000, horizon, RngStream::new(17)).unwrap();
    assert!(size.rejection.mean < 0.05 + 3.0 * size.rejection.se, "{:?}", size.rejection);
    let alt = StaggeredExponentialModel::new(2.0, GKind::RepeatedLrt);
    let power = example2_run(&alt, a, 2_000, horizon, RngStream::new(18)).unwrap();
    assert!(power.rejection.mean > 0.9, "{:?}", power.rejection);
}

#[test]
fn equivalent_walk_drift_and_lambda() {
    let model = StaggeredExponentialModel::new(2.0, GKind::FixedWidthCi);
    let walk = model.as_perturbed_walk().unwrap().prepare().unwrap();
    assert!((walk.mu() - 0.25).abs() < 1e-15);
    // λ = g_02 / (2θ²).
    assert!((walk.lambda() - 2.0 / 8.0).abs() < 1e-15);
}
