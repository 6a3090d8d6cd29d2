//! g-prior and hyper-g quantities against direct marginal-likelihood
//! integration.

mod common;

use blockg_core::design::{fit_least_squares, FitSummary};
use blockg_core::gprior::{
    ln_bf_fixed_g, ln_bf_hyper_g, ln_bf_hyper_g_gspace, ln_bf_ratio_hyper_g,
    posterior_mean_hyper_g, shrinkage_from_stats, shrinkage_hyper_g, sigma2_limit_hyper_g, sigma2_posterior_fixed_g, FixedGPrior, HyperGPrior,
};
use blockg_oracles::models as oracle;
use proptest::prelude::*;
use rand::Rng;

fn fit(n: usize, p: usize, r2: f64) -> FitSummary {
    FitSummary::from_r2(n, &[p], &[r2]).unwrap()
}

#[test]
fn closed_form_matches_g_space_integral() {
    let mut rng = common::rng(21);
    let start = std::time::Instant::now();
    for _ in 0..200 {
        let a = rng.random_range(2.05..4.0);
        let p = rng.random_range(1..12);
        let n = rng.random_range(p + 2..400);
        let r2 = rng.random_range(0.0..0.995);
        let prior = HyperGPrior::new(a).unwrap();
        let got = ln_bf_hyper_g(&prior, &fit(n, p, r2)).unwrap();
        let want = oracle::ln_bf_hyper_g_oracle(a, n, p, r2);
        assert!(
            (got.exp() - want.exp()).abs() <= 1e-9 * want.exp() || (got - want).abs() < 1e-9,
            "a={a} n={n} p={p} r2={r2}: {got} vs {want}"
        );
        let internal = ln_bf_hyper_g_gspace(&prior, &fit(n, p, r2)).unwrap();
        assert!((internal - want).abs() < 1e-8, "{internal} vs {want}");
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn shrinkage_matches_g_space_ratio() {
    let mut rng = common::rng(22);
    for _ in 0..50 {
        let a = rng.random_range(2.05..4.0);
        let p = rng.random_range(1..8);
        let n = rng.random_range(p + 2..200);
        let r2 = rng.random_range(0.0..0.99);
        let got = shrinkage_hyper_g(&HyperGPrior::new(a).unwrap(), &fit(n, p, r2)).unwrap();
        let want = oracle::shrinkage_hyper_g_oracle(a, n, p, r2);
        assert!(common::rel(got, want) < 1e-8, "{got} {want}");
    }
}

#[test]
fn fixed_g_matches_gaussian_marginal() {
    let mut rng = common::rng(23);
    for _ in 0..10 {
        let d = common::random_design(&mut rng, 25, &[3], &[0.4, -0.2, 0.1], 1.0);
        let g = rng.random_range(0.5..100.0);
        let got = ln_bf_fixed_g(&FixedGPrior::new(g).unwrap(), &fit_least_squares(&d).unwrap())
            .unwrap();
        let want = oracle::ln_bf_fixed_g_oracle(d.x(), d.y(), g);
        assert!((got - want).abs() < 1e-8, "{got} {want}");
    }
}

#[test]
fn fixed_g_sigma2_posterior_uses_marginal_quadratic_form() {
    let mut rng = common::rng(24);
    for _ in 0..10 {
        let d = common::random_design(&mut rng, 30, &[2, 2], &[0.5, -0.3, 0.2, 0.1], 1.0);
        let g = rng.random_range(0.5..200.0);
        let ig = sigma2_posterior_fixed_g(&FixedGPrior::new(g).unwrap(), &fit_least_squares(&d).unwrap())
            .unwrap();
        let x = d.x();
        let proj = x * (x.transpose() * x).try_inverse().unwrap() * x.transpose();
        let cov = nalgebra::DMatrix::<f64>::identity(30, 30) + proj * g;
        let q = d.y().dot(&(cov.try_inverse().unwrap() * d.y()));
        assert_eq!(ig.shape, 14.5);
        assert!(common::rel(2.0 * ig.rate, q) < 1e-10, "{} {q}", 2.0 * ig.rate);
    }
}

#[test]
fn els_and_small_n_shrinkage_limits() {
    let a = 3.0;
    let r2 = 1.0 - 1e-10;
    for (n, p) in [(20usize, 3usize), (10, 5), (10, 7)] {
        let s = shrinkage_hyper_g(&HyperGPrior::new(a).unwrap(), &fit(n, p, r2)).unwrap();
        assert!(s >= 0.999, "n={n} p={p}: {s}");
    }
    // At n = a + p - 1 the approach to one is logarithmic in 1 - R^2.
    let mut last = 0.0;
    for e in [4, 8, 12, 16] {
        let r2 = 1.0 - 10f64.powi(-e);
        let s = shrinkage_hyper_g(&HyperGPrior::new(a).unwrap(), &fit(9, 7, r2)).unwrap();
        let want = oracle::shrinkage_hyper_g_oracle(a, 9, 7, r2);
        assert!(common::rel(s, want) < 1e-7, "{s} {want}");
        assert!(s > last);
        last = s;
    }
    for (n, p) in [(3.0, 4.0), (4.0, 6.0), (2.0, 5.0), (5.0, 4.0)] {
        let s = shrinkage_from_stats(a, n, p, r2, 1e-10).unwrap();
        let want = 2.0 / (p + a - n + 1.0);
        assert!((s - want).abs() < 1e-5, "n={n} p={p}: {s} vs {want}");
    }
    let s = shrinkage_from_stats(a, 1.0, 4.0, r2, 1e-10).unwrap();
    assert_eq!(s, 2.0 / (4.0 + a));
}

#[test]
fn posterior_mean_scales_least_squares() {
    let mut rng = common::rng(24);
    let d = common::random_design(&mut rng, 40, &[2], &[1.0, -0.5], 1.0);
    let f = fit_least_squares(&d).unwrap();
    let prior = HyperGPrior::default();
    let t = shrinkage_hyper_g(&prior, &f).unwrap();
    let mean = posterior_mean_hyper_g(&prior, &f).unwrap();
    for (m, b) in mean.iter().zip(&f.beta_hat_ls) {
        assert!((m - t * b).abs() < 1e-14);
    }
}

#[test]
fn sigma2_limit_parameters() {
    let prior = HyperGPrior::new(3.0).unwrap();
    let ig = sigma2_limit_hyper_g(&prior, 30, 4, 2.0).unwrap();
    assert!((ig.shape - 12.0).abs() < 1e-14);
    assert!((ig.rate - 25.0).abs() < 1e-14);
}

#[test]
fn bayes_factor_ratio_of_same_model_is_one() {
    let prior = HyperGPrior::new(3.0).unwrap();
    let f = fit(30, 3, 0.4);
    assert_eq!(ln_bf_ratio_hyper_g(&prior, &f, &f).unwrap(), 0.0);
}

proptest! {
    #[test]
    fn bayes_factor_increases_with_r2(
        a in 2.1f64..4.0, p in 1usize..8, extra in 2usize..100, r2 in 0.0f64..0.98, dr in 1e-4f64..0.01,
    ) {
        let n = p + extra;
        let prior = HyperGPrior::new(a).unwrap();
        let lo = ln_bf_hyper_g(&prior, &fit(n, p, r2)).unwrap();
        let hi = ln_bf_hyper_g(&prior, &fit(n, p, r2 + dr)).unwrap();
        prop_assert!(hi > lo);
    }

    #[test]
    fn shrinkage_lies_between_prior_mean_and_one(
        a in 2.1f64..4.0, p in 1usize..8, extra in 2usize..100, r2 in 0.0f64..0.999,
    ) {
        let n = p + extra;
        let s = shrinkage_hyper_g(&HyperGPrior::new(a).unwrap(), &fit(n, p, r2)).unwrap();
        prop_assert!(s >= 2.0 / (p as f64 + a) - 1e-12);
        prop_assert!(s <= 1.0);
    }
}
