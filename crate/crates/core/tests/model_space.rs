//! Enumeration, posterior model probabilities and model-averaged
//! prediction.

mod common;

use blockg_core::block::IntegrationOptions;
use blockg_core::design::{block_orthogonalize, fit_least_squares, BlockPartition};
use blockg_core::models::{
    bma_predict, enumerate_models, posterior_model_probs, select_models, EnumerationMode,
    ModelPrior, PriorSpec,
};
use blockg_oracles::sums::normalize_dd;
use proptest::prelude::*;
use rand::Rng;

/// The `count` all-subsets models of `log2(count)` predictors.
fn models(count: usize) -> Vec<blockg_core::models::ModelSpec> {
    let part = BlockPartition::single(count.trailing_zeros() as usize).unwrap();
    enumerate_models(&part, EnumerationMode::AllSubsets).unwrap()
}

#[test]
fn equal_bayes_factors_give_uniform_posterior() {
    let post = posterior_model_probs(models(8), vec![1.5; 8], &ModelPrior::Uniform).unwrap();
    assert!(post.post_prob.iter().all(|&p| (p - 0.125).abs() < 1e-15));
}

#[test]
fn infinite_bayes_factor_takes_all_mass() {
    let mut lbf = vec![0.0, 3.0, -2.0, 10.0];
    lbf[2] = f64::INFINITY;
    let post = posterior_model_probs(models(4), lbf, &ModelPrior::Uniform).unwrap();
    assert_eq!(post.post_prob, vec![0.0, 0.0, 1.0, 0.0]);
    let rows = post.rows_by_probability();
    assert_eq!(rows[0].model_id, 2);
    let json = serde_json::to_string(&rows[0]).unwrap();
    assert!(json.contains("\"+inf\""));
}

#[test]
fn empty_list_is_rejected() {
    let err = posterior_model_probs(Vec::new(), Vec::new(), &ModelPrior::Uniform).unwrap_err();
    assert_eq!(err.tag(), "EmptyModelList");
}

#[test]
fn normalization_matches_double_double_reference() {
    let mut rng = common::rng(51);
    for _ in 0..50 {
        let lbf: Vec<f64> = (0..16).map(|_| rng.random_range(-30.0..30.0)).collect();
        let w: Vec<f64> = (0..16).map(|_| rng.random_range(0.1..1.0)).collect();
        let post =
            posterior_model_probs(models(16), lbf.clone(), &ModelPrior::Weights(w.clone())).unwrap();
        let total: f64 = w.iter().sum();
        let prior: Vec<f64> = w.iter().map(|x| x / total).collect();
        let want = normalize_dd(&lbf, &prior);
        for (p, q) in post.post_prob.iter().zip(&want) {
            assert!((p - q).abs() < 1e-14, "{p} {q}");
        }
        assert!((post.post_prob.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn all_subsets_selection_sums_to_one() {
    let mut rng = common::rng(52);
    let d = common::random_design(&mut rng, 40, &[3], &[1.0, 0.0, -0.5], 1.0);
    let (post, fits) = select_models(
        &d,
        &PriorSpec::HyperG { a: 3.0 },
        EnumerationMode::AllSubsets,
        &ModelPrior::Uniform,
        &IntegrationOptions::default(),
    )
    .unwrap();
    assert_eq!(post.post_prob.len(), 8);
    assert_eq!(fits.len(), 8);
    assert!((post.post_prob.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn mixing_prior_and_enumeration_mode_is_rejected() {
    let mut rng = common::rng(53);
    let d = common::random_design(&mut rng, 40, &[1, 2], &[1.0, 0.0, -0.5], 1.0);
    let opts = IntegrationOptions::default();
    let err = select_models(
        &d,
        &PriorSpec::BlockHyperG { a: 3.0 },
        EnumerationMode::AllSubsets,
        &ModelPrior::Uniform,
        &opts,
    );
    assert!(err.is_err());
}

#[test]
fn block_models_reuse_full_fit_slices() {
    let mut rng = common::rng(54);
    let d = common::random_design(&mut rng, 60, &[2, 1, 2], &[1.0, 0.5, 0.0, 0.3, 0.0], 1.0);
    let (q, _) = block_orthogonalize(&d).unwrap();
    let full = fit_least_squares(&q).unwrap();
    let (post, fits) = select_models(
        &q,
        &PriorSpec::BlockHyperG { a: 3.0 },
        EnumerationMode::BlockSubsets,
        &ModelPrior::Uniform,
        &IntegrationOptions::default(),
    )
    .unwrap();
    assert_eq!(post.models.len(), 8);
    for (m, f) in post.models.iter().zip(&fits) {
        let Some(fit) = &f.fit else { continue };
        for (r2, &blk) in fit.r2_blocks.iter().zip(&m.blocks_included) {
            assert!((r2 - full.r2_blocks[blk]).abs() < 1e-10);
        }
    }
}

#[test]
fn prediction_at_column_means_is_response_mean() {
    let mut rng = common::rng(55);
    let d = common::random_design(&mut rng, 50, &[2, 2], &[1.0, 0.5, -0.5, 0.0], 1.0);
    let (q, _) = block_orthogonalize(&d).unwrap();
    let (post, fits) = select_models(
        &q,
        &PriorSpec::BlockHyperG { a: 3.0 },
        EnumerationMode::BlockSubsets,
        &ModelPrior::Uniform,
        &IntegrationOptions::default(),
    )
    .unwrap();
    let means: Vec<Vec<f64>> = fits.iter().map(|f| f.posterior_mean.clone()).collect();
    let yhat = bma_predict(q.x_means(), &post, &means, q.x_means(), q.y_mean()).unwrap();
    assert!((yhat - q.y_mean()).abs() < 1e-14);

    let x_star = vec![0.3, -1.0, 2.0, 0.5];
    let mut single = post.clone();
    single.post_prob = vec![0.0, 0.0, 0.0, 1.0];
    let one = bma_predict(&x_star, &single, &means, q.x_means(), q.y_mean()).unwrap();
    let xc: Vec<f64> = x_star.iter().zip(q.x_means()).map(|(a, b)| a - b).collect();
    let want = q.y_mean() + xc.iter().zip(&means[3]).map(|(a, b)| a * b).sum::<f64>();
    assert!((one - want).abs() < 1e-14);
    assert!(bma_predict(&x_star[..3], &post, &means, q.x_means(), q.y_mean()).is_err());
}

#[test]
fn prediction_shifts_with_the_response() {
    let mut rng = common::rng(56);
    let d = common::random_design(&mut rng, 50, &[1, 2], &[1.0, 0.5, -0.5], 1.0);
    let (q, _) = block_orthogonalize(&d).unwrap();
    let run = |shift: f64| {
        let y = q.y().map(|v| v + q.y_mean() + shift);
        let qs = q.with_response(&y).unwrap();
        let (post, fits) = select_models(
            &qs,
            &PriorSpec::BlockHyperG { a: 3.0 },
            EnumerationMode::BlockSubsets,
            &ModelPrior::Uniform,
            &IntegrationOptions::default(),
        )
        .unwrap();
        let means: Vec<Vec<f64>> = fits.iter().map(|f| f.posterior_mean.clone()).collect();
        bma_predict(&[0.5, 1.0, -1.0], &post, &means, qs.x_means(), qs.y_mean()).unwrap()
    };
    assert!((run(7.5) - run(0.0) - 7.5).abs() < 1e-10);
}

proptest! {
    #[test]
    fn shift_invariance(shift in -500.0f64..500.0, seed in 0u64..1000) {
        let mut rng = common::rng(seed);
        let lbf: Vec<f64> = (0..8).map(|_| rng.random_range(-20.0..20.0)).collect();
        let a = posterior_model_probs(models(8), lbf.clone(), &ModelPrior::Uniform).unwrap();
        let moved: Vec<f64> = lbf.iter().map(|x| x + shift).collect();
        let b = posterior_model_probs(models(8), moved, &ModelPrior::Uniform).unwrap();
        for (p, q) in a.post_prob.iter().zip(&b.post_prob) {
            prop_assert!((p - q).abs() < 1e-13);
        }
    }
}
