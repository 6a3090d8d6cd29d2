//! Seeded Monte Carlo studies: model selection behaviour of the block
//! hyper-g Bayes factor and the error of model-averaged predictions as `n`
//! grows.

use blockg_core::block::{ln_bf_between, IntegrationOptions};
use blockg_core::design::{fit_least_squares, CenteredDesign, FitSummary};
use blockg_core::models::{bma_predict, select_models, EnumerationMode, ModelPrior, PriorSpec};
use blockg_core::{Error, Result};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::result::ExperimentResult;
use crate::sequence::random_orthogonal_design;

/// Random stream for replicate `rep` at sample-size index `j`.
pub fn replicate_rng(seed: u64, rep: usize, j: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((rep as u64) << 8) | j as u64);
    rng
}

fn check_budget(reps: usize, ns: &[usize], budget: usize) -> Result<()> {
    if ns.is_empty() || reps == 0 {
        return Err(Error::PreconditionViolated("need at least one sample size and replicate".into()));
    }
    let work: usize = reps.saturating_mul(ns.iter().sum::<usize>());
    if work > budget {
        return Err(Error::SimulationBudgetExceeded(format!(
            "{reps} replicates over sample sizes summing to {} need {work} rows, budget {budget}",
            ns.iter().sum::<usize>()
        )));
    }
    Ok(())
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = q * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Settings of the selection study. The design has a block of five
/// predictors followed by a block of two, orthogonalized; the truth uses
/// the first two predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub a: f64,
    pub sample_sizes: Vec<usize>,
    pub reps: usize,
    pub alpha: f64,
    /// Coefficients of predictors 1 and 2.
    pub beta_true: [f64; 2],
    pub sigma: f64,
    pub seed: u64,
    /// Upper bound on `reps * Σ n`.
    pub budget: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            a: 3.0,
            sample_sizes: vec![100, 400, 1600],
            reps: 200,
            alpha: 1.0,
            beta_true: [0.5, -0.5],
            sigma: 1.0,
            seed: 20240517,
            budget: 5_000_000,
        }
    }
}

/// Candidate models compared with the truth `{x1, x2}`.
pub const SELECTION_CASES: [(&str, &[usize]); 4] = [
    // Misses every true column.
    ("case_1", &[5, 6]),
    // True columns plus null columns of the same block.
    ("case_2a", &[0, 1, 2, 3, 4]),
    // Every predictor.
    ("case_2b", &[0, 1, 2, 3, 4, 5, 6]),
    // True columns plus the whole null block.
    ("case_2c", &[0, 1, 5, 6]),
];

const TRUE_COLUMNS: [usize; 2] = [0, 1];

fn columns_fit(design: &CenteredDesign, cols: &[usize]) -> Result<FitSummary> {
    let gamma: Vec<bool> = (0..design.p()).map(|j| cols.contains(&j)).collect();
    let sub = design.subdesign(&gamma)?.expect("nonempty model");
    fit_least_squares(&sub)
}

/// One replicate of the selection study: `ln BF(case : truth)` for each
/// case and `n R_B^2` of the second block in the full fit.
pub fn selection_replicate(cfg: &SelectionConfig, rep: usize, j: usize) -> Result<([f64; 4], f64)> {
    let n = cfg.sample_sizes[j];
    let mut rng = replicate_rng(cfg.seed, rep, j);
    let design = random_orthogonal_design(&mut rng, n, &[5, 2])?;
    let x = design.x();
    let y = DVector::from_fn(n, |i, _| {
        cfg.alpha
            + cfg.beta_true[0] * x[(i, 0)]
            + cfg.beta_true[1] * x[(i, 1)]
            + cfg.sigma * rng.sample::<f64, _>(StandardNormal)
    });
    let design = design.with_response(&y)?;
    let opts = IntegrationOptions::default();
    let truth = columns_fit(&design, &TRUE_COLUMNS)?;
    let mut out = [0.0; 4];
    for (slot, (_, cols)) in out.iter_mut().zip(SELECTION_CASES.iter()) {
        let fit = columns_fit(&design, cols)?;
        *slot = ln_bf_between(cfg.a, &fit, &truth, &opts)?;
    }
    let full = fit_least_squares(&design)?;
    Ok((out, n as f64 * full.r2_blocks[1]))
}

/// Distribution of `ln BF(case : truth)` across replicates for each sample
/// size, with verdicts: cases 1, 2A and 2B drift to `-∞` (median below
/// `-5` at the largest `n` and decreasing), case 2C stabilizes, `n R_B^2`
/// stays bounded in probability and case 2A falls like `-(Δp/2) ln n`.
pub fn run_selection_experiment(cfg: &SelectionConfig) -> Result<ExperimentResult> {
    check_budget(cfg.reps, &cfg.sample_sizes, cfg.budget)?;
    if cfg.sample_sizes.iter().any(|&n| n < 10) {
        return Err(Error::PreconditionViolated("sample sizes must be at least 10".into()));
    }
    let mut res = ExperimentResult::new("selection", cfg.seed);
    for (j, &n) in cfg.sample_sizes.iter().enumerate() {
        let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.reps); 4];
        let mut nr2 = Vec::with_capacity(cfg.reps);
        for rep in 0..cfg.reps {
            let (lbf, v) = selection_replicate(cfg, rep, j)?;
            for (d, x) in draws.iter_mut().zip(lbf) {
                d.push(x);
            }
            nr2.push(v);
        }
        let x = n as f64;
        for ((name, _), d) in SELECTION_CASES.iter().zip(&draws) {
            res.push_with(x, format!("{name}_median"), quantile(d, 0.5), 0.0, "simulation");
            res.push_with(x, format!("{name}_q25"), quantile(d, 0.25), 0.0, "simulation");
            res.push_with(x, format!("{name}_q75"), quantile(d, 0.75), 0.0, "simulation");
        }
        res.push_with(x, "n_r2_block2_p95", quantile(&nr2, 0.95), 0.0, "simulation");
    }
    let top = *cfg.sample_sizes.last().unwrap() as f64;
    for name in ["case_1", "case_2a", "case_2b"] {
        let med = res.series(&format!("{name}_median"));
        let decreasing = med.windows(2).all(|w| w[1].1 < w[0].1);
        let last = med.last().unwrap().1;
        res.verdict(
            format!("{name} Bayes factor against the truth vanishes"),
            decreasing && last < -5.0,
            format!("median log BF {last:.3} at n = {top}; decreasing: {decreasing}"),
        );
    }
    let med = res.series("case_2c_median");
    let q25 = res.series("case_2c_q25");
    let q75 = res.series("case_2c_q75");
    if med.len() >= 2 {
        let l = med.len();
        let shift = (med[l - 1].1 - med[l - 2].1).abs();
        let inside = q25[l - 1].1 >= q25[l - 2].1 - 2.0 && q75[l - 1].1 <= q75[l - 2].1 + 2.0;
        res.verdict(
            "case_2c Bayes factor stays bounded",
            shift <= 2.0 && inside,
            format!(
                "median moves {shift:.3} over the last two sizes; quartiles [{:.3}, {:.3}] then [{:.3}, {:.3}]",
                q25[l - 2].1, q75[l - 2].1, q25[l - 1].1, q75[l - 1].1
            ),
        );
    }
    let p95 = res.series("n_r2_block2_p95");
    let (first, last) = (p95[0].1, p95.last().unwrap().1);
    res.verdict(
        "n R^2 of a null block stays bounded",
        last <= 2.0 * first,
        format!("95th percentile {first:.3} at the smallest n, {last:.3} at the largest"),
    );
    if cfg.sample_sizes.len() >= 2 {
        let med = res.series("case_2a_median");
        let ln_n: Vec<f64> = med.iter().map(|(n, _)| n.ln()).collect();
        let vals: Vec<f64> = med.iter().map(|(_, v)| *v).collect();
        let slope = ols_slope(&ln_n, &vals);
        let expected = -0.5 * (SELECTION_CASES[1].1.len() - TRUE_COLUMNS.len()) as f64;
        res.push_with(top, "case_2a_slope", slope, 0.0, "simulation");
        res.verdict(
            "case_2a median falls at the dimension rate",
            (slope - expected).abs() <= 0.2 * expected.abs(),
            format!("slope {slope:.4} per unit ln n against {expected}"),
        );
    }
    Ok(res)
}

/// Settings of the prediction study: two blocks of two orthogonalized
/// predictors, both active, averaged over block subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionConfig {
    pub a: f64,
    pub sample_sizes: Vec<usize>,
    pub reps: usize,
    pub alpha: f64,
    pub beta: [f64; 4],
    pub sigma: f64,
    /// Prediction point in the coordinates of the orthogonalized design.
    pub x_star: [f64; 4],
    pub seed: u64,
    pub budget: usize,
}

impl Default for PredictionConfig {
    fn default() -> Self {
        PredictionConfig {
            a: 3.0,
            sample_sizes: vec![100, 400, 1600],
            reps: 200,
            alpha: 1.0,
            beta: [1.0, -0.5, 0.5, 0.25],
            sigma: 1.0,
            x_star: [1.0, 0.5, -1.0, 0.5],
            seed: 20240518,
            budget: 5_000_000,
        }
    }
}

/// Absolute error of the model-averaged prediction of `E[y | x*]` in one
/// replicate.
pub fn prediction_replicate(cfg: &PredictionConfig, rep: usize, j: usize) -> Result<f64> {
    let n = cfg.sample_sizes[j];
    let mut rng = replicate_rng(cfg.seed, rep, j);
    let design = random_orthogonal_design(&mut rng, n, &[2, 2])?;
    let x = design.x();
    let y = DVector::from_fn(n, |i, _| {
        let mut m = cfg.alpha;
        for (c, b) in cfg.beta.iter().enumerate() {
            m += b * x[(i, c)];
        }
        m + cfg.sigma * rng.sample::<f64, _>(StandardNormal)
    });
    let design = design.with_response(&y)?;
    let (post, fits) = select_models(
        &design,
        &PriorSpec::BlockHyperG { a: cfg.a },
        EnumerationMode::BlockSubsets,
        &ModelPrior::Uniform,
        &IntegrationOptions::default(),
    )?;
    let means: Vec<Vec<f64>> = fits.into_iter().map(|f| f.posterior_mean).collect();
    let pred = bma_predict(&cfg.x_star, &post, &means, &[0.0; 4], design.y_mean())?;
    let truth = cfg.alpha + cfg.x_star.iter().zip(&cfg.beta).map(|(a, b)| a * b).sum::<f64>();
    Ok((pred - truth).abs())
}

/// Root mean squared prediction error per sample size. Verdicts: the error
/// shrinks between consecutive sizes by a factor in `[1, 4]`, halves from
/// the smallest to the largest `n`, and sits below
/// `3 σ sqrt((1 + |x*|^2)/n)` at the largest `n`.
pub fn run_prediction_experiment(cfg: &PredictionConfig) -> Result<ExperimentResult> {
    check_budget(cfg.reps, &cfg.sample_sizes, cfg.budget)?;
    if cfg.sample_sizes.iter().any(|&n| n < 10) {
        return Err(Error::PreconditionViolated("sample sizes must be at least 10".into()));
    }
    let mut res = ExperimentResult::new("prediction", cfg.seed);
    for (j, &n) in cfg.sample_sizes.iter().enumerate() {
        let mut sq = 0.0;
        for rep in 0..cfg.reps {
            sq += prediction_replicate(cfg, rep, j)?.powi(2);
        }
        let rmse = (sq / cfg.reps as f64).sqrt();
        res.push_with(n as f64, "rmse", rmse, rmse / (2.0 * cfg.reps as f64).sqrt(), "simulation");
    }
    let s = res.series("rmse");
    let ratios: Vec<f64> = s.windows(2).map(|w| w[0].1 / w[1].1).collect();
    res.verdict(
        "prediction error decreases with n",
        ratios.iter().all(|r| (1.0..=4.0).contains(r)),
        format!("consecutive error ratios {ratios:.3?}"),
    );
    let (first, last) = (s[0].1, s.last().unwrap().1);
    res.verdict(
        "prediction error at least halves",
        last < 0.5 * first,
        format!("RMSE {first:.4} at the smallest n, {last:.4} at the largest"),
    );
    let n_max = s.last().unwrap().0;
    let norm2: f64 = cfg.x_star.iter().map(|v| v * v).sum();
    let bound = 3.0 * cfg.sigma * ((1.0 + norm2) / n_max).sqrt();
    res.verdict(
        "prediction error is of order n^{-1/2}",
        last < bound,
        format!("RMSE {last:.4} against {bound:.4} at n = {n_max}"),
    );
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn slope_of_a_line() {
        let x = [1.0, 2.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 1.5 * v).collect();
        assert!((ols_slope(&x, &y) + 1.5).abs() < 1e-14);
    }

    #[test]
    fn budget_guard_fires() {
        let cfg = SelectionConfig { budget: 1000, ..Default::default() };
        assert_eq!(run_selection_experiment(&cfg).unwrap_err().tag(), "SimulationBudgetExceeded");
    }

    #[test]
    fn replicates_are_reproducible() {
        let cfg = SelectionConfig { sample_sizes: vec![40], reps: 2, ..Default::default() };
        let a = selection_replicate(&cfg, 1, 0).unwrap();
        let b = selection_replicate(&cfg, 1, 0).unwrap();
        assert_eq!(a, b);
        let c = selection_replicate(&cfg, 0, 0).unwrap();
        assert_ne!(a.0, c.0);
    }
}
