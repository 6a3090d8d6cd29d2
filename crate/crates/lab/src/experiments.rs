//! Experiments along a fixed-design sequence: shrinkage toward least
//! squares, Bayes factors of nested models, information consistency and
//! limits of the `σ^2` posterior.

use blockg_core::block::{
    bf_block_hyper_g, clp_lower_bound, shrinkage_bounds, sigma2_density_limit_block,
    sigma2_mean_bound_block, sigma2_posterior_block, BlockHyperGPrior, IntegrationMethod,
    IntegrationOptions, Sigma2Density,
};
use blockg_core::design::{BlockPartition, CenteredDesign, FitSummary};
use blockg_core::gprior::{
    ln_bf_fixed_g, ln_bf_hyper_g, shrinkage_hyper_g, sigma2_limit_hyper_g, FixedGPrior,
    HyperGPrior,
};
use blockg_core::models::PriorSpec;
use blockg_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::result::ExperimentResult;
use crate::sequence::{make_sequence, SequenceElement, SequenceSpec};

fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::PreconditionViolated(msg.into()))
}

/// Fit of the model made of the listed blocks, with the induced partition.
pub fn blocks_fit(design: &CenteredDesign, blocks: &[usize]) -> Result<Option<FitSummary>> {
    let member = design.partition().membership();
    let gamma: Vec<bool> = member.iter().map(|b| blocks.contains(b)).collect();
    match design.subdesign(&gamma)? {
        None => Ok(None),
        Some(sub) => blockg_core::design::fit_least_squares(&sub).map(Some),
    }
}

/// The same fit with every predictor in one block.
pub fn as_single_block(fit: &FitSummary) -> Result<FitSummary> {
    let mut one = FitSummary::from_sums(fit.n, &[fit.p], &[fit.tss - fit.rss], fit.rss)?;
    one.alpha_hat = fit.alpha_hat;
    one.beta_hat_ls = fit.beta_hat_ls.clone();
    one.sigma2_hat = fit.sigma2_hat;
    one.r2 = fit.r2;
    one.r2_blocks = vec![fit.r2];
    Ok(one)
}

fn block_prior(a: f64, fit: &FitSummary) -> Result<BlockHyperGPrior> {
    BlockHyperGPrior::new(a, BlockPartition::contiguous(&fit.p_blocks)?)
}

fn hyper_a(spec: &SequenceSpec, what: &str) -> Result<f64> {
    match spec.prior_a() {
        Some(a) => Ok(a),
        None => precondition(format!("{what} needs a hyper-g or block hyper-g prior")),
    }
}

/// Least-squares-like behaviour of the shrinkage as block 1 grows.
///
/// Rows per scale: `one_minus_r2`, the hyper-g shrinkage and relative
/// distance `‖β̂ - β̂_LS‖/‖β̂_LS‖ = 1 - t` when `n >= a+p-1`, and under a
/// block prior the block means `t_i` with their brackets
/// `[2/(a+p_i), S(κ_i)]`.
pub fn run_els_experiment(spec: &SequenceSpec) -> Result<ExperimentResult> {
    spec.require_increasing()?;
    let a = hyper_a(spec, "the least-squares limit")?;
    let (n, p) = (spec.n() as f64, spec.p() as f64);
    let p1 = spec.sizes()[0] as f64;
    let hyper_ok = n >= a + p - 1.0;
    let block_prior_used = matches!(spec.prior, PriorSpec::BlockHyperG { .. });
    if !block_prior_used && !hyper_ok {
        return precondition(format!("hyper-g limit needs n >= a+p-1 = {}, got n = {n}", a + p - 1.0));
    }
    if block_prior_used && n < a + p1 - 1.0 {
        return precondition(format!(
            "block limit needs n >= a+p_1-1 = {}, got n = {n}",
            a + p1 - 1.0
        ));
    }
    let seq = make_sequence(spec)?;
    let opts = IntegrationOptions::default();
    let mut res = ExperimentResult::new("els", spec.seed);
    let hg = HyperGPrior::new(a)?;
    for el in &seq {
        let c = el.scale;
        res.push(c, "one_minus_r2", el.fit.one_minus_r2(), 0.0);
        if hyper_ok {
            let t = shrinkage_hyper_g(&hg, &as_single_block(&el.fit)?)?;
            res.push(c, "hyper_g_shrinkage", t, 0.0);
            res.push(c, "hyper_g_rel_distance", 1.0 - t, 0.0);
        }
        if block_prior_used {
            let prior = block_prior(a, &el.fit)?;
            let post = bf_block_hyper_g(&prior, &el.fit, &opts)?;
            let brackets = shrinkage_bounds(&prior, &el.fit)?;
            let beta = &el.fit.beta_hat_ls;
            let mut num = 0.0;
            for (i, block) in el.fit.partition.blocks().iter().enumerate() {
                for &j in block {
                    num += ((1.0 - post.t_mean[i]) * beta[j]).powi(2);
                }
            }
            let den: f64 = beta.iter().map(|b| b * b).sum();
            res.push_with(c, "block_rel_distance", (num / den).sqrt(), post.error_estimate, post.method.as_str());
            for (i, (t, br)) in post.t_mean.iter().zip(&brackets).enumerate() {
                res.push_with(c, format!("block_t_{}", i + 1), *t, post.error_estimate, post.method.as_str());
                res.push(c, format!("block_t_{}_lower", i + 1), br.lower, 0.0);
                res.push(c, format!("block_t_{}_upper", i + 1), br.upper, 0.0);
            }
        }
    }
    verdict_monotone_r2(&mut res);
    let top = *spec.schedule.last().unwrap();
    if hyper_ok {
        let at = spec.schedule.iter().cloned().find(|&c| c >= 1e6).unwrap_or(top);
        let d = res.value_at("hyper_g_rel_distance", at).unwrap();
        res.verdict(
            "hyper-g estimate approaches least squares",
            d < 1e-3,
            format!("relative distance {d:.3e} at scale {at:e} (threshold 1e-3)"),
        );
    }
    if block_prior_used {
        let t1 = res.value_at("block_t_1", top).unwrap();
        res.verdict(
            "block 1 shrinkage tends to one",
            t1 >= 0.999,
            format!("E[t_1|y] = {t1:.6} at scale {top:e}"),
        );
        let k = spec.sizes().len();
        for i in 2..=k {
            let t = res.series(&format!("block_t_{i}"));
            let lo = res.series(&format!("block_t_{i}_lower"));
            let hi = res.series(&format!("block_t_{i}_upper"));
            let mut worst = String::from("inside bracket at every scale");
            let mut ok = true;
            for ((&(c, v), &(_, l)), &(_, u)) in t.iter().zip(&lo).zip(&hi) {
                if v < l - 1e-3 || v > u || u >= 1.0 {
                    ok = false;
                    worst = format!("E[t_{i}|y] = {v:.6} outside [{:.6}, {u:.6}] at scale {c:e}", l - 1e-3);
                    break;
                }
            }
            res.verdict(format!("block {i} shrinkage stays below one"), ok, worst);
        }
    }
    Ok(res)
}

fn verdict_monotone_r2(res: &mut ExperimentResult) {
    let s = res.series("one_minus_r2");
    let ok = s.windows(2).all(|w| w[1].1 < w[0].1);
    res.verdict("R^2 increases along the sequence", ok, format!("{} scales checked", s.len()));
}

/// Two models given by block indices of the sequence design; `small` must
/// contain block 1 and `large` must add at most one block to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedPair {
    pub small: Vec<usize>,
    pub large: Vec<usize>,
}

impl NestedPair {
    /// Block 1 alone against blocks 1 and 2.
    pub fn first_two() -> Self {
        NestedPair { small: vec![0], large: vec![0, 1] }
    }
}

/// Bayes factor of the larger model against the smaller one as block 1
/// grows, under the hyper-g prior (each model one block) and the block
/// hyper-g prior (each block separate).
///
/// With `n >= a+p_1-1` the hyper-g value must fall monotonically past
/// scale 100 and below `e^{-10}` at the top scale while the block value
/// stays above `(a-2)/(a+p_2-2)`. With `n < a+p_1-1` the hyper-g value
/// must settle at `(a+p_1-n-1)/(a+p-n-1)`.
pub fn run_clp_experiment(spec: &SequenceSpec, pair: &NestedPair) -> Result<ExperimentResult> {
    spec.require_increasing()?;
    let a = hyper_a(spec, "the nested-model comparison")?;
    let sizes = spec.sizes();
    let k = sizes.len();
    let valid = pair.small.contains(&0)
        && pair.small.iter().all(|b| pair.large.contains(b) && *b < k)
        && pair.large.iter().all(|&b| b < k);
    if !valid {
        return precondition("the pair must be nested, contain block 1 and use existing blocks");
    }
    let added: Vec<usize> =
        pair.large.iter().cloned().filter(|b| !pair.small.contains(b)).collect();
    if added.len() > 1 {
        return precondition("the larger model may add at most one block");
    }
    let n = spec.n() as f64;
    let p1 = sizes[0] as f64;
    let p_small: usize = pair.small.iter().map(|&b| sizes[b]).sum();
    let p_large: usize = pair.large.iter().map(|&b| sizes[b]).sum();
    let seq = make_sequence(spec)?;
    if !seq[0].fit.block_orthogonal {
        return precondition("the design must be block orthogonal");
    }
    let mut res = ExperimentResult::new("clp", spec.seed);
    if added.is_empty() {
        for el in &seq {
            res.push(el.scale, "hyper_g_log_bf", 0.0, 0.0);
            res.push(el.scale, "block_log_bf", 0.0, 0.0);
        }
        res.verdict("identical models have Bayes factor one", true, "log BF = 0 at every scale");
        return Ok(res);
    }
    let hg = HyperGPrior::new(a)?;
    let opts = IntegrationOptions::default();
    let vanishing = n >= a + p1 - 1.0;
    let block_ok = spec.n() > p_large + 1;
    for el in &seq {
        let c = el.scale;
        let fs = blocks_fit(&el.design, &pair.small)?.unwrap();
        let fl = blocks_fit(&el.design, &pair.large)?.unwrap();
        let lh = ln_bf_hyper_g(&hg, &as_single_block(&fl)?)? - ln_bf_hyper_g(&hg, &as_single_block(&fs)?)?;
        res.push(c, "hyper_g_log_bf", lh, 0.0);
        res.push(c, "hyper_g_bf", lh.exp(), 0.0);
        if block_ok {
            let pl = bf_block_hyper_g(&block_prior(a, &fl)?, &fl, &opts)?;
            let ps = bf_block_hyper_g(&block_prior(a, &fs)?, &fs, &opts)?;
            let lb = pl.log_bf_null - ps.log_bf_null;
            let err = pl.error_estimate + ps.error_estimate;
            let method = combined_method(pl.method, ps.method);
            res.push_with(c, "block_log_bf", lb, err, &method);
            res.push_with(c, "block_bf", lb.exp(), err * lb.exp(), &method);
        }
    }
    let top = *spec.schedule.last().unwrap();
    if vanishing {
        let s = res.series("hyper_g_log_bf");
        let tail: Vec<&(f64, f64)> = s.iter().filter(|(c, _)| *c >= 100.0).collect();
        let monotone = tail.windows(2).all(|w| w[1].1 < w[0].1);
        let last = s.last().unwrap().1;
        res.verdict(
            "hyper-g Bayes factor vanishes",
            monotone && last < -10.0,
            format!(
                "log BF {last:.3} at scale {top:e}; decreasing past scale 100: {monotone}"
            ),
        );
        if block_ok {
            let floor = clp_lower_bound(a, sizes[added[0]])?;
            let b = res.series("block_bf");
            let min = b.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
            res.push(top, "block_bf_floor", floor, 0.0);
            res.verdict(
                "block hyper-g Bayes factor stays above its floor",
                min >= floor - 1e-4,
                format!("minimum BF {min:.6} against floor {floor:.6}"),
            );
        }
    } else {
        let plateau = (a + p1 - n - 1.0) / (a + p_large as f64 - n - 1.0);
        let _ = p_small;
        let last = res.series("hyper_g_bf").last().unwrap().1;
        res.push(top, "hyper_g_bf_plateau", plateau, 0.0);
        res.verdict(
            "hyper-g Bayes factor settles at the small-n plateau",
            (last - plateau).abs() < 1e-4,
            format!("BF {last:.8} at scale {top:e} against plateau {plateau:.8}"),
        );
    }
    Ok(res)
}

/// How the coefficients grow in an information-consistency run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfoRegime {
    /// Every block is scaled, so `R^2 -> 1` with block proportions fixed;
    /// divergence needs `n > k(a-2)+p+1` under the block prior.
    TotalR2,
    /// Block 1 alone is scaled, so `R_1^2 -> 1`; divergence needs
    /// `n >= a+p_1-1` under the block prior.
    BlockR2,
}

/// `ln BF(M : M_0)` of the full model as the coefficients grow.
///
/// When the applicable sample-size condition holds the value must rise by
/// more than 5 between the middle and the top scale; otherwise it must
/// change by less than 0.5. Under a fixed g it must settle at
/// `((n-p-1)/2) ln(1+g)`.
pub fn run_info_consistency(spec: &SequenceSpec, regime: InfoRegime) -> Result<ExperimentResult> {
    spec.require_increasing()?;
    if spec.schedule.len() < 3 {
        return precondition("at least three scales are needed");
    }
    let mut spec = spec.clone();
    let k = spec.sizes().len();
    spec.scaled_blocks = match regime {
        InfoRegime::TotalR2 => (0..k).collect(),
        InfoRegime::BlockR2 => vec![0],
    };
    let seq = make_sequence(&spec)?;
    let (n, p) = (spec.n() as f64, spec.p() as f64);
    let p1 = spec.sizes()[0] as f64;
    let opts = IntegrationOptions::default();
    let mut res = ExperimentResult::new("info", spec.seed);
    let (expect, condition) = match spec.prior {
        PriorSpec::FixedG { .. } => (None, "fixed g".to_string()),
        PriorSpec::HyperG { a } => (Some(n >= a + p - 1.0), format!("n >= a+p-1 = {}", a + p - 1.0)),
        PriorSpec::BlockHyperG { a } => match regime {
            InfoRegime::TotalR2 => {
                let t = k as f64 * (a - 2.0) + p + 1.0;
                (Some(n > t), format!("n > k(a-2)+p+1 = {t}"))
            }
            InfoRegime::BlockR2 => {
                (Some(n >= a + p1 - 1.0), format!("n >= a+p_1-1 = {}", a + p1 - 1.0))
            }
        },
    };
    for el in &seq {
        let (lbf, err, method) = ln_bf_full(&spec.prior, &el.fit, &opts)?;
        res.push_with(el.scale, "log_bf_null", lbf, err, method.as_str());
    }
    verdict_monotone_r2_from(&mut res, &seq);
    let s = res.series("log_bf_null");
    let mid = s[s.len() / 2];
    let top = *s.last().unwrap();
    match (spec.prior, expect) {
        (PriorSpec::FixedG { g }, _) => {
            let plateau = 0.5 * (n - p - 1.0) * g.ln_1p();
            res.push(top.0, "log_bf_plateau", plateau, 0.0);
            res.verdict(
                "fixed-g Bayes factor stays bounded",
                (top.1 - plateau).abs() <= 1e-6 * plateau.abs().max(1.0),
                format!("log BF {:.9} at scale {:e}, plateau {plateau:.9}", top.1, top.0),
            );
        }
        (_, Some(true)) => {
            let rise = top.1 - mid.1;
            res.verdict(
                "Bayes factor diverges",
                rise > 5.0 || top.1 == f64::INFINITY,
                format!("{condition} holds; log BF rises by {rise:.3} from scale {:e} to {:e}", mid.0, top.0),
            );
        }
        (_, _) => {
            let change = (top.1 - mid.1).abs();
            res.verdict(
                "Bayes factor stays bounded",
                top.1.is_finite() && change < 0.5,
                format!("{condition} fails; log BF changes by {change:.3e} from scale {:e} to {:e}", mid.0, top.0),
            );
        }
    }
    Ok(res)
}

fn verdict_monotone_r2_from(res: &mut ExperimentResult, seq: &[SequenceElement]) {
    for el in seq {
        res.push(el.scale, "one_minus_r2", el.fit.one_minus_r2(), 0.0);
    }
    verdict_monotone_r2(res);
}

fn ln_bf_full(
    prior: &PriorSpec,
    fit: &FitSummary,
    opts: &IntegrationOptions,
) -> Result<(f64, f64, IntegrationMethod)> {
    let closed = IntegrationMethod::ClosedForm;
    match *prior {
        PriorSpec::FixedG { g } => {
            Ok((ln_bf_fixed_g(&FixedGPrior::new(g)?, &as_single_block(fit)?)?, 0.0, closed))
        }
        PriorSpec::HyperG { a } => {
            Ok((ln_bf_hyper_g(&HyperGPrior::new(a)?, &as_single_block(fit)?)?, 0.0, closed))
        }
        PriorSpec::BlockHyperG { a } => {
            let post = bf_block_hyper_g(&block_prior(a, fit)?, fit, opts)?;
            Ok((post.log_bf_null, post.error_estimate, post.method))
        }
    }
}

fn combined_method(a: IntegrationMethod, b: IntegrationMethod) -> String {
    if a == b {
        a.as_str().to_string()
    } else {
        format!("{}+{}", a.as_str(), b.as_str())
    }
}

/// Total variation distance `½ ∫ |p - q|` between two densities on
/// `(0, ∞)` given by log densities, by the trapezoid rule on a uniform grid
/// in `ln x` over `[lo, hi]`.
pub fn total_variation<F, G>(ln_p: F, ln_q: G, lo: f64, hi: f64, points: usize) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let h = (hi - lo) / (points - 1) as f64;
    let mut acc = 0.0;
    for i in 0..points {
        let w = lo + h * i as f64;
        let x = w.exp();
        let d = ((ln_p(x) + w).exp() - (ln_q(x) + w).exp()).abs();
        acc += if i == 0 || i == points - 1 { 0.5 * d } else { d };
    }
    0.5 * acc * h
}

fn window(a: &Sigma2Density, b: (f64, f64)) -> (f64, f64) {
    let (ca, sa) = a.log_scale_window();
    let (cb, sb) = b;
    ((ca - 20.0 * sa).min(cb - 20.0 * sb), (ca + 20.0 * sa).max(cb + 20.0 * sb))
}

/// Distance of the exact `σ^2` posteriors from their limits as block 1
/// grows: the hyper-g posterior (all predictors in one block) against its
/// inverse gamma limit, and the block posterior against its limit density.
/// The block posterior mean is compared with its upper bound at every
/// scale.
pub fn sigma2_limit_check(spec: &SequenceSpec) -> Result<ExperimentResult> {
    spec.require_increasing()?;
    let a = hyper_a(spec, "the σ^2 limit")?;
    let sizes = spec.sizes();
    let (n, p, k) = (spec.n() as f64, spec.p() as f64, sizes.len() as f64);
    let p1 = sizes[0] as f64;
    if !(n > a + p - 1.0) {
        return precondition(format!("inverse gamma limit needs n > a+p-1 = {}", a + p - 1.0));
    }
    if !(n > k * (a - 2.0) + p + 1.0) {
        return precondition(format!("block limit needs n > k(a-2)+p+1 = {}", k * (a - 2.0) + p + 1.0));
    }
    if !(n > a + p1 + 1.0) {
        return precondition(format!("mean bound needs n > a+p_1+1 = {}", a + p1 + 1.0));
    }
    let seq = make_sequence(spec)?;
    let hg = HyperGPrior::new(a)?;
    let mut res = ExperimentResult::new("sigma2", spec.seed);
    let points = 40_001;
    for el in &seq {
        let c = el.scale;
        let single = as_single_block(&el.fit)?;
        let single_prior = BlockHyperGPrior::new(a, BlockPartition::single(spec.p())?)?;
        let exact_hg = sigma2_posterior_block(&single_prior, &single)?;
        let ig = sigma2_limit_hyper_g(&hg, spec.n(), spec.p(), el.fit.sigma2_hat)?;
        let ig_centre = (ig.rate / (ig.shape + 1.0)).ln();
        let (lo, hi) = window(&exact_hg, (ig_centre, 1.0 / ig.shape.sqrt()));
        let tv = total_variation(|x| exact_hg.ln_pdf(x).unwrap(), |x| ig.ln_pdf(x), lo, hi, points);
        res.push_with(c, "tv_hyper_g", tv, 0.0, "quadrature");

        let prior = block_prior(a, &el.fit)?;
        let exact = sigma2_posterior_block(&prior, &el.fit)?;
        let limit = sigma2_density_limit_block(&prior, &el.fit)?;
        let (lo, hi) = window(&exact, limit.log_scale_window());
        let tv = total_variation(
            |x| exact.ln_pdf(x).unwrap(),
            |x| limit.ln_pdf(x).unwrap(),
            lo,
            hi,
            points,
        );
        res.push_with(c, "tv_block", tv, 0.0, "quadrature");
        res.push_with(c, "block_sigma2_mean", exact.mean(), 0.0, "quadrature");
        res.push_with(c, "block_sigma2_limit_mean", limit.mean(), 0.0, "quadrature");
        res.push(c, "block_sigma2_mean_bound", sigma2_mean_bound_block(&prior, &el.fit)?, 0.0);
    }
    let top = *spec.schedule.last().unwrap();
    for (stat, claim) in [
        ("tv_hyper_g", "hyper-g σ^2 posterior reaches its inverse gamma limit"),
        ("tv_block", "block σ^2 posterior reaches its limit density"),
    ] {
        let tv = res.value_at(stat, top).unwrap();
        res.verdict(claim, tv < 0.01, format!("total variation {tv:.3e} at scale {top:e}"));
    }
    let means = res.series("block_sigma2_mean");
    let limit_means = res.series("block_sigma2_limit_mean");
    let bounds = res.series("block_sigma2_mean_bound");
    let mut ok = true;
    let mut detail = format!("{} scales checked", means.len());
    for ((&(c, m), &(_, lm)), &(_, b)) in means.iter().zip(&limit_means).zip(&bounds) {
        if m > b || lm > b {
            ok = false;
            detail = format!("mean {m:.6} (limit {lm:.6}) exceeds bound {b:.6} at scale {c:e}");
            break;
        }
    }
    res.verdict("block σ^2 posterior mean respects its bound", ok, detail);
    Ok(res)
}
