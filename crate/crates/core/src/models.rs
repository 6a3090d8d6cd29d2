//! Model space enumeration, posterior model probabilities and Bayesian
//! model averaged prediction.

use serde::{Deserialize, Serialize, Serializer};

use crate::block::{
    posterior_from_kernel, scale_by_blocks, IntegrationMethod, IntegrationOptions, Kernel,
};
use crate::design::{fit_least_squares, BlockPartition, CenteredDesign, FitSummary};
use crate::error::{domain, Error, Result};
use crate::gprior::{
    ln_bf_fixed_g, ln_bf_hyper_g, shrinkage_fixed_g, shrinkage_hyper_g, FixedGPrior, HyperGPrior,
};
use crate::quad::log_sum_exp;

/// Largest predictor count accepted for all-subsets enumeration.
pub const MAX_ALL_SUBSETS_P: usize = 25;

/// Coefficient prior applied to every candidate model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PriorSpec {
    FixedG { g: f64 },
    HyperG { a: f64 },
    BlockHyperG { a: f64 },
}

impl PriorSpec {
    /// Check the hyperparameter range.
    pub fn validate(&self) -> Result<()> {
        match *self {
            PriorSpec::FixedG { g } => FixedGPrior::new(g).map(|_| ()),
            PriorSpec::HyperG { a } | PriorSpec::BlockHyperG { a } => {
                HyperGPrior::new(a).map(|_| ())
            }
        }
    }
}

/// Which subsets of the predictors form the model space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnumerationMode {
    AllSubsets,
    BlockSubsets,
}

/// One candidate model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    /// Inclusion indicator per predictor.
    pub gamma: Vec<bool>,
    /// Partition of the included predictors, indexed within the model;
    /// `None` for the null model.
    pub induced_partition: Option<BlockPartition>,
    /// Original indices of the blocks that contribute predictors.
    pub blocks_included: Vec<usize>,
}

impl ModelSpec {
    pub fn size(&self) -> usize {
        self.gamma.iter().filter(|&&g| g).count()
    }

    pub fn is_null(&self) -> bool {
        self.size() == 0
    }

    /// Inclusion vector as a `0`/`1` string, first predictor first.
    pub fn gamma_bits(&self) -> String {
        self.gamma.iter().map(|&g| if g { '1' } else { '0' }).collect()
    }

    /// Build from an inclusion vector and the full partition.
    pub fn from_gamma(gamma: Vec<bool>, partition: &BlockPartition) -> Result<Self> {
        if gamma.len() != partition.p() {
            return Err(Error::DimensionMismatch(format!(
                "inclusion vector has length {}, partition covers {}",
                gamma.len(),
                partition.p()
            )));
        }
        let mut pos = vec![usize::MAX; gamma.len()];
        let mut next = 0;
        for (j, &g) in gamma.iter().enumerate() {
            if g {
                pos[j] = next;
                next += 1;
            }
        }
        let mut blocks = Vec::new();
        let mut included = Vec::new();
        for (i, b) in partition.blocks().iter().enumerate() {
            let sub: Vec<usize> = b.iter().filter(|&&j| gamma[j]).map(|&j| pos[j]).collect();
            if !sub.is_empty() {
                blocks.push(sub);
                included.push(i);
            }
        }
        let induced_partition =
            if blocks.is_empty() { None } else { Some(BlockPartition::new(blocks)?) };
        Ok(ModelSpec { gamma, induced_partition, blocks_included: included })
    }
}

/// All models of the chosen space, in binary counting order (bit `j` of the
/// model index is predictor `j`, or block `j` in block-subsets mode).
pub fn enumerate_models(partition: &BlockPartition, mode: EnumerationMode) -> Result<Vec<ModelSpec>> {
    let p = partition.p();
    match mode {
        EnumerationMode::AllSubsets => {
            if p > MAX_ALL_SUBSETS_P {
                return Err(Error::BudgetExceeded(format!(
                    "all-subsets enumeration of {p} predictors exceeds the limit of {MAX_ALL_SUBSETS_P}"
                )));
            }
            (0u64..(1u64 << p))
                .map(|id| {
                    let gamma = (0..p).map(|j| (id >> j) & 1 == 1).collect();
                    ModelSpec::from_gamma(gamma, partition)
                })
                .collect()
        }
        EnumerationMode::BlockSubsets => {
            let k = partition.k();
            if k > 30 {
                return Err(Error::BudgetExceeded(format!(
                    "block-subsets enumeration of {k} blocks is too large"
                )));
            }
            (0u64..(1u64 << k))
                .map(|id| {
                    let mut gamma = vec![false; p];
                    for (i, b) in partition.blocks().iter().enumerate() {
                        if (id >> i) & 1 == 1 {
                            for &j in b {
                                gamma[j] = true;
                            }
                        }
                    }
                    ModelSpec::from_gamma(gamma, partition)
                })
                .collect()
        }
    }
}

/// Prior over the model space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelPrior {
    Uniform,
    Weights(Vec<f64>),
}

/// Posterior over the enumerated models.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelPosterior {
    pub models: Vec<ModelSpec>,
    pub log_bf_null: Vec<f64>,
    pub prior_prob: Vec<f64>,
    pub post_prob: Vec<f64>,
}

/// One serialized row of a model posterior.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRow {
    pub model_id: usize,
    pub gamma_bits: String,
    #[serde(serialize_with = "serialize_extended_f64")]
    pub log_bf_null: f64,
    pub post_prob: f64,
}

/// Writes non-finite values as the strings `"+inf"`, `"-inf"` or `"nan"`.
pub fn serialize_extended_f64<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("+inf")
    } else {
        s.serialize_str("-inf")
    }
}

impl ModelPosterior {
    /// Rows in enumeration order.
    pub fn rows(&self) -> Vec<ModelRow> {
        self.models
            .iter()
            .enumerate()
            .map(|(i, m)| ModelRow {
                model_id: i,
                gamma_bits: m.gamma_bits(),
                log_bf_null: self.log_bf_null[i],
                post_prob: self.post_prob[i],
            })
            .collect()
    }

    /// Rows sorted by decreasing posterior probability, ties by model id.
    pub fn rows_by_probability(&self) -> Vec<ModelRow> {
        let mut rows = self.rows();
        rows.sort_by(|a, b| {
            b.post_prob.partial_cmp(&a.post_prob).unwrap_or(std::cmp::Ordering::Equal).then(a.model_id.cmp(&b.model_id))
        });
        rows
    }

    /// Index of the most probable model (lowest id among ties).
    pub fn map_index(&self) -> usize {
        self.rows_by_probability()[0].model_id
    }
}

/// Normalize `prior_i · BF_i` in log-sum-exp arithmetic. Models with an
/// infinite Bayes factor share all the mass in proportion to their prior.
pub fn posterior_model_probs(
    models: Vec<ModelSpec>,
    log_bf_null: Vec<f64>,
    prior: &ModelPrior,
) -> Result<ModelPosterior> {
    let n = log_bf_null.len();
    if n == 0 {
        return Err(Error::EmptyModelList);
    }
    if models.len() != n {
        return Err(Error::DimensionMismatch("one Bayes factor per model required".into()));
    }
    if log_bf_null.iter().any(|x| x.is_nan()) {
        return domain("log Bayes factors must not be NaN");
    }
    let prior_prob: Vec<f64> = match prior {
        ModelPrior::Uniform => vec![1.0 / n as f64; n],
        ModelPrior::Weights(w) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch("one prior weight per model required".into()));
            }
            if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return domain("prior weights must be finite and nonnegative");
            }
            let s: f64 = w.iter().sum();
            if !(s > 0.0) {
                return domain("prior weights must not all be zero");
            }
            w.iter().map(|x| x / s).collect()
        }
    };
    let sentinel: Vec<bool> =
        log_bf_null.iter().zip(&prior_prob).map(|(&l, &p)| l == f64::INFINITY && p > 0.0).collect();
    let post_prob = if sentinel.iter().any(|&s| s) {
        let total: f64 = prior_prob.iter().zip(&sentinel).filter(|(_, &s)| s).map(|(p, _)| p).sum();
        prior_prob.iter().zip(&sentinel).map(|(p, &s)| if s { p / total } else { 0.0 }).collect()
    } else {
        let terms: Vec<f64> =
            log_bf_null.iter().zip(&prior_prob).map(|(&l, &p)| l + p.ln()).collect();
        let z = log_sum_exp(&terms);
        if !z.is_finite() {
            return domain("every model has zero posterior weight");
        }
        let raw: Vec<f64> = terms.iter().map(|t| (t - z).exp()).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|x| x / s).collect()
    };
    Ok(ModelPosterior { models, log_bf_null, prior_prob, post_prob })
}

/// Inference for one candidate model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelFit {
    #[serde(serialize_with = "serialize_extended_f64")]
    pub log_bf_null: f64,
    pub method: IntegrationMethod,
    /// Posterior mean shrinkage per block of the model.
    pub shrinkage: Vec<f64>,
    /// Posterior mean of all `p` slopes, zero for excluded predictors.
    pub posterior_mean: Vec<f64>,
    /// Least-squares summary of the model; `None` for the null model.
    pub fit: Option<FitSummary>,
}

/// Bayes factor, shrinkage and posterior mean of one model.
pub fn evaluate_model(
    design: &CenteredDesign,
    model: &ModelSpec,
    prior: &PriorSpec,
    opts: &IntegrationOptions,
) -> Result<ModelFit> {
    let p = design.p();
    let sub = match design.subdesign(&model.gamma)? {
        None => {
            return Ok(ModelFit {
                log_bf_null: 0.0,
                method: IntegrationMethod::ClosedForm,
                shrinkage: Vec::new(),
                posterior_mean: vec![0.0; p],
                fit: None,
            })
        }
        Some(s) => s,
    };
    let fit = fit_least_squares(&sub)?;
    let (log_bf, method, shrinkage, mean_sub) = match *prior {
        PriorSpec::FixedG { g } => {
            let pr = FixedGPrior::new(g)?;
            let s = shrinkage_fixed_g(&pr);
            let mean = fit.beta_hat_ls.iter().map(|b| s * b).collect();
            (ln_bf_fixed_g(&pr, &fit)?, IntegrationMethod::ClosedForm, vec![s], mean)
        }
        PriorSpec::HyperG { a } => {
            let pr = HyperGPrior::new(a)?;
            let s = shrinkage_hyper_g(&pr, &fit)?;
            let mean = fit.beta_hat_ls.iter().map(|b| s * b).collect();
            (ln_bf_hyper_g(&pr, &fit)?, IntegrationMethod::ClosedForm, vec![s], mean)
        }
        PriorSpec::BlockHyperG { a } => {
            HyperGPrior::new(a)?;
            let kern = Kernel::from_fit(a, &fit)?;
            let post = posterior_from_kernel(&kern, opts)?;
            let mean = scale_by_blocks(&fit, &post.t_mean);
            (post.log_bf_null, post.method, post.t_mean, mean)
        }
    };
    let mut posterior_mean = vec![0.0; p];
    let mut it = mean_sub.into_iter();
    for (j, &g) in model.gamma.iter().enumerate() {
        if g {
            posterior_mean[j] = it.next().unwrap_or(0.0);
        }
    }
    Ok(ModelFit { log_bf_null: log_bf, method, shrinkage, posterior_mean, fit: Some(fit) })
}

/// Reject prior and enumeration combinations whose Bayes factors are not
/// comparable.
pub fn check_mode(prior: &PriorSpec, mode: EnumerationMode) -> Result<()> {
    match (prior, mode) {
        (PriorSpec::BlockHyperG { .. }, EnumerationMode::AllSubsets) => {
            domain("the block hyper-g prior is used with block-subsets enumeration only")
        }
        (PriorSpec::HyperG { .. }, EnumerationMode::BlockSubsets) => {
            domain("block-subsets enumeration uses the block hyper-g prior")
        }
        _ => Ok(()),
    }
}

/// Evaluate every model of the space and normalize.
pub fn select_models(
    design: &CenteredDesign,
    prior: &PriorSpec,
    mode: EnumerationMode,
    model_prior: &ModelPrior,
    opts: &IntegrationOptions,
) -> Result<(ModelPosterior, Vec<ModelFit>)> {
    prior.validate()?;
    check_mode(prior, mode)?;
    let models = enumerate_models(design.partition(), mode)?;
    let fits: Vec<ModelFit> =
        models.iter().map(|m| evaluate_model(design, m, prior, opts)).collect::<Result<_>>()?;
    let lbf = fits.iter().map(|f| f.log_bf_null).collect();
    let post = posterior_model_probs(models, lbf, model_prior)?;
    Ok((post, fits))
}

/// Model-averaged prediction at a raw covariate vector:
/// `ȳ + Σ_γ π(γ|y) (x* - x̄)^T E[β | y, γ]`.
pub fn bma_predict(
    x_star: &[f64],
    posterior: &ModelPosterior,
    posterior_means: &[Vec<f64>],
    x_means: &[f64],
    y_mean: f64,
) -> Result<f64> {
    let p = x_means.len();
    if x_star.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "prediction point has {} entries, design has {p} predictors",
            x_star.len()
        )));
    }
    if posterior_means.len() != posterior.post_prob.len()
        || posterior_means.iter().any(|m| m.len() != p)
    {
        return Err(Error::DimensionMismatch("one length-p posterior mean per model".into()));
    }
    let xc: Vec<f64> = x_star.iter().zip(x_means).map(|(x, m)| x - m).collect();
    let mut acc = 0.0;
    for (w, beta) in posterior.post_prob.iter().zip(posterior_means) {
        if *w == 0.0 {
            continue;
        }
        acc += w * xc.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>();
    }
    Ok(y_mean + acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let p3 = BlockPartition::single(3).unwrap();
        assert_eq!(enumerate_models(&p3, EnumerationMode::AllSubsets).unwrap().len(), 8);
        let p22 = BlockPartition::contiguous(&[2, 2]).unwrap();
        let ms = enumerate_models(&p22, EnumerationMode::BlockSubsets).unwrap();
        assert_eq!(ms.len(), 4);
        let sizes: Vec<Vec<usize>> = ms
            .iter()
            .map(|m| m.induced_partition.as_ref().map(|p| p.sizes()).unwrap_or_default())
            .collect();
        assert_eq!(sizes, vec![vec![], vec![2], vec![2], vec![2, 2]]);
        let big = BlockPartition::single(26).unwrap();
        assert_eq!(
            enumerate_models(&big, EnumerationMode::AllSubsets).unwrap_err().tag(),
            "BudgetExceeded"
        );
    }

    fn dummy(n: usize) -> Vec<ModelSpec> {
        let p = BlockPartition::single(1).unwrap();
        (0..n).map(|i| ModelSpec::from_gamma(vec![i % 2 == 1], &p).unwrap()).collect()
    }

    #[test]
    fn probabilities() {
        let post = posterior_model_probs(dummy(4), vec![2.0; 4], &ModelPrior::Uniform).unwrap();
        assert!(post.post_prob.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let post =
            posterior_model_probs(dummy(3), vec![1.0, f64::INFINITY, 900.0], &ModelPrior::Uniform)
                .unwrap();
        assert_eq!(post.post_prob, vec![0.0, 1.0, 0.0]);
        assert_eq!(
            posterior_model_probs(vec![], vec![], &ModelPrior::Uniform).unwrap_err(),
            Error::EmptyModelList
        );
    }

    #[test]
    fn prediction_at_means_is_intercept() {
        let post = posterior_model_probs(dummy(2), vec![0.0, 1.0], &ModelPrior::Uniform).unwrap();
        let v = bma_predict(&[3.0], &post, &[vec![0.0], vec![5.0]], &[3.0], 1.5).unwrap();
        assert_eq!(v, 1.5);
    }
}
