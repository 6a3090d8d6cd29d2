//! Block hyper-g prior on block-orthogonal designs.
//!
//! With `s_i = 1 - t_i = 1/(1+g_i)` the posterior of the shrinkage factors is
//! proportional to `∏ s_i^{b_i} (ρ + Σ r_i s_i)^{-m}` on the unit cube, where
//! `b_i = (a+p_i)/2 - 2`, `r_i = R_i^2`, `ρ = 1 - R^2` and `m = (n-1)/2`.
//! Bayes factors against the null and posterior shrinkage are integrals of
//! this kernel, computed by nested double-exponential quadrature for up to
//! three blocks and by randomized quasi-Monte Carlo beyond that, with a
//! Laplace approximation available for large samples.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{BlockPartition, FitSummary};
use crate::error::{domain, Error, Result};
use crate::gprior::shrinkage_from_stats;
use crate::quad::{line_mode, ln_integrate_line_multi, ln_rqmc_multi, logistic, softplus};
use crate::special::{ln_hyp2f1, ln_lower_inc_gamma, Hyp2F1Params};

/// Independent hyper-g priors with a shared `a` on the blocks of a partition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockHyperGPrior {
    a: f64,
    partition: BlockPartition,
}

impl BlockHyperGPrior {
    pub fn new(a: f64, partition: BlockPartition) -> Result<Self> {
        if !(a > 2.0 && a <= 4.0) {
            return domain(format!("hyper-g parameter must satisfy 2 < a <= 4, got {a}"));
        }
        Ok(BlockHyperGPrior { a, partition })
    }

    /// Prior with the partition carried by `fit`.
    pub fn for_fit(a: f64, fit: &FitSummary) -> Result<Self> {
        Self::new(a, fit.partition.clone())
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn k(&self) -> usize {
        self.partition.k()
    }

    /// Edge exponents `b_i = (a+p_i)/2 - 2`.
    pub fn edge_exponents(&self) -> Vec<f64> {
        self.partition.sizes().iter().map(|&p| 0.5 * (self.a + p as f64) - 2.0).collect()
    }
}

/// How a reported number was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegrationMethod {
    ClosedForm,
    Quadrature,
    MonteCarlo,
    Laplace,
}

impl IntegrationMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            IntegrationMethod::ClosedForm => "closed-form",
            IntegrationMethod::Quadrature => "quadrature",
            IntegrationMethod::MonteCarlo => "monte-carlo",
            IntegrationMethod::Laplace => "laplace",
        }
    }
}

/// Integration engine for the shrinkage posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Nested quadrature for `k <= 3`, quasi-Monte Carlo otherwise.
    Auto,
    Tensor,
    Qmc,
}

/// When the Laplace approximation replaces full integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaplaceMode {
    /// For `k >= 2`, `n >= 200` and every mode inside `(0.02, 0.98)` and
    /// above its prior-mean floor `2/(a+p_i)`.
    Auto,
    Never,
    Always,
}

/// Accuracy and budget settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationOptions {
    /// Maximum number of integrand evaluations.
    pub budget: usize,
    /// Relative tolerance of the quadrature levels.
    pub tol: f64,
    /// Target relative standard error for quasi-Monte Carlo.
    pub qmc_tol: f64,
    /// Seed of the quasi-Monte Carlo randomizations.
    pub seed: u64,
    pub engine: Engine,
    pub laplace: LaplaceMode,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            budget: 1_000_000,
            tol: 1e-10,
            qmc_tol: 1e-6,
            seed: 0,
            engine: Engine::Auto,
            laplace: LaplaceMode::Auto,
        }
    }
}

/// Largest relative error accepted from quasi-Monte Carlo.
pub const QMC_MAX_REL_ERR: f64 = 1e-4;

/// Posterior summary of the block shrinkage factors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShrinkagePosterior {
    /// `E[t_i | y]` with `t_i = g_i/(1+g_i)`.
    pub t_mean: Vec<f64>,
    /// `E[1 - t_i | y]`, accurate when `t_mean` is close to one.
    pub s_mean: Vec<f64>,
    /// `ln BF(M : M_0)`, possibly `+inf`.
    pub log_bf_null: f64,
    pub method: IntegrationMethod,
    /// Estimated relative error of the Bayes factor.
    pub error_estimate: f64,
}

/// Kernel parameters shared by every integration path.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Kernel {
    pub a: f64,
    pub n: f64,
    pub m: f64,
    pub p: Vec<usize>,
    pub b: Vec<f64>,
    pub r: Vec<f64>,
    pub rho: f64,
}

impl Kernel {
    pub fn from_fit(a: f64, fit: &FitSummary) -> Result<Self> {
        if !fit.block_orthogonal {
            return Err(Error::NotBlockOrthogonal(
                "cross-block Gram entries exceed the tolerance; orthogonalize the blocks first"
                    .into(),
            ));
        }
        if fit.n <= fit.p + 1 {
            return domain(format!("need n > p + 1, got n={}, p={}", fit.n, fit.p));
        }
        if !(fit.tss > 0.0) {
            return domain("total sum of squares must be positive");
        }
        let k = fit.p_blocks.len();
        if k == 0 || fit.ss_blocks.len() != k {
            return Err(Error::DimensionMismatch("one sum of squares per block required".into()));
        }
        let r: Vec<f64> = fit.ss_blocks.iter().map(|s| s / fit.tss).collect();
        let rho = fit.rss / fit.tss;
        let n = fit.n as f64;
        Ok(Kernel {
            a,
            n,
            m: 0.5 * (n - 1.0),
            p: fit.p_blocks.clone(),
            b: fit.p_blocks.iter().map(|&p| 0.5 * (a + p as f64) - 2.0).collect(),
            r,
            rho,
        })
    }

    pub fn k(&self) -> usize {
        self.b.len()
    }

    fn ln_prior_const(&self) -> f64 {
        self.k() as f64 * (0.5 * (self.a - 2.0)).ln()
    }

    /// `ln ∫_0^1 s^{b+j} (c + r s)^{-m} ds` for `j = 0, 1`.
    fn inner(&self, b: f64, r: f64, c: f64) -> Result<[f64; 2]> {
        let m = self.m;
        if r == 0.0 {
            let l = -m * c.ln();
            return Ok([l - (b + 1.0).ln(), l - (b + 2.0).ln()]);
        }
        let tot = c + r;
        let w = r / tot;
        let wc = c / tot;
        let l = -m * tot.ln();
        let f0 = ln_hyp2f1(Hyp2F1Params::with_complement(m, 1.0, b + 2.0, w, wc))?;
        let f1 = ln_hyp2f1(Hyp2F1Params::with_complement(m, 1.0, b + 3.0, w, wc))?;
        Ok([l - (b + 1.0).ln() + f0, l - (b + 2.0).ln() + f1])
    }

    /// Joint log-kernel in the logistic coordinates `s_i = logistic(v_i)`,
    /// Jacobian included.
    fn ln_kernel_v(&self, v: &[f64], s: &mut [f64]) -> f64 {
        let mut acc = 0.0;
        let mut lin = self.rho;
        for i in 0..v.len() {
            let sp = softplus(v[i]);
            let ls = v[i] - sp;
            acc += (self.b[i] + 1.0) * ls - sp;
            s[i] = logistic(v[i]);
            lin += self.r[i] * s[i];
        }
        acc - self.m * lin.ln()
    }
}

/// Log-integrals `ln ∫ K`, `ln ∫ s_i K` with an error estimate.
#[derive(Debug, Clone)]
struct Integral {
    ln_i0: f64,
    ln_moments: Vec<f64>,
    rel_err: f64,
    method: IntegrationMethod,
}

impl Integral {
    fn into_posterior(self, kern: &Kernel) -> ShrinkagePosterior {
        let s_mean: Vec<f64> =
            self.ln_moments.iter().map(|l| (l - self.ln_i0).exp().min(1.0)).collect();
        ShrinkagePosterior {
            t_mean: s_mean.iter().map(|s| 1.0 - s).collect(),
            s_mean,
            log_bf_null: kern.ln_prior_const() + self.ln_i0,
            method: self.method,
            error_estimate: self.rel_err,
        }
    }
}

struct TensorCtx<'a> {
    kern: &'a Kernel,
    tol: f64,
    budget: usize,
    evals: usize,
    worst_inner: f64,
    outer_err: f64,
}

impl TensorCtx<'_> {
    /// Components `[base, s_j, ..., s_{k-1}]` of the integral over the
    /// coordinates `j..k` with the outer coordinates folded into `c`.
    fn level(&mut self, j: usize, c: f64) -> Result<Vec<f64>> {
        let kern = self.kern;
        let k = kern.k();
        if j + 1 == k {
            self.evals += 1;
            if self.evals > self.budget {
                return Err(Error::NoConvergence(format!(
                    "quadrature budget of {} evaluations exhausted",
                    self.budget
                )));
            }
            return Ok(kern.inner(kern.b[j], kern.r[j], c)?.to_vec());
        }
        let (b, r) = (kern.b[j], kern.r[j]);
        let width = k - j + 1;
        let base_only = |this: &mut Self, v: f64| -> Result<f64> {
            let sp = softplus(v);
            let inner = this.level(j + 1, c + r * logistic(v))?;
            Ok((b + 1.0) * (v - sp) - sp + inner[0])
        };
        let (center, scale) = line_mode(|v| base_only(self, v), 0.0, -700.0, 700.0)?;
        let tol = self.tol;
        let budget = self.budget;
        let res = ln_integrate_line_multi(
            width,
            |v, out| {
                let sp = softplus(v);
                let ls = v - sp;
                let inner = self.level(j + 1, c + r * logistic(v))?;
                let w = (b + 1.0) * ls - sp;
                out[0] = w + inner[0];
                out[1] = out[0] + ls;
                for (o, x) in out[2..].iter_mut().zip(&inner[1..]) {
                    *o = w + x;
                }
                Ok(())
            },
            center,
            scale,
            tol,
            budget,
        )?;
        let err = res.iter().map(|q| q.rel_err).fold(0.0, f64::max);
        if j > 0 {
            self.worst_inner = self.worst_inner.max(err);
        } else {
            self.outer_err = err;
        }
        Ok(res.iter().map(|q| q.ln_value).collect())
    }
}

fn integrate_tensor(kern: &Kernel, opts: &IntegrationOptions) -> Result<Integral> {
    let mut ctx = TensorCtx {
        kern,
        tol: opts.tol,
        budget: opts.budget,
        evals: 0,
        worst_inner: 0.0,
        outer_err: 0.0,
    };
    let k = kern.k();
    if k == 1 {
        let v = kern.inner(kern.b[0], kern.r[0], kern.rho)?;
        return Ok(Integral {
            ln_i0: v[0],
            ln_moments: vec![v[1]],
            rel_err: 1e-14,
            method: IntegrationMethod::ClosedForm,
        });
    }
    let comps = ctx.level(0, kern.rho)?;
    Ok(Integral {
        ln_i0: comps[0],
        ln_moments: comps[1..].to_vec(),
        rel_err: ctx.outer_err + ctx.worst_inner,
        method: IntegrationMethod::Quadrature,
    })
}

/// Joint mode of the logistic-coordinate kernel and the negated Hessian there.
fn joint_mode(kern: &Kernel) -> (Vec<f64>, DMatrix<f64>) {
    let k = kern.k();
    let mut v = vec![0.0; k];
    let mut s = vec![0.0; k];
    let grad_hess = |v: &[f64], s: &mut [f64]| -> (DVector<f64>, DMatrix<f64>) {
        let mut lin = kern.rho;
        for i in 0..k {
            s[i] = logistic(v[i]);
            lin += kern.r[i] * s[i];
        }
        let m = kern.m;
        let mut g = DVector::zeros(k);
        let mut h = DMatrix::zeros(k, k);
        for i in 0..k {
            let q = s[i] * (1.0 - s[i]);
            g[i] = (kern.b[i] + 1.0) * (1.0 - s[i]) - s[i] - m * kern.r[i] * q / lin;
            for j in 0..k {
                let qj = s[j] * (1.0 - s[j]);
                h[(i, j)] = m * kern.r[i] * kern.r[j] * q * qj / (lin * lin);
            }
            h[(i, i)] += -(kern.b[i] + 2.0) * q - m * kern.r[i] * q * (1.0 - 2.0 * s[i]) / lin;
        }
        (g, h)
    };
    let mut cur = kern.ln_kernel_v(&v, &mut s);
    for _ in 0..200 {
        let (g, h) = grad_hess(&v, &mut s);
        if g.amax() < 1e-10 {
            break;
        }
        let neg = -h.clone();
        let dir = match neg.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => g.clone() * 0.5,
        };
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<f64> =
                v.iter().zip(dir.iter()).map(|(x, d)| (x + step * d).clamp(-700.0, 700.0)).collect();
            let val = kern.ln_kernel_v(&trial, &mut s);
            if val >= cur {
                v = trial;
                cur = val;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let (_, h) = grad_hess(&v, &mut s);
    (v, -h)
}

fn integrate_qmc(kern: &Kernel, opts: &IntegrationOptions) -> Result<Integral> {
    let k = kern.k();
    let (center, neg_h) = joint_mode(kern);
    let cov = neg_h.clone().cholesky().map(|c| c.inverse());
    let scale: Vec<f64> = (0..k)
        .map(|i| {
            let lam = match &cov {
                Some(c) if c[(i, i)] > 0.0 => c[(i, i)].sqrt(),
                _ => 1.0,
            };
            (1.2 * lam).max(1.02 / (kern.b[i] + 1.0)).max(0.55)
        })
        .collect();
    let ln_scale: f64 = scale.iter().map(|x| x.ln()).sum();
    let mut v = vec![0.0; k];
    let mut s = vec![0.0; k];
    let mut points = 1usize << 11;
    let reps = 32usize;
    let mut used = 0usize;
    let mut best: Option<Vec<crate::quad::LnQuad>> = None;
    let mut round = 0u64;
    while used + points * reps <= opts.budget {
        let seed = opts.seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(round + 1));
        let res = ln_rqmc_multi(
            k,
            k + 1,
            |u, out| {
                let mut jac = ln_scale;
                for i in 0..k {
                    let (lu, l1u) = (u[i].ln(), (-u[i]).ln_1p());
                    v[i] = center[i] + scale[i] * (lu - l1u);
                    jac -= lu + l1u;
                }
                let base = kern.ln_kernel_v(&v, &mut s) + jac;
                out[0] = base;
                for i in 0..k {
                    out[i + 1] = base + s[i].ln();
                }
            },
            points,
            reps,
            seed,
        )?;
        used += points * reps;
        round += 1;
        let done = res[0].rel_err <= opts.qmc_tol;
        best = Some(res);
        if done {
            break;
        }
        points *= 2;
    }
    let res = best.ok_or_else(|| {
        Error::NoConvergence(format!(
            "budget of {} evaluations is below one quasi-Monte Carlo round",
            opts.budget
        ))
    })?;
    let rel_err = res[0].rel_err;
    if !(rel_err <= QMC_MAX_REL_ERR) {
        return Err(Error::NoConvergence(format!(
            "quasi-Monte Carlo relative error {rel_err:.2e} exceeds {QMC_MAX_REL_ERR:.0e}"
        )));
    }
    Ok(Integral {
        ln_i0: res[0].ln_value,
        ln_moments: res[1..].iter().map(|q| q.ln_value).collect(),
        rel_err,
        method: IntegrationMethod::MonteCarlo,
    })
}

/// Divergence test at `R^2 = 1`: the kernel integral is infinite when
/// `Σ_{r_i > 0} (b_i + 1) <= m`.
fn diverges_at_exact_fit(kern: &Kernel) -> bool {
    let s: f64 = kern.b.iter().zip(&kern.r).filter(|(_, &r)| r > 0.0).map(|(b, _)| b + 1.0).sum();
    s <= kern.m
}

fn exact_fit_posterior(kern: &Kernel) -> ShrinkagePosterior {
    let s_mean: Vec<f64> = kern
        .b
        .iter()
        .zip(&kern.r)
        .map(|(b, &r)| if r > 0.0 { 0.0 } else { (b + 1.0) / (b + 2.0) })
        .collect();
    ShrinkagePosterior {
        t_mean: s_mean.iter().map(|s| 1.0 - s).collect(),
        s_mean,
        log_bf_null: f64::INFINITY,
        method: IntegrationMethod::ClosedForm,
        error_estimate: 0.0,
    }
}

fn null_posterior(kern: &Kernel) -> ShrinkagePosterior {
    let s_mean: Vec<f64> = kern.b.iter().map(|b| (b + 1.0) / (b + 2.0)).collect();
    ShrinkagePosterior {
        t_mean: s_mean.iter().map(|s| 1.0 - s).collect(),
        s_mean,
        log_bf_null: kern.ln_prior_const() - kern.b.iter().map(|b| (b + 1.0).ln()).sum::<f64>(),
        method: IntegrationMethod::ClosedForm,
        error_estimate: 0.0,
    }
}

pub(crate) fn posterior_from_kernel(
    kern: &Kernel,
    opts: &IntegrationOptions,
) -> Result<ShrinkagePosterior> {
    let k = kern.k();
    if kern.r.iter().all(|&r| r == 0.0) {
        return Ok(null_posterior(kern));
    }
    let mut kern = kern.clone();
    if kern.rho == 0.0 {
        if diverges_at_exact_fit(&kern) {
            return Ok(exact_fit_posterior(&kern));
        }
        if k == 1 {
            let (a, n, p) = (kern.a, kern.n, kern.p[0] as f64);
            let t = 2.0 / (p + a - n + 1.0);
            return Ok(ShrinkagePosterior {
                t_mean: vec![t],
                s_mean: vec![1.0 - t],
                log_bf_null: ((a - 2.0) / (a + p - n - 1.0)).ln(),
                method: IntegrationMethod::ClosedForm,
                error_estimate: 0.0,
            });
        }
        kern.rho = 1e-300;
    }
    if k >= 2 && opts.laplace != LaplaceMode::Never {
        match laplace_posterior(&kern) {
            Ok((post, eligible)) => {
                if opts.laplace == LaplaceMode::Always || (eligible && kern.n >= 200.0) {
                    return Ok(post);
                }
            }
            Err(e) => {
                if opts.laplace == LaplaceMode::Always {
                    return Err(e);
                }
            }
        }
    }
    let use_qmc = match opts.engine {
        Engine::Auto => k >= 4,
        Engine::Tensor => false,
        Engine::Qmc => true,
    };
    let integral = if use_qmc && k >= 2 {
        integrate_qmc(&kern, opts)?
    } else {
        integrate_tensor(&kern, opts)?
    };
    Ok(integral.into_posterior(&kern))
}

fn check_prior_fit(prior: &BlockHyperGPrior, fit: &FitSummary) -> Result<()> {
    if prior.partition.sizes() != fit.p_blocks {
        return Err(Error::DimensionMismatch(format!(
            "prior block sizes {:?} do not match the fit's {:?}",
            prior.partition.sizes(),
            fit.p_blocks
        )));
    }
    Ok(())
}

/// Bayes factor against the null and shrinkage posterior under the block
/// hyper-g prior.
pub fn bf_block_hyper_g(
    prior: &BlockHyperGPrior,
    fit: &FitSummary,
    opts: &IntegrationOptions,
) -> Result<ShrinkagePosterior> {
    check_prior_fit(prior, fit)?;
    let kern = Kernel::from_fit(prior.a, fit)?;
    posterior_from_kernel(&kern, opts)
}

/// Posterior mean shrinkage per block; same computation as
/// [`bf_block_hyper_g`].
pub fn block_shrinkage(
    prior: &BlockHyperGPrior,
    fit: &FitSummary,
    opts: &IntegrationOptions,
) -> Result<ShrinkagePosterior> {
    bf_block_hyper_g(prior, fit, opts)
}

/// Posterior mean of the slopes: block `i` is `E[t_i | y] β̂_i`.
pub fn posterior_mean_block(
    prior: &BlockHyperGPrior,
    fit: &FitSummary,
    opts: &IntegrationOptions,
) -> Result<Vec<f64>> {
    let post = block_shrinkage(prior, fit, opts)?;
    Ok(scale_by_blocks(fit, &post.t_mean))
}

pub(crate) fn scale_by_blocks(fit: &FitSummary, t_mean: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; fit.p];
    for (i, block) in fit.partition.blocks().iter().enumerate() {
        for &j in block {
            out[j] = t_mean[i] * fit.beta_hat_ls[j];
        }
    }
    out
}

/// `ln BF(M_γ : M_T)` for two fits of the same response, each with its own
/// block structure.
pub fn ln_bf_between(
    a: f64,
    fit_gamma: &FitSummary,
    fit_t: &FitSummary,
    opts: &IntegrationOptions,
) -> Result<f64> {
    let g = ln_bf_null_any(a, fit_gamma, opts)?;
    let t = ln_bf_null_any(a, fit_t, opts)?;
    if g.is_infinite() && t.is_infinite() {
        return Ok(if g == t { 0.0 } else { g });
    }
    Ok(g - t)
}

fn ln_bf_null_any(a: f64, fit: &FitSummary, opts: &IntegrationOptions) -> Result<f64> {
    if fit.p == 0 {
        return Ok(0.0);
    }
    let kern = Kernel::from_fit(a, fit)?;
    Ok(posterior_from_kernel(&kern, opts)?.log_bf_null)
}

/// Interior maximizer of the log-kernel in `t`, with its Hessian.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplacePoint {
    pub t_star: Vec<f64>,
    /// `1 - t_star`, kept separately for precision near one.
    pub s_star: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    /// `h(t*) = Σ b_i ln(1-t_i*) - m ln(1 - Σ t_i* r_i)`.
    pub log_height: f64,
}

impl LaplacePoint {
    pub fn hessian_matrix(&self) -> DMatrix<f64> {
        let k = self.t_star.len();
        DMatrix::from_fn(k, k, |i, j| self.hessian[i][j])
    }
}

/// Stationary point of `h(t) = Σ b_i ln(1-t_i) - m ln(1 - Σ t_i r_i)`:
/// `t_i* = 1 - b_i (1-r) / (r_i (m-b))` with `r = Σ r_i`, `b = Σ b_i`.
pub fn laplace_t_star(b: &[f64], r: &[f64], m: f64) -> Result<LaplacePoint> {
    let total: f64 = r.iter().sum();
    laplace_t_star_with_complement(b, r, 1.0 - total, m)
}

/// [`laplace_t_star`] with `1 - Σ r_i` supplied at full precision.
pub fn laplace_t_star_with_complement(
    b: &[f64],
    r: &[f64],
    one_minus_r: f64,
    m: f64,
) -> Result<LaplacePoint> {
    if b.len() != r.len() || b.is_empty() {
        return Err(Error::DimensionMismatch("b and r must have equal nonzero length".into()));
    }
    if b.iter().any(|&x| !(x > 0.0)) {
        return domain("every edge exponent b_i must be positive");
    }
    if r.iter().any(|&x| !(x >= 0.0)) || !(one_minus_r > 0.0) {
        return domain("need r_i >= 0 and Σ r_i < 1");
    }
    let bsum: f64 = b.iter().sum();
    if !(m > bsum) {
        return domain(format!("need m > Σ b_i (m={m}, Σ b_i={bsum})"));
    }
    let k = b.len();
    let mut s_star = Vec::with_capacity(k);
    for i in 0..k {
        let s = b[i] * one_minus_r / (r[i] * (m - bsum));
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::OutOfInterior(format!(
                "t_{i}* = {} lies outside (0, 1)",
                1.0 - s
            )));
        }
        s_star.push(s);
    }
    let c = (m - bsum) / one_minus_r;
    let mut hessian = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            hessian[i][j] = if i == j {
                -c * c * r[i] * r[i] * (1.0 / b[i] - 1.0 / m)
            } else {
                c * c * r[i] * r[j] / m
            };
        }
    }
    let d_star = one_minus_r * m / (m - bsum);
    let log_height =
        b.iter().zip(&s_star).map(|(bi, s)| bi * s.ln()).sum::<f64>() - m * d_star.ln();
    Ok(LaplacePoint { t_star: s_star.iter().map(|s| 1.0 - s).collect(), s_star, hessian, log_height })
}

/// Laplace value of `ln ∫ K`, with `b_i + 1/2` and the factor
/// `(1-t̂_i)^{-1/2}` for blocks whose edge exponent is negative.
///
/// Returns the approximation, the Laplace point and whether the automatic
/// selection rule accepts it.
fn laplace_ln_integral(kern: &Kernel) -> Result<(f64, LaplacePoint)> {
    if kern.b.iter().any(|&b| b == 0.0) {
        return Err(Error::OutOfInterior(
            "an edge exponent is exactly zero; Laplace is not applicable".into(),
        ));
    }
    let bump: Vec<bool> = kern.b.iter().map(|&b| b < 0.0).collect();
    let b: Vec<f64> =
        kern.b.iter().zip(&bump).map(|(&b, &u)| if u { b + 0.5 } else { b }).collect();
    let pt = laplace_t_star_with_complement(&b, &kern.r, kern.rho, kern.m)?;
    let k = b.len();
    let neg = -pt.hessian_matrix();
    let chol = neg.cholesky().ok_or_else(|| {
        Error::OutOfInterior("Hessian at the stationary point is not negative definite".into())
    })?;
    let ln_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let mut ln_i = pt.log_height + 0.5 * k as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * ln_det;
    for (s, &u) in pt.s_star.iter().zip(&bump) {
        if u {
            ln_i -= 0.5 * s.ln();
        }
    }
    Ok((ln_i, pt))
}

fn laplace_posterior(kern: &Kernel) -> Result<(ShrinkagePosterior, bool)> {
    let (ln_i, pt) = laplace_ln_integral(kern)?;
    let eligible = pt.t_star.iter().zip(&kern.p).all(|(&t, &p)| {
        t > 0.02 && t < 0.98 && t >= 2.0 / (kern.a + p as f64)
    });
    let err: f64 = kern.b.iter().map(|b| 1.0 / (12.0 * (b.abs() + 1.0))).sum();
    Ok((
        ShrinkagePosterior {
            t_mean: pt.t_star.clone(),
            s_mean: pt.s_star.clone(),
            log_bf_null: kern.ln_prior_const() + ln_i,
            method: IntegrationMethod::Laplace,
            error_estimate: err,
        },
        eligible,
    ))
}

/// Laplace approximation of `ln BF(M : M_0)`. Models with an edge exponent
/// of exactly zero are integrated by quadrature instead; the method used is
/// returned alongside.
pub fn ln_bf_null_laplace(a: f64, fit: &FitSummary) -> Result<(f64, IntegrationMethod)> {
    if fit.p == 0 {
        return Ok((0.0, IntegrationMethod::ClosedForm));
    }
    let kern = Kernel::from_fit(a, fit)?;
    if kern.b.iter().any(|&b| b == 0.0) {
        let opts = IntegrationOptions { laplace: LaplaceMode::Never, ..Default::default() };
        let post = posterior_from_kernel(&kern, &opts)?;
        return Ok((post.log_bf_null, post.method));
    }
    let (ln_i, _) = laplace_ln_integral(&kern)?;
    Ok((kern.ln_prior_const() + ln_i, IntegrationMethod::Laplace))
}

/// Laplace approximation of `ln BF(M_γ : M_T)`.
pub fn ln_bf_laplace(a: f64, fit_gamma: &FitSummary, fit_t: &FitSummary) -> Result<f64> {
    if fit_gamma == fit_t {
        return Ok(0.0);
    }
    Ok(ln_bf_null_laplace(a, fit_gamma)?.0 - ln_bf_null_laplace(a, fit_t)?.0)
}

/// Linear-space form of [`ln_bf_laplace`].
pub fn bf_laplace(a: f64, fit_gamma: &FitSummary, fit_t: &FitSummary) -> Result<f64> {
    Ok(ln_bf_laplace(a, fit_gamma, fit_t)?.exp())
}

/// Lower bound `(a-2)/(a+p_2-2)` on the Bayes factor of a model with an
/// added block of size `p_2` when another block dominates.
pub fn clp_lower_bound(a: f64, p2: usize) -> Result<f64> {
    if !(a > 2.0 && a <= 4.0) {
        return domain(format!("need 2 < a <= 4, got {a}"));
    }
    if p2 == 0 {
        return domain("added block must have at least one predictor");
    }
    Ok((a - 2.0) / (a + p2 as f64 - 2.0))
}

/// Bracket on a block's posterior mean shrinkage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShrinkageBracket {
    /// Prior-mean floor `2/(a+p_i)`.
    pub lower: f64,
    /// Single-block shrinkage evaluated at `κ_i`.
    pub upper: f64,
    /// `κ_i = R_i^2 / (1 - Σ_{j≠i} R_j^2)`.
    pub kappa: f64,
}

/// Per-block bounds `2/(a+p_i) <= E[t_i|y] <= S(κ_i) < 1` where `S` is the
/// hyper-g shrinkage of a block of size `p_i`.
pub fn shrinkage_bounds(prior: &BlockHyperGPrior, fit: &FitSummary) -> Result<Vec<ShrinkageBracket>> {
    check_prior_fit(prior, fit)?;
    let a = prior.a;
    let n = fit.n as f64;
    fit.p_blocks
        .iter()
        .zip(&fit.ss_blocks)
        .map(|(&p, &ss)| {
            let den = fit.rss + ss;
            let (kappa, kc) = if den > 0.0 { (ss / den, fit.rss / den) } else { (0.0, 1.0) };
            let pf = p as f64;
            Ok(ShrinkageBracket {
                lower: 2.0 / (a + pf),
                upper: shrinkage_from_stats(a, n, pf, kappa, kc)?,
                kappa,
            })
        })
        .collect()
}

/// `E[t_m]` under the density that keeps only block `j`'s factor,
/// `∏ (1-t_i)^{b_i} (1 - t_j R_j^2)^{-m}`.
///
/// For `j ≠ m` the `t_m` marginal is beta-type with mean `2/(a+p_m)`; for
/// `j = m` it is the single-block hyper-g shrinkage at `R_m^2`.
pub fn single_factor_mean(
    prior: &BlockHyperGPrior,
    fit: &FitSummary,
    m_idx: usize,
    j_idx: usize,
) -> Result<f64> {
    check_prior_fit(prior, fit)?;
    let k = fit.p_blocks.len();
    if m_idx >= k || j_idx >= k {
        return Err(Error::DimensionMismatch(format!("block index out of range (k={k})")));
    }
    let pm = fit.p_blocks[m_idx] as f64;
    if m_idx != j_idx {
        return Ok(2.0 / (prior.a + pm));
    }
    let r = fit.ss_blocks[m_idx] / fit.tss;
    let rc = (fit.tss - fit.ss_blocks[m_idx]) / fit.tss;
    shrinkage_from_stats(prior.a, fit.n as f64, pm, r, rc)
}

/// Posterior density of `σ^2` after integrating out the coefficients and
/// the block shrinkage factors,
/// `∝ (σ^2)^{-(n+1)/2} e^{-RSS/(2σ^2)} ∏_i ∫_0^1 s^{b_i} e^{-s SS_i/(2σ^2)} ds`.
///
/// Blocks listed in `dominant` enter only through their power of `σ^2`,
/// which is the limit as their sum of squares grows without bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sigma2Density {
    n: f64,
    rss: f64,
    blocks: Vec<(f64, f64)>,
    dominant: Vec<f64>,
    ln_norm: f64,
    mean: f64,
    center: f64,
    scale: f64,
}

impl Sigma2Density {
    /// Build from the residual sum of squares, `(b_i, SS_i)` per ordinary
    /// block and `b_i` per dominant block.
    pub fn new(n: usize, rss: f64, blocks: Vec<(f64, f64)>, dominant: Vec<f64>) -> Result<Self> {
        let nf = n as f64;
        if !(rss >= 0.0) || blocks.iter().any(|&(b, ss)| !(b > -1.0) || !(ss >= 0.0)) {
            return domain("need rss >= 0, SS_i >= 0 and b_i > -1");
        }
        if dominant.iter().any(|&b| !(b > -1.0)) {
            return domain("need b_i > -1");
        }
        // Power of σ^2 at infinity and at zero.
        let dom: f64 = dominant.iter().map(|b| b + 1.0).sum();
        let at_inf = -(nf + 1.0) / 2.0 + dom;
        if !(at_inf < -1.0) {
            return Err(Error::IntegralDiverges(format!(
                "σ^2 density decays as (σ^2)^{at_inf} and cannot be normalized"
            )));
        }
        let finite_mean = at_inf < -2.0;
        if rss == 0.0 {
            let at_zero = at_inf
                + blocks.iter().filter(|(_, ss)| *ss > 0.0).map(|(b, _)| b + 1.0).sum::<f64>();
            if !(at_zero > -1.0) {
                return Err(Error::IntegralDiverges(format!(
                    "σ^2 density behaves as (σ^2)^{at_zero} near zero"
                )));
            }
        }
        let mut d = Sigma2Density {
            n: nf,
            rss,
            blocks,
            dominant,
            ln_norm: 0.0,
            mean: 0.0,
            center: 0.0,
            scale: 1.0,
        };
        let lf = |w: f64| d.ln_unnormalized_log(w).map(|l| l + w);
        let v0 = if rss > 0.0 { (rss / nf).ln() } else { 0.0 };
        let (center, scale) = line_mode(lf, v0, -700.0, 700.0)?;
        let q = ln_integrate_line_multi(
            if finite_mean { 2 } else { 1 },
            |w, out| {
                let l = d.ln_unnormalized_log(w)? + w;
                out[0] = l;
                if finite_mean {
                    out[1] = l + w;
                }
                Ok(())
            },
            center,
            scale,
            1e-12,
            1_000_000,
        )?;
        d.ln_norm = q[0].ln_value;
        d.mean = if finite_mean { (q[1].ln_value - q[0].ln_value).exp() } else { f64::INFINITY };
        d.center = center;
        d.scale = scale;
        Ok(d)
    }

    /// Unnormalized log density at `x = σ^2`.
    pub fn ln_unnormalized(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        self.ln_unnormalized_log(x.ln())
    }

    /// Unnormalized log density at `σ^2 = e^w`, valid beyond the range of
    /// `exp`.
    fn ln_unnormalized_log(&self, lx: f64) -> Result<f64> {
        let inv = (-lx).exp();
        let mut acc = -0.5 * (self.n + 1.0) * lx;
        if self.rss > 0.0 {
            acc -= 0.5 * self.rss * inv;
        }
        for &(b, ss) in &self.blocks {
            acc += ln_gamma_factor(b, 0.5 * ss * inv)?;
        }
        for &b in &self.dominant {
            acc += (b + 1.0) * lx;
        }
        Ok(acc)
    }

    pub fn ln_pdf(&self, x: f64) -> Result<f64> {
        Ok(self.ln_unnormalized(x)? - self.ln_norm)
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        Ok(self.ln_pdf(x)?.exp())
    }

    /// Posterior mean of `σ^2`; `+inf` when the tail is too heavy.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Log normalizing constant of the unnormalized density.
    pub fn ln_normalizer(&self) -> f64 {
        self.ln_norm
    }

    /// Location and width of the density in `ln σ^2`.
    pub fn log_scale_window(&self) -> (f64, f64) {
        (self.center, self.scale)
    }
}

/// `ln ∫_0^1 s^b e^{-s x} ds = ln γ(b+1, x) - (b+1) ln x`.
fn ln_gamma_factor(b: f64, x: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(-(b + 1.0).ln());
    }
    if x == f64::INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(ln_lower_inc_gamma(b + 1.0, x)? - (b + 1.0) * x.ln())
}

fn sigma2_blocks(prior: &BlockHyperGPrior, fit: &FitSummary) -> Vec<(f64, f64)> {
    prior.edge_exponents().into_iter().zip(fit.ss_blocks.iter().cloned()).collect()
}

/// Exact posterior density of `σ^2` under the block hyper-g prior.
pub fn sigma2_posterior_block(prior: &BlockHyperGPrior, fit: &FitSummary) -> Result<Sigma2Density> {
    check_prior_fit(prior, fit)?;
    if !fit.block_orthogonal {
        return Err(Error::NotBlockOrthogonal("σ^2 posterior needs block orthogonality".into()));
    }
    Sigma2Density::new(fit.n, fit.rss, sigma2_blocks(prior, fit), Vec::new())
}

/// Limit of the `σ^2` posterior as the first block's coefficients grow
/// without bound, other blocks and residuals held fixed. Requires
/// `n > k(a-2) + p + 1`.
pub fn sigma2_density_limit_block(
    prior: &BlockHyperGPrior,
    fit: &FitSummary,
) -> Result<Sigma2Density> {
    check_prior_fit(prior, fit)?;
    let k = prior.k() as f64;
    let need = k * (prior.a - 2.0) + fit.p as f64 + 1.0;
    if !(fit.n as f64 > need) {
        return domain(format!("limit density needs n > k(a-2)+p+1 = {need}, got n={}", fit.n));
    }
    let mut blocks = sigma2_blocks(prior, fit);
    let (b1, _) = blocks.remove(0);
    Sigma2Density::new(fit.n, fit.rss, blocks, vec![b1])
}

/// Upper bound `(RSS + Σ_{i≥2} SS_i)/(n-1-a-p_1)` on the limiting posterior
/// mean of `σ^2`; requires `n > a + p_1 + 1`.
pub fn sigma2_mean_bound_block(prior: &BlockHyperGPrior, fit: &FitSummary) -> Result<f64> {
    check_prior_fit(prior, fit)?;
    let p1 = fit.p_blocks[0] as f64;
    let den = fit.n as f64 - 1.0 - prior.a - p1;
    if !(den > 0.0) {
        return domain(format!("mean bound needs n > a + p_1 + 1 (n={}, p_1={p1})", fit.n));
    }
    Ok((fit.rss + fit.ss_blocks[1..].iter().sum::<f64>()) / den)
}

/// Log-kernel `Σ b_i ln(1-t_i) - m ln(1 - Σ t_i r_i)` at `t`, for oracles.
pub fn ln_shrinkage_kernel(b: &[f64], r: &[f64], m: f64, t: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut d = 1.0;
    for i in 0..b.len() {
        acc += b[i] * (-t[i]).ln_1p();
        d -= t[i] * r[i];
    }
    acc - m * d.ln()
}
