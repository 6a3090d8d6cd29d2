//! Zellner's fixed-g prior and the hyper-g prior: Bayes factors against the
//! intercept-only model, shrinkage, posterior means and the limiting
//! posterior of the error variance.

use serde::Serialize;

use crate::design::FitSummary;
use crate::error::{domain, Error, Result};
use crate::quad::{bisect_root, ln_integrate_line, logistic, softplus};
use crate::special::{ln_hyp2f1, Hyp2F1Params};

/// Hyper-g prior `π(g) = (a-2)/2 (1+g)^{-a/2}` with `2 < a <= 4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HyperGPrior {
    a: f64,
}

impl HyperGPrior {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 2.0 && a <= 4.0) {
            return domain(format!("hyper-g parameter must satisfy 2 < a <= 4, got {a}"));
        }
        Ok(HyperGPrior { a })
    }

    pub fn a(&self) -> f64 {
        self.a
    }
}

impl Default for HyperGPrior {
    fn default() -> Self {
        HyperGPrior { a: 3.0 }
    }
}

/// Zellner's g prior with a fixed `g > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedGPrior {
    g: f64,
}

impl FixedGPrior {
    pub fn new(g: f64) -> Result<Self> {
        if !(g > 0.0 && g.is_finite()) {
            return domain(format!("g must be positive and finite, got {g}"));
        }
        Ok(FixedGPrior { g })
    }

    pub fn g(&self) -> f64 {
        self.g
    }
}

fn check_fit(fit: &FitSummary) -> Result<()> {
    if !(fit.r2 >= 0.0 && fit.r2 <= 1.0) {
        return domain(format!("R^2 must lie in [0, 1], got {}", fit.r2));
    }
    if fit.n <= fit.p {
        return domain(format!("need n > p, got n={}, p={}", fit.n, fit.p));
    }
    Ok(())
}

/// `ln BF` of the fitted model against the null under a fixed g.
pub fn ln_bf_fixed_g(prior: &FixedGPrior, fit: &FitSummary) -> Result<f64> {
    check_fit(fit)?;
    let g = prior.g;
    let n = fit.n as f64;
    let p = fit.p as f64;
    Ok(0.5 * (n - p - 1.0) * g.ln_1p() - 0.5 * (n - 1.0) * (g * fit.one_minus_r2()).ln_1p())
}

/// Fixed-g Bayes factor in linear space.
pub fn bf_fixed_g(prior: &FixedGPrior, fit: &FitSummary) -> Result<f64> {
    Ok(ln_bf_fixed_g(prior, fit)?.exp())
}

/// Shrinkage `g / (1 + g)` of the fixed-g posterior mean.
pub fn shrinkage_fixed_g(prior: &FixedGPrior) -> f64 {
    prior.g / (1.0 + prior.g)
}

/// `ln BF` of the fitted model against the null under the hyper-g prior,
/// `(a-2)/(p+a-2) 2F1((n-1)/2, 1; (a+p)/2; R^2)`.
///
/// At `R^2 = 1` the value is `+inf` when `n >= a + p - 1` and the finite
/// limit `(a-2)/(a+p-n-1)` otherwise.
pub fn ln_bf_hyper_g(prior: &HyperGPrior, fit: &FitSummary) -> Result<f64> {
    check_fit(fit)?;
    if fit.p == 0 {
        return Ok(0.0);
    }
    let a = prior.a;
    let n = fit.n as f64;
    let p = fit.p as f64;
    let rho = fit.one_minus_r2();
    if rho == 0.0 {
        return Ok(if n >= a + p - 1.0 {
            f64::INFINITY
        } else {
            ((a - 2.0) / (a + p - n - 1.0)).ln()
        });
    }
    let m = 0.5 * (n - 1.0);
    let h = Hyp2F1Params::with_complement(m, 1.0, 0.5 * (a + p), 1.0 - rho, rho);
    Ok(((a - 2.0) / (p + a - 2.0)).ln() + ln_hyp2f1(h)?)
}

/// Hyper-g Bayes factor in linear space (may be `+inf`).
pub fn bf_hyper_g(prior: &HyperGPrior, fit: &FitSummary) -> Result<f64> {
    Ok(ln_bf_hyper_g(prior, fit)?.exp())
}

/// The same Bayes factor from its defining integral over `g`,
/// `∫_0^∞ (1+g)^{(n-p-1)/2} (1 + g(1-R^2))^{-(n-1)/2} π(g) dg`.
pub fn ln_bf_hyper_g_gspace(prior: &HyperGPrior, fit: &FitSummary) -> Result<f64> {
    check_fit(fit)?;
    if fit.p == 0 {
        return Ok(0.0);
    }
    let a = prior.a;
    let n = fit.n as f64;
    let p = fit.p as f64;
    let rho = fit.one_minus_r2();
    if rho == 0.0 {
        return ln_bf_hyper_g(prior, fit);
    }
    let e1 = 0.5 * (n - p - 1.0 - a);
    let m = 0.5 * (n - 1.0);
    let lr = rho.ln();
    // v = ln g
    let f = |v: f64| e1 * softplus(v) - m * softplus(v + lr) + v;
    let df = |v: f64| e1 * logistic(v) - m * logistic(v + lr) + 1.0;
    let v0 = bisect_root(df, -745.0, 745.0);
    let h = 1e-3;
    let curv = -(df(v0 + h) - df(v0 - h)) / (2.0 * h);
    let scale = if curv > 0.0 { (1.0 / curv.sqrt()).clamp(0.01, 50.0) } else { 1.0 };
    let q = ln_integrate_line(|v| Ok(f(v)), v0, scale, 1e-14, 1_000_000)?;
    Ok(((a - 2.0) / 2.0).ln() + q.ln_value)
}

/// Posterior mean of `g/(1+g)`,
/// `2/(p+a) 2F1(m, 2; (p+a)/2+1; R^2) / 2F1(m, 1; (p+a)/2; R^2)`.
pub fn shrinkage_hyper_g(prior: &HyperGPrior, fit: &FitSummary) -> Result<f64> {
    check_fit(fit)?;
    shrinkage_from_stats(prior.a, fit.n as f64, fit.p as f64, fit.r2, fit.one_minus_r2())
}

/// Shrinkage as a function of `(a, n, p, R^2, 1-R^2)` alone. `n` may be
/// any value `>= 1`.
pub fn shrinkage_from_stats(a: f64, n: f64, p: f64, r2: f64, one_minus_r2: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return domain("shrinkage is undefined for a model without predictors");
    }
    if !(n >= 1.0) {
        return domain(format!("need n >= 1, got {n}"));
    }
    let c = 0.5 * (a + p);
    let m = 0.5 * (n - 1.0);
    if one_minus_r2 == 0.0 {
        return Ok(if n >= a + p - 1.0 { 1.0 } else { 2.0 / (p + a - n + 1.0) });
    }
    if m == 0.0 || r2 == 0.0 {
        return Ok(2.0 / (p + a));
    }
    let h1 = Hyp2F1Params::with_complement(m, 1.0, c, r2, one_minus_r2);
    let h2 = Hyp2F1Params::with_complement(m, 2.0, c + 1.0, r2, one_minus_r2);
    let ratio = (ln_hyp2f1(h2)? - ln_hyp2f1(h1)?).exp();
    Ok((2.0 / (p + a) * ratio).min(1.0))
}

/// Posterior mean of the slopes, `E[g/(1+g) | y] β̂_LS`.
pub fn posterior_mean_hyper_g(prior: &HyperGPrior, fit: &FitSummary) -> Result<Vec<f64>> {
    if fit.p == 0 {
        return Ok(Vec::new());
    }
    let s = shrinkage_hyper_g(prior, fit)?;
    Ok(fit.beta_hat_ls.iter().map(|b| s * b).collect())
}

/// Inverse gamma law with density `∝ x^{-shape-1} exp(-rate / x)`.
///
/// `scale()` is the reciprocal of the rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverseGammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl InverseGammaParams {
    pub fn scale(&self) -> f64 {
        1.0 / self.rate
    }

    /// Mean; `0` for the degenerate law and `+inf` when `shape <= 1`.
    pub fn mean(&self) -> f64 {
        if self.rate == 0.0 {
            0.0
        } else if self.shape > 1.0 {
            self.rate / (self.shape - 1.0)
        } else {
            f64::INFINITY
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - statrs::function::gamma::ln_gamma(self.shape)
            - (self.shape + 1.0) * x.ln()
            - self.rate / x
    }
}

/// Limiting posterior of `σ^2` when one coefficient block grows without
/// bound: inverse gamma with shape `(n+1-a-p)/2` and rate `(n-p-1) σ̂^2 / 2`.
pub fn sigma2_limit_hyper_g(
    prior: &HyperGPrior,
    n: usize,
    p: usize,
    sigma2_hat: f64,
) -> Result<InverseGammaParams> {
    let a = prior.a;
    let (nf, pf) = (n as f64, p as f64);
    if !(nf > a + pf - 1.0) {
        return domain(format!("limit law needs n > a + p - 1 (n={n}, p={p}, a={a})"));
    }
    if !(sigma2_hat >= 0.0) {
        return domain("sigma2_hat must be nonnegative");
    }
    Ok(InverseGammaParams {
        shape: 0.5 * (nf + 1.0 - a - pf),
        rate: 0.5 * (nf - pf - 1.0) * sigma2_hat,
    })
}

/// Posterior of `σ^2` under a fixed `g`: inverse gamma with shape
/// `(n-1)/2` and rate `(rss + (1-t)(tss - rss))/2`, `t = g/(1+g)`.
pub fn sigma2_posterior_fixed_g(prior: &FixedGPrior, fit: &FitSummary) -> Result<InverseGammaParams> {
    if fit.n < 2 {
        return domain(format!("need n >= 2, got n={}", fit.n));
    }
    let t = shrinkage_fixed_g(prior);
    let q = fit.rss + (1.0 - t) * (fit.tss - fit.rss);
    Ok(InverseGammaParams { shape: 0.5 * (fit.n as f64 - 1.0), rate: 0.5 * q })
}

/// `ln BF(big : small)` for two fits of the same response.
///
/// When both null Bayes factors are infinite the larger model is taken to
/// lose, giving `-inf`.
pub fn ln_bf_ratio_hyper_g(
    prior: &HyperGPrior,
    fit_big: &FitSummary,
    fit_small: &FitSummary,
) -> Result<f64> {
    if fit_big.n != fit_small.n
        || (fit_big.tss - fit_small.tss).abs() > 1e-9 * fit_big.tss.max(fit_small.tss)
    {
        return Err(Error::DimensionMismatch(
            "Bayes factor ratio needs two fits of the same response".into(),
        ));
    }
    let lb = ln_bf_hyper_g(prior, fit_big)?;
    let ls = ln_bf_hyper_g(prior, fit_small)?;
    if lb.is_infinite() && ls.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(lb - ls)
}

/// Linear-space form of [`ln_bf_ratio_hyper_g`].
pub fn bf_ratio_hyper_g(
    prior: &HyperGPrior,
    fit_big: &FitSummary,
    fit_small: &FitSummary,
) -> Result<f64> {
    Ok(ln_bf_ratio_hyper_g(prior, fit_big, fit_small)?.exp())
}
