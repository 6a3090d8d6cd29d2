//! Log-space quadrature and quasi-Monte Carlo machinery.
//!
//! Integrands are supplied as natural logarithms so that values spanning
//! hundreds of orders of magnitude can be summed without overflow.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// `ln(1 + e^x)` without overflow or loss of precision.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ e^{x_i}`; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

/// Logistic function.
pub fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Result of a log-space integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LnQuad {
    /// Natural logarithm of the integral.
    pub ln_value: f64,
    /// Estimated relative error of the integral.
    pub rel_err: f64,
    /// Number of integrand evaluations.
    pub evals: usize,
}

const U_MAX: f64 = 9.0;
const NEGLIGIBLE: f64 = 52.0;
const MAX_LEVEL: u32 = 9;

/// Double-exponential rule on the real line for several integrands that
/// share nodes.
///
/// `g(v, out)` writes `ln f_j(v)` into `out[j]`; component 0 drives the
/// truncation of the node range. The substitution `v = center + scale *
/// sinh(u)` is applied and the trapezoidal rule in `u` is refined by
/// halving until all components agree to `tol` between levels.
pub fn ln_integrate_line_multi<F>(
    dim: usize,
    mut g: F,
    center: f64,
    scale: f64,
    tol: f64,
    max_evals: usize,
) -> Result<Vec<LnQuad>>
where
    F: FnMut(f64, &mut [f64]) -> Result<()>,
{
    if !(scale > 0.0) || !center.is_finite() {
        return Err(Error::DomainError(format!(
            "bad quadrature map center={center} scale={scale}"
        )));
    }
    let mut buf = vec![0.0; dim];
    let mut terms: Vec<Vec<f64>> = vec![Vec::new(); dim];
    let mut evals = 0usize;
    let mut eval = |u: f64, buf: &mut [f64], evals: &mut usize| -> Result<()> {
        let v = center + scale * u.sinh();
        g(v, buf)?;
        *evals += 1;
        let jac = (scale * u.cosh()).ln();
        for x in buf.iter_mut() {
            if x.is_nan() {
                return Err(Error::NoConvergence(format!("integrand is NaN at v={v}")));
            }
            *x += jac;
        }
        Ok(())
    };

    // Level 0: walk outward from the center until terms are negligible.
    let h0 = 0.5;
    let mut peak = f64::NEG_INFINITY;
    eval(0.0, &mut buf, &mut evals)?;
    for j in 0..dim {
        terms[j].push(buf[j]);
    }
    peak = peak.max(buf[0]);
    let mut bounds = [0.0f64; 2];
    for (side, sign) in [1.0f64, -1.0].iter().enumerate() {
        let mut prev = buf[0];
        let mut step = 1;
        loop {
            let u = sign * step as f64 * h0;
            if u.abs() > U_MAX {
                break;
            }
            eval(u, &mut buf, &mut evals)?;
            for j in 0..dim {
                terms[j].push(buf[j]);
            }
            peak = peak.max(buf[0]);
            bounds[side] = u;
            let small = buf[0] < peak - NEGLIGIBLE;
            if step >= 2 && small && buf[0] <= prev {
                break;
            }
            prev = buf[0];
            step += 1;
        }
    }
    let (u_hi, u_lo) = (bounds[0], bounds[1]);

    let sum_level = |terms: &Vec<Vec<f64>>, h: f64| -> Vec<f64> {
        terms.iter().map(|t| log_sum_exp(t) + h.ln()).collect()
    };
    let mut h = h0;
    let mut prev = sum_level(&terms, h);
    let mut level = 0;
    loop {
        level += 1;
        h *= 0.5;
        let mut u = u_lo + h;
        while u < u_hi {
            eval(u, &mut buf, &mut evals)?;
            for j in 0..dim {
                terms[j].push(buf[j]);
            }
            u += 2.0 * h;
        }
        if evals > max_evals {
            return Err(Error::NoConvergence(format!(
                "quadrature budget of {max_evals} evaluations exhausted"
            )));
        }
        let cur = sum_level(&terms, h);
        let mut worst: f64 = 0.0;
        for j in 0..dim {
            let d = rel_diff_ln(cur[j], prev[j]);
            worst = worst.max(d);
        }
        prev = cur;
        if (level >= 2 && worst <= tol) || level >= MAX_LEVEL {
            if worst > tol.max(1e-7) {
                return Err(Error::NoConvergence(format!(
                    "double-exponential rule stalled at relative change {worst:.2e}"
                )));
            }
            return Ok(prev
                .iter()
                .map(|&l| LnQuad { ln_value: l, rel_err: worst, evals })
                .collect());
        }
    }
}

fn rel_diff_ln(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return 0.0;
    }
    if a.is_infinite() || b.is_infinite() {
        return f64::INFINITY;
    }
    (a - b).abs().min(700.0).exp_m1()
}

/// Single-integrand form of [`ln_integrate_line_multi`].
pub fn ln_integrate_line<F>(
    mut g: F,
    center: f64,
    scale: f64,
    tol: f64,
    max_evals: usize,
) -> Result<LnQuad>
where
    F: FnMut(f64) -> Result<f64>,
{
    let r = ln_integrate_line_multi(
        1,
        |v, out| {
            out[0] = g(v)?;
            Ok(())
        },
        center,
        scale,
        tol,
        max_evals,
    )?;
    Ok(r[0])
}

/// Bisection for a sign change of a decreasing-at-infinity derivative.
pub(crate) fn bisect_root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Maximizer of a unimodal `f` on `[lo, hi]` and the curvature scale
/// `1 / sqrt(-f'')` there, clamped to `[0.01, 50]`.
///
/// Searches uphill from `v0` with doubling steps, then narrows the bracket
/// by golden-section search.
pub(crate) fn line_mode<F>(mut f: F, v0: f64, lo: f64, hi: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let v0 = v0.clamp(lo, hi);
    let f0 = f(v0)?;
    let step0 = 0.5;
    let up = f((v0 + step0).min(hi))?;
    let dir = if up >= f0 { 1.0 } else { -1.0 };
    let (mut a, mut b);
    let mut prev_v = v0;
    let mut prev_f = f0;
    let mut step = step0;
    loop {
        let v = (prev_v + dir * step).clamp(lo, hi);
        let fv = f(v)?;
        if fv < prev_f || v == lo || v == hi {
            a = (prev_v - dir * step).clamp(lo, hi);
            b = v;
            break;
        }
        prev_v = v;
        prev_f = fv;
        step *= 2.0;
    }
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - gr * (b - a);
    let mut x2 = a + gr * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..100 {
        if b - a < 1e-7 * (1.0 + a.abs().min(b.abs())) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = f(x1)?;
        }
    }
    let v = 0.5 * (a + b);
    let h = 1e-3;
    let fm = f(v)?;
    let c = -(f(v + h)? - 2.0 * fm + f(v - h)?) / (h * h);
    let scale = if c > 0.0 && c.is_finite() { (1.0 / c.sqrt()).clamp(0.01, 50.0) } else { 1.0 };
    Ok((v, scale))
}

/// Log-integrand of the beta-type kernel in the logistic variable
/// `s = logistic(v)`, including the Jacobian `s(1-s)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BetaKernel {
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub ln_zc: f64,
    pub ln_zsum: f64,
}

impl BetaKernel {
    pub fn new(alpha: f64, beta: f64, a: f64, z: f64, zc: f64) -> Self {
        BetaKernel { alpha, beta, a, ln_zc: zc.ln(), ln_zsum: (z + zc).ln() }
    }

    /// `ln s`, `ln(1-s)` and `ln(zc + z s)` at `v`.
    #[inline]
    pub fn parts(&self, v: f64) -> (f64, f64, f64) {
        let sp = softplus(v);
        let ln_s = v - sp;
        let ln_1ms = -sp;
        let ln_lin = log_add_exp(self.ln_zc, v + self.ln_zsum) - sp;
        (ln_s, ln_1ms, ln_lin)
    }

    fn dlog(&self, v: f64) -> f64 {
        let s = logistic(v);
        let q = logistic(v + self.ln_zsum - self.ln_zc);
        self.alpha * (1.0 - s) - self.beta * s - self.a * (q - s)
    }

    fn d2log(&self, v: f64) -> f64 {
        let s = logistic(v);
        let q = logistic(v + self.ln_zsum - self.ln_zc);
        -(self.alpha + self.beta) * s * (1.0 - s) - self.a * (q * (1.0 - q) - s * (1.0 - s))
    }

    /// Mode and curvature scale of the log-integrand.
    pub fn center(&self) -> (f64, f64) {
        let v0 = bisect_root(|v| self.dlog(v), -745.0, 745.0);
        let c = -self.d2log(v0);
        let scale = if c > 0.0 { (1.0 / c.sqrt()).clamp(0.01, 50.0) } else { 1.0 };
        (v0, scale)
    }
}

/// `ln ∫_0^1 s^{alpha-1+j} (1-s)^{beta-1} (zc + z s)^{-a} ds` for
/// `j = 0..moments`, where `zc = 1 - z` is passed separately so that it
/// keeps full relative precision when `z` is close to one.
pub fn ln_beta_kernel(
    alpha: f64,
    beta: f64,
    a: f64,
    z: f64,
    zc: f64,
    moments: usize,
    tol: f64,
) -> Result<Vec<LnQuad>> {
    if !(alpha > 0.0 && beta > 0.0 && a >= 0.0 && z >= 0.0 && zc > 0.0) {
        return Err(Error::DomainError(format!(
            "beta kernel needs alpha,beta>0, a>=0, z>=0, zc>0 (got {alpha},{beta},{a},{z},{zc})"
        )));
    }
    let k = BetaKernel::new(alpha, beta, a, z, zc);
    let (v0, scale) = k.center();
    ln_integrate_line_multi(
        moments + 1,
        |v, out| {
            let (ls, l1, ll) = k.parts(v);
            let base = k.alpha * ls + k.beta * l1 - k.a * ll;
            for (j, o) in out.iter_mut().enumerate() {
                *o = base + j as f64 * ls;
            }
            Ok(())
        },
        v0,
        scale,
        tol,
        1_000_000,
    )
}

/// Gray-code Sobol sequence with Joe and Kuo direction numbers.
#[derive(Debug, Clone)]
pub struct Sobol {
    dirs: Vec<[u32; 32]>,
    state: Vec<u32>,
    index: u32,
}

// (degree, polynomial coefficient bits, initial direction numbers)
const JOE_KUO: [(u32, u32, &[u32]); 20] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
];

impl Sobol {
    /// Largest supported dimension.
    pub const MAX_DIM: usize = JOE_KUO.len() + 1;

    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > Self::MAX_DIM {
            return Err(Error::DomainError(format!(
                "Sobol dimension must be in 1..={}",
                Self::MAX_DIM
            )));
        }
        let mut dirs = Vec::with_capacity(dim);
        let mut first = [0u32; 32];
        for (i, d) in first.iter_mut().enumerate() {
            *d = 1u32 << (31 - i);
        }
        dirs.push(first);
        for &(s, a, m) in JOE_KUO.iter().take(dim - 1) {
            let s = s as usize;
            let mut v = [0u32; 32];
            for i in 0..32 {
                if i < s {
                    v[i] = m[i] << (31 - i);
                } else {
                    let mut x = v[i - s] ^ (v[i - s] >> s);
                    for k in 1..s {
                        if (a >> (s - 1 - k)) & 1 == 1 {
                            x ^= v[i - k];
                        }
                    }
                    v[i] = x;
                }
            }
            dirs.push(v);
        }
        Ok(Sobol { dirs, state: vec![0; dim], index: 0 })
    }

    /// Next point as raw 32-bit integers; the first call returns the origin.
    pub fn next_raw(&mut self) -> &[u32] {
        if self.index > 0 {
            let c = (self.index - 1).trailing_ones() as usize;
            for (x, v) in self.state.iter_mut().zip(&self.dirs) {
                *x ^= v[c];
            }
        }
        self.index += 1;
        &self.state
    }
}

/// Randomized quasi-Monte Carlo estimate of `ln ∫_{(0,1)^d} f` for several
/// integrands sharing points. Each randomization applies an independent
/// digital shift; the spread across randomizations gives the error.
pub fn ln_rqmc_multi<F>(
    dim: usize,
    components: usize,
    mut ln_f: F,
    points_per_rep: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<LnQuad>>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_rep: Vec<Vec<f64>> = Vec::with_capacity(reps);
    let mut u = vec![0.0; dim];
    let mut out = vec![0.0; components];
    let mut acc: Vec<Vec<f64>> = vec![Vec::with_capacity(points_per_rep); components];
    for _ in 0..reps {
        let shift: Vec<u32> = (0..dim).map(|_| rng.next_u32()).collect();
        let mut sob = Sobol::new(dim)?;
        for a in acc.iter_mut() {
            a.clear();
        }
        for _ in 0..points_per_rep {
            let raw = sob.next_raw();
            for j in 0..dim {
                u[j] = ((raw[j] ^ shift[j]) as f64 + 0.5) / 4294967296.0;
            }
            ln_f(&u, &mut out);
            for c in 0..components {
                acc[c].push(out[c]);
            }
        }
        per_rep.push(
            acc.iter()
                .map(|a| log_sum_exp(a) - (points_per_rep as f64).ln())
                .collect(),
        );
    }
    let evals = reps * points_per_rep;
    let mut res = Vec::with_capacity(components);
    for c in 0..components {
        let lns: Vec<f64> = per_rep.iter().map(|r| r[c]).collect();
        let m = lns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            res.push(LnQuad { ln_value: m, rel_err: 0.0, evals });
            continue;
        }
        let vals: Vec<f64> = lns.iter().map(|l| (l - m).exp()).collect();
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
        let se = (var / reps as f64).sqrt();
        res.push(LnQuad { ln_value: m + mean.ln(), rel_err: se / mean, evals });
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for &x in &[-30.0, -1.0, 0.0, 0.5, 20.0] {
            let naive = (1.0f64 + f64::exp(x)).ln();
            assert!((softplus(x) - naive).abs() < 1e-14);
        }
        assert_eq!(softplus(1000.0), 1000.0);
    }

    #[test]
    fn gaussian_integral_on_line() {
        let r = ln_integrate_line(|v| Ok(-0.5 * v * v), 0.3, 1.0, 1e-13, 100_000).unwrap();
        let exact = 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((r.ln_value - exact).abs() < 1e-13);
    }

    #[test]
    fn kernel_reproduces_beta_function_at_zero() {
        let r = ln_beta_kernel(2.5, 0.7, 3.0, 0.0, 1.0, 0, 1e-13).unwrap();
        let exact = statrs::function::beta::ln_beta(2.5, 0.7);
        assert!((r[0].ln_value - exact).abs() < 1e-12);
    }

    #[test]
    fn sobol_first_dimension_is_van_der_corput() {
        let mut s = Sobol::new(3).unwrap();
        let mut seen = Vec::new();
        for _ in 0..8 {
            seen.push(s.next_raw()[0] >> 29);
        }
        seen.sort();
        assert_eq!(seen, (0..8).collect::<Vec<u32>>());
    }

    #[test]
    fn sobol_projections_are_stratified() {
        let dim = Sobol::MAX_DIM;
        let mut s = Sobol::new(dim).unwrap();
        let pts: Vec<Vec<u32>> = (0..256).map(|_| s.next_raw().to_vec()).collect();
        for j in 0..dim {
            let mut cells: Vec<u32> = pts.iter().map(|p| p[j] >> 24).collect();
            cells.sort();
            assert_eq!(cells, (0..256).collect::<Vec<u32>>(), "dimension {j}");
        }
    }
}
