//! Reference values for the regression quantities under test.

use crate::gk::{integrate, ln_integrate};
use nalgebra::{DMatrix, DVector};

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` by the Lanczos approximation (g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `₂F₁(a, b; c; z)` by summing the defining series term by term.
pub fn hyp2f1_series(a: f64, b: f64, c: f64, z: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..200_000 {
        let k = k as f64;
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() && k > 5.0 {
            break;
        }
    }
    sum
}

/// `ln ₂F₁(a, b; c; z)` for `c > b > 0`, `z < 1`, from the Euler integral.
/// The endpoint singularities are removed by the substitutions
/// `t = w^{1/b}` on `[0, 1/2]` and `1 - t = w^{1/(c-b)}` on `[1/2, 1]`.
pub fn ln_hyp2f1_euler(a: f64, b: f64, c: f64, z: f64) -> f64 {
    let d = c - b;
    let left = ln_integrate(
        |w| {
            let t = w.powf(1.0 / b);
            (d - 1.0) * (-t).ln_1p() - a * (-z * t).ln_1p() - b.ln()
        },
        0.0,
        0.5f64.powf(b),
        1e-14,
    );
    let right = ln_integrate(
        |w| {
            let t = 1.0 - w.powf(1.0 / d);
            (b - 1.0) * t.ln() - a * (-z * t).ln_1p() - d.ln()
        },
        0.0,
        0.5f64.powf(d),
        1e-14,
    );
    let hi = left.max(right);
    let sum = hi + ((left - hi).exp() + (right - hi).exp()).ln();
    ln_gamma(c) - ln_gamma(b) - ln_gamma(d) + sum
}

/// `ln γ(s, x)`, the lower incomplete gamma function, from
/// `γ(s, x) = (x^s / s) ∫_0^1 exp(-x w^{1/s}) dw`.
pub fn ln_lower_inc_gamma(s: f64, x: f64) -> f64 {
    let (v, _) = integrate(|w| (-x * w.powf(1.0 / s)).exp(), 0.0, 1.0, 1e-14);
    s * x.ln() - s.ln() + v.ln()
}

/// `ln BF` of the hyper-g prior against the null model, integrating the
/// marginal likelihood over `v = ln g`.
pub fn ln_bf_hyper_g_oracle(a: f64, n: usize, p: usize, r2: f64) -> f64 {
    let (n, p) = (n as f64, p as f64);
    let lnf = |v: f64| {
        let g = v.exp();
        let l1g = v.max(0.0) + (-v.abs()).exp().ln_1p();
        v + 0.5 * (n - 1.0 - p - a) * l1g - 0.5 * (n - 1.0) * (1.0 + g * (1.0 - r2)).ln()
    };
    ((a - 2.0) / 2.0).ln() + ln_integrate(lnf, -80.0, 80.0, 1e-13)
}

/// Posterior mean of `g / (1 + g)` under the hyper-g prior, by integrating
/// numerator and denominator over `v = ln g`.
pub fn shrinkage_hyper_g_oracle(a: f64, n: usize, p: usize, r2: f64) -> f64 {
    let (n, p) = (n as f64, p as f64);
    let base = move |v: f64| {
        let g = v.exp();
        let l1g = v.max(0.0) + (-v.abs()).exp().ln_1p();
        v + 0.5 * (n - 1.0 - p - a) * l1g - 0.5 * (n - 1.0) * (1.0 + g * (1.0 - r2)).ln()
    };
    let den = ln_integrate(base, -80.0, 80.0, 1e-13);
    let num = ln_integrate(
        |v| {
            let l1g = v.max(0.0) + (-v.abs()).exp().ln_1p();
            base(v) + v - l1g
        },
        -80.0,
        80.0,
        1e-13,
    );
    (num - den).exp()
}

/// Log marginal density, up to factors shared with the null model, of a
/// centered response under `y ~ N(0, σ² Σ)` with `p(σ²) ∝ 1/σ²` and `n - 1`
/// effective dimensions. `Σ` is factorized explicitly.
pub fn ln_marginal_gaussian(y: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let chol = sigma.clone().cholesky().expect("covariance must be positive definite");
    let ln_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let q = y.dot(&chol.solve(y));
    let dim = n - 1.0;
    let lnf = |w: f64| {
        let s2 = w.exp();
        -0.5 * dim * s2.ln() - 0.5 * q / s2
    };
    let centre = (q / dim).ln();
    -0.5 * ln_det + ln_integrate(lnf, centre - 40.0, centre + 40.0, 1e-13)
}

/// `ln BF` of the fixed-g prior against the null model, from the Gaussian
/// marginals `N(0, σ²(I + g P_X))` and `N(0, σ² I)` of the centered response.
pub fn ln_bf_fixed_g_oracle(x: &DMatrix<f64>, y: &DVector<f64>, g: f64) -> f64 {
    let n = x.nrows();
    let xtx = x.transpose() * x;
    let proj = x * xtx.try_inverse().expect("design must have full rank") * x.transpose();
    let sigma = DMatrix::identity(n, n) + proj * g;
    ln_marginal_gaussian(y, &sigma) - ln_marginal_gaussian(y, &DMatrix::identity(n, n))
}

/// `φ(u) = ∫_0^1 s^b e^{-u r s} ds` via `s = w^{1/(b+1)}`.
pub fn phi(b: f64, ur: f64) -> f64 {
    let e = 1.0 / (b + 1.0);
    let (v, _) = integrate(|w| (-ur * w.powf(e)).exp(), 0.0, 1.0, 1e-13);
    v * e
}

/// `ln ∫_{(0,1)^k} ∏ s_i^{b_i} (ρ + Σ r_i s_i)^{-m} ds` from the gamma
/// mixture `c^{-m} = Γ(m)^{-1} ∫ u^{m-1} e^{-u c} du`, integrated over
/// `ln u`. Requires every `b_i > -1`.
pub fn ln_block_integral(b: &[f64], r: &[f64], rho: f64, m: f64) -> f64 {
    let lnf = |v: f64| {
        let u = v.exp();
        let mut acc = m * v - u * rho;
        for (bi, ri) in b.iter().zip(r) {
            acc += phi(*bi, u * ri).ln();
        }
        acc
    };
    let lo = -(1.0 / m).ln() - 60.0;
    let hi = (m / rho.max(1e-300)).ln() + 30.0;
    ln_integrate(lnf, lo, hi, 1e-11) - ln_gamma(m)
}

/// Block posterior means `E(t_j | y)` with `t_j = 1 - s_j`, by the gamma
/// mixture representation.
pub fn block_shrinkage_oracle(b: &[f64], r: &[f64], rho: f64, m: f64) -> Vec<f64> {
    let base = ln_block_integral(b, r, rho, m);
    (0..b.len())
        .map(|j| {
            let mut bj = b.to_vec();
            bj[j] += 1.0;
            1.0 - (ln_block_integral(&bj, r, rho, m) - base).exp()
        })
        .collect()
}

/// Two-block integral `∫∫ s_1^{b_1} s_2^{b_2} (ρ + r_1 s_1 + r_2 s_2)^{-m}`
/// by nested adaptive quadrature, with an extra factor `s_1^{e_1} s_2^{e_2}`.
pub fn ln_two_block_brute(b: [f64; 2], r: [f64; 2], rho: f64, m: f64, e: [f64; 2]) -> f64 {
    let lnk = |s1: f64, s2: f64| {
        (b[0] + e[0]) * s1.ln() + (b[1] + e[1]) * s2.ln() - m * (rho + r[0] * s1 + r[1] * s2).ln()
    };
    let shift = {
        let mut best = f64::NEG_INFINITY;
        for i in 1..400 {
            for j in 1..400 {
                best = best.max(lnk(i as f64 / 400.0, j as f64 / 400.0));
            }
        }
        best
    };
    let (v, _) = integrate(
        |s1| {
            if s1 <= 0.0 {
                return 0.0;
            }
            integrate(|s2| if s2 <= 0.0 { 0.0 } else { (lnk(s1, s2) - shift).exp() }, 0.0, 1.0, 1e-11).0
        },
        0.0,
        1.0,
        1e-11,
    );
    shift + v.ln()
}

/// Unnormalized log posterior density of `σ²` under the block prior,
/// `(σ²)^{-(n+1)/2} e^{-rss/2σ²} ∏ ∫_0^1 s^{b_i} e^{-ss_i s / 2σ²} ds`.
pub fn ln_sigma2_unnormalized(n: usize, rss: f64, blocks: &[(f64, f64)], s2: f64) -> f64 {
    let mut acc = -0.5 * (n as f64 + 1.0) * s2.ln() - rss / (2.0 * s2);
    for &(b, ss) in blocks {
        acc += phi(b, ss / (2.0 * s2)).ln();
    }
    acc
}

/// Maximizer of `f` over the grid `{(i/n, j/n)}` of the open unit square.
pub fn grid_argmax_2d<F: FnMut(f64, f64) -> f64>(mut f: F, n: usize) -> (f64, f64) {
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 1..n {
        for j in 1..n {
            let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
            let v = f(x, y);
            if v > best.0 {
                best = (v, x, y);
            }
        }
    }
    (best.1, best.2)
}
