//! Gaussian hypergeometric function on `c > b > 0, 0 <= z < 1` and the
//! lower incomplete gamma function.

use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::quad::ln_beta_kernel;

/// Arguments of `2F1(a, b; c; z)`.
///
/// The complement `1 - z` is stored separately so that callers holding it
/// at full precision (for example `RSS / TSS` when `R^2` is near one) do not
/// lose it to cancellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyp2F1Params {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub z: f64,
    zc: f64,
}

impl Hyp2F1Params {
    pub fn new(a: f64, b: f64, c: f64, z: f64) -> Self {
        Hyp2F1Params { a, b, c, z, zc: 1.0 - z }
    }

    /// Build from `z` and an independently computed `1 - z`.
    pub fn with_complement(a: f64, b: f64, c: f64, z: f64, one_minus_z: f64) -> Self {
        Hyp2F1Params { a, b, c, z, zc: one_minus_z }
    }

    /// `1 - z` as stored.
    pub fn one_minus_z(&self) -> f64 {
        self.zc
    }

    fn validate(&self) -> Result<()> {
        let Hyp2F1Params { a, b, c, z, zc } = *self;
        if !(a >= 0.0 && a.is_finite()) {
            return domain(format!("2F1 needs a >= 0, got {a}"));
        }
        if !(b > 0.0 && c > b && c.is_finite()) {
            return domain(format!("2F1 needs c > b > 0, got b={b}, c={c}"));
        }
        // z may round to 1 while the stored complement is still positive.
        if !(z >= 0.0 && z <= 1.0 && zc > 0.0 && zc <= 1.0) {
            return domain(format!("2F1 needs 0 <= z < 1, got z={z}, 1-z={zc}"));
        }
        if (z + zc - 1.0).abs() > 1e-12 {
            return domain(format!("inconsistent complement: z={z}, 1-z={zc}"));
        }
        Ok(())
    }
}

const SERIES_MAX_TERMS: usize = 200_000;
const SERIES_Z_MAX: f64 = 0.95;

/// Power series summed in scaled Kahan arithmetic. Returns `ln 2F1`.
pub fn ln_hyp2f1_series(p: Hyp2F1Params) -> Result<f64> {
    p.validate()?;
    let Hyp2F1Params { a, b, c, z, .. } = p;
    if z == 0.0 || a == 0.0 {
        return Ok(0.0);
    }
    // Terms are positive; `sum` and `term` are both relative to `ln_scale`.
    let mut ln_scale = 0.0f64;
    let mut sum = 1.0f64;
    let mut comp = 0.0f64;
    let mut term = 1.0f64;
    for k in 0..SERIES_MAX_TERMS {
        let kf = k as f64;
        let r = (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        term *= r;
        if term > 1e300 {
            let f = 1e-300;
            term *= f;
            sum *= f;
            comp *= f;
            ln_scale += 300.0 * std::f64::consts::LN_10;
        }
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        let next = (a + kf + 1.0) * (b + kf + 1.0) / ((c + kf + 1.0) * (kf + 2.0)) * z;
        let bound = r.max(next).max(z);
        if bound < 1.0 && term * bound / (1.0 - bound) <= 1e-17 * sum {
            return Ok(ln_scale + sum.ln());
        }
    }
    Err(Error::NoConvergence(format!(
        "2F1 series did not converge in {SERIES_MAX_TERMS} terms (a={a}, b={b}, c={c}, z={z})"
    )))
}

/// Euler integral `∫_0^1 t^{b-1}(1-t)^{c-b-1}(1-tz)^{-a} dt / B(b, c-b)`
/// evaluated by a double-exponential rule. Returns `ln 2F1`.
pub fn ln_hyp2f1_euler(p: Hyp2F1Params) -> Result<f64> {
    p.validate()?;
    let Hyp2F1Params { a, b, c, z, zc } = p;
    if z == 0.0 || a == 0.0 {
        return Ok(0.0);
    }
    // With s = 1 - t the factor 1 - tz becomes zc + z s.
    let q = ln_beta_kernel(c - b, b, a, z, zc, 0, 1e-14)?;
    Ok(q[0].ln_value - ln_beta(b, c - b))
}

/// Estimated number of series terms needed near the peak term.
fn series_cost(p: &Hyp2F1Params) -> f64 {
    (p.a.max(p.b) + 10.0) * p.z / p.one_minus_z() + 50.0
}

/// Natural logarithm of `2F1(a, b; c; z)`.
///
/// The power series is used for `z <= 0.95` when it is short; the Euler
/// integral otherwise.
pub fn ln_hyp2f1(p: Hyp2F1Params) -> Result<f64> {
    p.validate()?;
    if p.z == 0.0 || p.a == 0.0 {
        return Ok(0.0);
    }
    if p.z <= SERIES_Z_MAX && series_cost(&p) < 20_000.0 {
        match ln_hyp2f1_series(p) {
            Ok(v) => return Ok(v),
            Err(Error::NoConvergence(_)) => {}
            Err(e) => return Err(e),
        }
    }
    ln_hyp2f1_euler(p)
}

/// `2F1(a, b; c; z)` in linear space.
///
/// In the divergent regime `a + b - c > 0` arguments above `1 - 1e-12` are
/// refused; use [`hyp2f1_near1_scaled`] there.
pub fn hyp2f1(p: Hyp2F1Params) -> Result<f64> {
    p.validate()?;
    if p.a + p.b - p.c > 0.0 && p.one_minus_z() < 1e-12 {
        return Err(Error::NoConvergence(format!(
            "2F1 diverges as z -> 1 (a+b-c={}); use the scaled form",
            p.a + p.b - p.c
        )));
    }
    let v = ln_hyp2f1(p)?.exp();
    if !v.is_finite() {
        return Err(Error::NoConvergence("2F1 overflows double precision".into()));
    }
    Ok(v)
}

/// Evaluate by both the series and the Euler integral and require
/// agreement to `1e-8` relative.
pub fn hyp2f1_checked(p: Hyp2F1Params) -> Result<f64> {
    let s = ln_hyp2f1_series(p);
    let e = ln_hyp2f1_euler(p);
    match (s, e) {
        (Ok(s), Ok(e)) => {
            if (s - e).abs() > 1e-8 {
                return Err(Error::NoConvergence(format!(
                    "series and integral disagree: ln values {s} vs {e}"
                )));
            }
            Ok(e.exp())
        }
        (Ok(v), Err(_)) | (Err(_), Ok(v)) => Ok(v.exp()),
        (Err(e), Err(_)) => Err(e),
    }
}

/// `ln[(1-z)^{a+b-c} 2F1(a, b; c; z)]` for the divergent regime.
pub fn ln_hyp2f1_near1_scaled(p: Hyp2F1Params) -> Result<f64> {
    p.validate()?;
    let e = p.a + p.b - p.c;
    if !(e > 0.0) {
        return domain(format!("scaled form needs a+b-c > 0, got {e}"));
    }
    Ok(e * p.one_minus_z().ln() + ln_hyp2f1(p)?)
}

/// `(1-z)^{a+b-c} 2F1(a, b; c; z)`, which tends to
/// `Γ(a+b-c)Γ(c)/(Γ(a)Γ(b))` as `z -> 1`.
pub fn hyp2f1_near1_scaled(p: Hyp2F1Params) -> Result<f64> {
    Ok(ln_hyp2f1_near1_scaled(p)?.exp())
}

/// Limit of the scaled form at `z = 1`.
pub fn hyp2f1_near1_limit(a: f64, b: f64, c: f64) -> Result<f64> {
    let e = a + b - c;
    if !(e > 0.0 && a > 0.0 && b > 0.0 && c > 0.0) {
        return domain(format!("limit needs a+b-c > 0 and positive a,b,c (got {a},{b},{c})"));
    }
    Ok((ln_gamma(e) + ln_gamma(c) - ln_gamma(a) - ln_gamma(b)).exp())
}

/// Natural logarithm of the lower incomplete gamma function `γ(s, x)`.
///
/// Series for `x < s + 1`, Lentz continued fraction for the upper
/// function otherwise.
pub fn ln_lower_inc_gamma(s: f64, x: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) || !(x >= 0.0) {
        return domain(format!("incomplete gamma needs s > 0 and x >= 0 (s={s}, x={x})"));
    }
    if x == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if x == f64::INFINITY {
        return Ok(ln_gamma(s));
    }
    if x < s + 1.0 {
        let mut term = 1.0 / s;
        let mut sum = term;
        let mut comp = 0.0;
        let mut ap = s;
        for _ in 0..100_000 {
            ap += 1.0;
            term *= x / ap;
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            if term < sum * 1e-17 {
                return Ok(s * x.ln() - x + sum.ln());
            }
        }
        return Err(Error::NoConvergence(format!("incomplete gamma series (s={s}, x={x})")));
    }
    let lg = ln_gamma(s);
    // Γ(s, x) <= x^s e^{-x} / (x - s + 1) for x > s - 1.
    if s * x.ln() - x - (x - s + 1.0).ln() - lg < -40.0 {
        return Ok(lg);
    }
    let ln_upper = ln_upper_cf(s, x)?;
    let q = (ln_upper - lg).exp();
    Ok(lg + (-q).ln_1p())
}

fn ln_upper_cf(s: f64, x: f64) -> Result<f64> {
    let tiny = 1e-300;
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..100_000 {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() <= 2.0 * f64::EPSILON {
            return Ok(s * x.ln() - x + h.ln());
        }
    }
    Err(Error::NoConvergence(format!("incomplete gamma continued fraction (s={s}, x={x})")))
}

/// Lower incomplete gamma function `γ(s, x) = ∫_0^x t^{s-1} e^{-t} dt`.
pub fn lower_inc_gamma(s: f64, x: f64) -> Result<f64> {
    Ok(ln_lower_inc_gamma(s, x)?.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn zero_argument_is_one() {
        assert_eq!(hyp2f1(Hyp2F1Params::new(3.0, 1.0, 2.5, 0.0)).unwrap(), 1.0);
    }

    #[test]
    fn closed_forms() {
        // 2F1(1,1;2;z) = -ln(1-z)/z
        for &z in &[0.1, 0.5, 0.9, 0.99, 0.999999] {
            let v = hyp2f1(Hyp2F1Params::new(1.0, 1.0, 2.0, z)).unwrap();
            let exact = -(-z as f64).ln_1p() / z;
            assert!(rel(v, exact) < 1e-11, "z={z}: {v} vs {exact}");
        }
        // 2F1(a,b;b;z) = (1-z)^{-a}, approached through c slightly above b
        let v = hyp2f1(Hyp2F1Params::new(2.5, 1.0, 1.0 + 1e-9, 0.3)).unwrap();
        assert!(rel(v, 0.7f64.powf(-2.5)) < 1e-8);
    }

    #[test]
    fn series_matches_integral_example() {
        let p = Hyp2F1Params::new(4.5, 1.0, 2.5, 0.5);
        let s = ln_hyp2f1_series(p).unwrap();
        let e = ln_hyp2f1_euler(p).unwrap();
        assert!((s - e).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(hyp2f1(Hyp2F1Params::new(1.0, 2.0, 2.0, 0.5)).is_err());
        assert!(hyp2f1(Hyp2F1Params::new(1.0, 1.0, 2.0, 1.0)).is_err());
        assert!(hyp2f1(Hyp2F1Params::new(1.0, 1.0, 2.0, -0.1)).is_err());
        assert!(hyp2f1_near1_scaled(Hyp2F1Params::new(1.0, 1.0, 3.0, 0.5)).is_err());
        assert!(lower_inc_gamma(0.0, 1.0).is_err());
    }

    #[test]
    fn divergent_regime_refuses_linear_value() {
        let p = Hyp2F1Params::with_complement(4.5, 1.0, 3.5, 1.0 - 1e-13, 1e-13);
        assert!(matches!(hyp2f1(p), Err(Error::NoConvergence(_))));
        assert!(hyp2f1_near1_scaled(p).is_ok());
    }

    #[test]
    fn near_one_limit() {
        let lim = hyp2f1_near1_limit(4.5, 1.0, 3.5).unwrap();
        let v = hyp2f1_near1_scaled(Hyp2F1Params::new(4.5, 1.0, 3.5, 0.999999)).unwrap();
        assert!(rel(v, lim) < 1e-4);
        let mut prev = f64::INFINITY;
        for &z in &[0.9, 0.99, 0.999] {
            let v = hyp2f1_near1_scaled(Hyp2F1Params::new(4.5, 1.0, 3.5, z)).unwrap();
            let d = (v - lim).abs();
            assert!(d < prev);
            prev = d;
        }
        assert_eq!(hyp2f1_near1_scaled(Hyp2F1Params::new(4.5, 1.0, 3.5, 0.0)).unwrap(), 1.0);
    }

    #[test]
    fn incomplete_gamma_closed_forms() {
        assert_eq!(lower_inc_gamma(2.0, 0.0).unwrap(), 0.0);
        for &x in &[1e-8, 0.3, 1.0, 2.0, 5.0, 40.0] {
            let v = lower_inc_gamma(1.0, x).unwrap();
            assert!(rel(v, -(-x as f64).exp_m1()) < 1e-13, "x={x}");
            // γ(2,x) = 1 - (1+x)e^{-x}
            let v2 = lower_inc_gamma(2.0, x).unwrap();
            let e2 = 1.0 - (1.0 + x) * (-x).exp();
            if x > 1e-3 {
                assert!(rel(v2, e2) < 1e-12, "x={x}: {v2} vs {e2}");
            }
        }
        let big = ln_lower_inc_gamma(3.5, 1e6).unwrap();
        assert!((big - ln_gamma(3.5)).abs() < 1e-14);
    }
}
