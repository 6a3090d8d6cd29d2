//! Double-double arithmetic for normalization checks.

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DD {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DD {
    pub fn from(x: f64) -> Self {
        DD { hi: x, lo: 0.0 }
    }

    pub fn add(self, o: DD) -> DD {
        let (s, e) = two_sum(self.hi, o.hi);
        let e = e + self.lo + o.lo;
        let (hi, lo) = two_sum(s, e);
        DD { hi, lo }
    }

    pub fn mul(self, o: DD) -> DD {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + self.hi * o.lo + self.lo * o.hi;
        let (hi, lo) = two_sum(p, e);
        DD { hi, lo }
    }

    pub fn div(self, o: DD) -> DD {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul(DD::from(-q1)));
        let q2 = r.hi / o.hi;
        let (hi, lo) = two_sum(q1, q2);
        DD { hi, lo }
    }

    /// `e^x` for `x <= 0` by argument halving and a Taylor series.
    pub fn exp(x: DD) -> DD {
        let k = 20;
        let scale = (1u64 << k) as f64;
        let y = DD { hi: x.hi / scale, lo: x.lo / scale };
        let mut term = DD::from(1.0);
        let mut sum = DD::from(1.0);
        for i in 1..30 {
            term = term.mul(y).div(DD::from(i as f64));
            sum = sum.add(term);
        }
        for _ in 0..k {
            sum = sum.mul(sum);
        }
        sum
    }
}

/// Posterior model probabilities `p_i e^{l_i} / Σ_j p_j e^{l_j}` in
/// double-double arithmetic, for finite log weights.
pub fn normalize_dd(log_w: &[f64], prior: &[f64]) -> Vec<f64> {
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let terms: Vec<DD> = log_w
        .iter()
        .zip(prior)
        .map(|(&l, &p)| DD::exp(DD::from(l).add(DD::from(-m))).mul(DD::from(p)))
        .collect();
    let mut total = DD::from(0.0);
    for t in &terms {
        total = total.add(*t);
    }
    terms.iter().map(|t| t.div(total).hi).collect()
}
