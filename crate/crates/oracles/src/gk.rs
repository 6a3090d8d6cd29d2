//! Globally adaptive 15-point Gauss-Kronrod quadrature.

use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn qk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    val: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.partial_cmp(&o.err).unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// `∫_a^b f` with error estimate, bisecting the worst piece until the
/// total error is below `rel_tol * |value|` or 20000 pieces are used.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> (f64, f64) {
    integrate_pieces(f, a, b, rel_tol, 8)
}

/// As [`integrate`], starting from `init` equal pieces.
pub fn integrate_pieces<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    init: usize,
) -> (f64, f64) {
    let mut heap = BinaryHeap::new();
    let (mut total, mut err) = (0.0, 0.0);
    for i in 0..init {
        let lo = a + (b - a) * i as f64 / init as f64;
        let hi = a + (b - a) * (i + 1) as f64 / init as f64;
        let (val, e) = qk15(&mut f, lo, hi);
        total += val;
        err += e;
        heap.push(Piece { a: lo, b: hi, val, err: e });
    }
    for _ in 0..20000 {
        if err <= rel_tol * f64::abs(total) || err == 0.0 {
            break;
        }
        let worst = heap.pop().unwrap();
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = qk15(&mut f, worst.a, mid);
        let (v2, e2) = qk15(&mut f, mid, worst.b);
        total += v1 + v2 - worst.val;
        err += e1 + e2 - worst.err;
        heap.push(Piece { a: worst.a, b: mid, val: v1, err: e1 });
        heap.push(Piece { a: mid, b: worst.b, val: v2, err: e2 });
    }
    let mut pieces: Vec<Piece> = heap.into_vec();
    pieces.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap());
    (pieces.iter().map(|p| p.val).sum(), pieces.iter().map(|p| p.err).sum())
}

/// `ln ∫_a^b exp(lnf)`. A 4001-point grid locates the maximum and the
/// window where `lnf` is within 80 of it; that window is then integrated
/// in linear space after shifting by the maximum.
pub fn ln_integrate<F: FnMut(f64) -> f64>(mut lnf: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let n = 4000;
    let xs: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| lnf(x)).collect();
    let shift = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return shift;
    }
    let first = vals.iter().position(|&v| v > shift - 80.0).unwrap();
    let last = vals.iter().rposition(|&v| v > shift - 80.0).unwrap();
    let lo = xs[first.saturating_sub(1)];
    let hi = xs[(last + 1).min(n)];
    let (val, _) = integrate_pieces(|x| (lnf(x) - shift).exp(), lo, hi, rel_tol, 64);
    shift + val.ln()
}

/// Location of the maximum of `f` over an `n`-point grid on `[a, b]`.
pub fn grid_argmax<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    let mut best = (f64::NEG_INFINITY, a);
    for i in 0..=n {
        let x = a + (b - a) * i as f64 / n as f64;
        let v = f(x);
        if v > best.0 {
            best = (v, x);
        }
    }
    best.1
}
