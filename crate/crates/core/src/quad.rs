//! Numerical building blocks: adaptive Simpson and Gauss–Legendre quadrature,
//! bracketing root finders, golden-section search and compensated summation.
//!
//! Everything here is deterministic and allocation-light so the solvers above
//! can call it in tight loops.

use crate::error::{Error, Result};

/// Outcome of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Sum of the local Richardson error estimates.
    pub error: f64,
    pub evals: usize,
    /// False if some panel hit the recursion depth limit.
    pub converged: bool,
}

impl Quadrature {
    pub const ZERO: Quadrature = Quadrature {
        value: 0.0,
        error: 0.0,
        evals: 0,
        converged: true,
    };

    pub fn add(self, other: Quadrature) -> Quadrature {
        Quadrature {
            value: self.value + other.value,
            error: self.error + other.error,
            evals: self.evals + other.evals,
            converged: self.converged && other.converged,
        }
    }

    pub fn scale(self, c: f64) -> Quadrature {
        Quadrature {
            value: self.value * c,
            error: self.error * c.abs(),
            ..self
        }
    }
}

/// Default relative tolerance used by the distribution integrals.
pub const REL_TOL: f64 = 1e-10;

const INITIAL_PANELS: usize = 8;
const MAX_DEPTH: u32 = 40;

/// Adaptive composite Simpson on `[a, b]`.
///
/// The interval is first cut into a few panels; each panel is bisected until
/// two successive Simpson refinements agree to `rel_tol` relative to a coarse
/// estimate of the whole integral (with `abs_floor` as an absolute floor).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_floor: f64) -> Quadrature {
    if !(b > a) {
        return Quadrature::ZERO;
    }
    let h = (b - a) / INITIAL_PANELS as f64;
    let mut panels = Vec::with_capacity(INITIAL_PANELS);
    let mut coarse = 0.0;
    let mut evals = 0;
    let mut fa = f(a);
    evals += 1;
    for k in 0..INITIAL_PANELS {
        let lo = a + h * k as f64;
        let hi = if k + 1 == INITIAL_PANELS { b } else { a + h * (k + 1) as f64 };
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        let fb = f(hi);
        evals += 2;
        let s = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        coarse += s;
        panels.push((lo, hi, fa, fm, fb, s));
        fa = fb;
    }
    let tol = (rel_tol * coarse.abs()).max(abs_floor);
    let per_panel = tol / INITIAL_PANELS as f64;
    let mut out = Quadrature {
        value: 0.0,
        error: 0.0,
        evals,
        converged: true,
    };
    for (lo, hi, fa, fm, fb, s) in panels {
        let q = simpson_rec(&f, lo, hi, fa, fm, fb, s, per_panel, MAX_DEPTH);
        out = out.add(q);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Quadrature {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol || (m - a) <= f64::EPSILON * m.abs().max(1e-300) {
        return Quadrature {
            value: left + right + diff / 15.0,
            error: diff.abs() / 15.0,
            evals: 2,
            converged: depth > 0 || diff.abs() <= 15.0 * tol,
        };
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
    let r = simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    let mut q = l.add(r);
    q.evals += 2;
    q
}

/// Integrates `f` over consecutive intervals given by sorted `breaks`.
pub fn simpson_piecewise<F: Fn(f64) -> f64>(f: F, breaks: &[f64], rel_tol: f64, abs_floor: f64) -> Quadrature {
    breaks
        .windows(2)
        .map(|w| simpson(&f, w[0], w[1], rel_tol, abs_floor))
        .fold(Quadrature::ZERO, Quadrature::add)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let m = order.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = NeumaierSum::default();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(mid + half * x));
        }
        acc.total() * half
    }

    /// Composite rule over the intervals defined by sorted `breaks`.
    pub fn integrate_composite<F: Fn(f64) -> f64>(&self, f: F, breaks: &[f64]) -> f64 {
        let mut acc = NeumaierSum::default();
        for w in breaks.windows(2) {
            acc.add(self.integrate(&f, w[0], w[1]));
        }
        acc.total()
    }
}

fn legendre(order: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=order {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = order as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Bisection on a sign change of `f` in `[lo, hi]`, to absolute tolerance `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64, op: &'static str) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(Error::numeric(
            op,
            format!("no sign change on [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}"),
        ));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisection on a monotone predicate: returns the boundary point between
/// the region where `too_low(x)` holds (below) and where it fails (above).
pub fn bisect_predicate<F: FnMut(f64) -> bool>(mut too_low: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            break;
        }
        if too_low(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// Golden-section search for the maximum of a unimodal function on `[a, b]`.
/// Returns `(argmax, max)`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..300 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let (fa, fb) = (f(a), f(b));
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    if fa > best.1 {
        best = (a, fa);
    }
    if fb > best.1 {
        best = (b, fb);
    }
    best
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// `ln k!` for `k = 0..=n`.
pub fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Binomial(n, v) probability mass function evaluated through log-factorials.
pub fn binomial_pmf(n: usize, v: f64, lf: &[f64]) -> Vec<f64> {
    debug_assert!(lf.len() > n);
    if v <= 0.0 {
        let mut out = vec![0.0; n + 1];
        out[0] = 1.0;
        return out;
    }
    if v >= 1.0 {
        let mut out = vec![0.0; n + 1];
        out[n] = 1.0;
        return out;
    }
    let lv = v.ln();
    let l1v = (-v).ln_1p();
    (0..=n)
        .map(|k| (lf[n] - lf[k] - lf[n - k] + k as f64 * lv + (n - k) as f64 * l1v).exp())
        .collect()
}

/// Upper tails `P[Bin(n, v) >= j]` for `j = 0..=n`.
pub fn binomial_upper_tails(n: usize, v: f64, lf: &[f64]) -> Vec<f64> {
    let pmf = binomial_pmf(n, v, lf);
    let mut tails = vec![0.0; n + 1];
    let mut acc = 0.0;
    for j in (0..=n).rev() {
        acc += pmf[j];
        tails[j] = acc.min(1.0);
    }
    tails
}

/// `x ln x` with the continuous extension at 0.
#[inline]
pub fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `(1 - x)^k` for `x` in `[0, 1]`, computed through `ln_1p` for accuracy.
#[inline]
pub fn pow1m(x: f64, k: f64) -> f64 {
    if k == 0.0 {
        return 1.0;
    }
    if x >= 1.0 {
        return 0.0;
    }
    (k * (-x).ln_1p()).exp()
}

/// `1 - (1 - x)^k`, accurate when the result is small.
#[inline]
pub fn one_minus_pow1m(x: f64, k: f64) -> f64 {
    if x >= 1.0 {
        return if k > 0.0 { 1.0 } else { 0.0 };
    }
    -(k * (-x).ln_1p()).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_and_exponential() {
        let q = simpson(|x| x * x, 0.0, 1.0, 1e-12, 1e-300);
        assert!((q.value - 1.0 / 3.0).abs() < 1e-14);
        let q = simpson(|x| (-900.0 * x).exp(), 0.0, 1.0, 1e-12, 1e-300);
        assert!((q.value - (1.0 - (-900.0f64).exp()) / 900.0).abs() < 1e-14, "{q:?}");
        assert!(q.converged);
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let gl = GaussLegendre::new(10);
        // exact up to degree 19
        let v = gl.integrate(|x| x.powi(19) + 3.0 * x.powi(18), -1.0, 1.0);
        assert!((v - 6.0 / 19.0).abs() < 1e-14);
        let v = gl.integrate(|x| x.cos(), 0.0, 1.0);
        assert!((v - 1f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn bisection_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15, "t").unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
        assert!(bisect(|x| x * x + 1.0, 0.0, 2.0, 1e-15, "t").is_err());
    }

    #[test]
    fn golden_section_parabola() {
        let (x, fx) = golden_max(|x| -(x - 0.3) * (x - 0.3) + 2.0, 0.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((fx - 2.0).abs() < 1e-12);
    }

    #[test]
    fn binomial_tails_match_direct() {
        let lf = log_factorials(6);
        let t = binomial_upper_tails(6, 0.3, &lf);
        assert!((t[0] - 1.0).abs() < 1e-15);
        assert!((t[1] - (1.0 - 0.7f64.powi(6))).abs() < 1e-15);
        assert!((t[6] - 0.3f64.powi(6)).abs() < 1e-17);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s: NeumaierSum = [1.0, 1e100, 1.0, -1e100].into_iter().collect();
        assert_eq!(s.total(), 2.0);
    }
}
