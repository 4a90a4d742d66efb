//! The clairvoyant benchmark v(OPT): knows all values, not the disruptions,
//! and collects the top `min(D-1, n)` order statistics plus `ζ·X_(D)` when `D ≤ n`.

use rand::Rng;
use serde::Serialize;

use crate::dist::Instance;
use crate::error::{Error, Result};
use crate::mc::{self, Estimate, McConfig};
use crate::quad::{self, NeumaierSum};

/// Which of the two equivalent integral forms produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Representation {
    /// `∫_0^1 F^{-1}(1-q) g_n(p, q) dq`.
    QuantileIntegral,
    /// `∫ (B_n(p, v) + ζ[1 - (1 - vp)^n]) d(-F^{-1}(1-v))`, with the order-statistics kernel.
    OrderStatistics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptValueBreakdown {
    pub value: f64,
    pub by_formula: Representation,
    pub quadrature_error_estimate: f64,
}

/// `n (1 - (1-ζ) p) (1 - pq)^{n-1}`.
pub fn g_n(p: f64, q: f64, n: usize, zeta: f64) -> f64 {
    n as f64 * (1.0 - (1.0 - zeta) * p) * quad::pow1m(p * q, (n - 1) as f64)
}

/// Index beyond which geometric tail terms `(1-p)^j` fall below 1e-14.
pub fn geometric_truncation(p: f64) -> usize {
    ((1e-14f64).ln() / (-p).ln_1p()).ceil().max(1.0) as usize
}

/// `E[min{Bin(n, v), D - 1, n}]` with `D ~ Geometric(p)`, by a double sum over
/// the binomial support and the truncated geometric support.
pub fn b_n(p: f64, v: f64, n: usize) -> f64 {
    let lf = quad::log_factorials(n);
    let pmf = quad::binomial_pmf(n, v, &lf);
    let expected_min = |m: usize| -> f64 {
        pmf.iter()
            .enumerate()
            .map(|(k, &w)| w * k.min(m) as f64)
            .collect::<NeumaierSum>()
            .total()
    };
    let d_max = (n + 1).min(geometric_truncation(p) + 1);
    let mut acc = NeumaierSum::default();
    let mut pd = p; // P(D = d)
    for d in 1..=d_max {
        acc.add(pd * expected_min(d - 1));
        pd *= 1.0 - p;
    }
    // P(D > d_max) = (1-p)^{d_max}; beyond n+1 the minimum is Bin itself
    acc.add((1.0 - p).powi(d_max as i32) * expected_min(d_max));
    acc.total()
}

/// `B_n(p, v) = Σ_j P[Bin(n, v) ≥ j] (1-p)^j`, truncated at the geometric index.
pub fn b_n_tail(p: f64, v: f64, n: usize, lf: &[f64]) -> f64 {
    let tails = quad::binomial_upper_tails(n, v, lf);
    let j_max = n.min(geometric_truncation(p));
    let mut acc = NeumaierSum::default();
    let mut w = 1.0;
    for &t in tails.iter().take(j_max + 1).skip(1) {
        w *= 1.0 - p;
        acc.add(t * w);
    }
    acc.total()
}

/// Subdivision points where `(1 - pq)^{n-1}` changes quickly.
pub fn decay_hints(p: f64, n: usize) -> Vec<f64> {
    let scale = 1.0 / (p * n as f64);
    [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
        .iter()
        .map(|k| k * scale)
        .filter(|&q| q < 1.0)
        .collect()
}

fn checked(value: f64, error: f64, by_formula: Representation) -> Result<OptValueBreakdown> {
    if !value.is_finite() || error > 1e-6 * value.abs().max(1e-12) {
        return Err(Error::numeric(
            "opt_value",
            format!("quadrature did not converge: value={value}, error estimate={error}"),
        ));
    }
    Ok(OptValueBreakdown {
        value,
        by_formula,
        quadrature_error_estimate: error,
    })
}

/// v(OPT) from the quantile integral.
pub fn opt_value(inst: &Instance) -> Result<OptValueBreakdown> {
    let (n, p, zeta) = (inst.n(), inst.p(), inst.zeta());
    let q = inst
        .dist()
        .integrate_weighted(|q| g_n(p, q, n, zeta), 0.0, 1.0, &decay_hints(p, n));
    checked(q.value, q.error, Representation::QuantileIntegral)
}

/// v(OPT) from the order-statistics form, as a Stieltjes integral of
/// `B_n(p, v) + ζ[1 - (1-vp)^n]` against the decrease of the quantile function.
pub fn opt_value_order_statistics(inst: &Instance) -> Result<OptValueBreakdown> {
    let (n, p, zeta) = (inst.n(), inst.p(), inst.zeta());
    let lf = quad::log_factorials(n);
    let h = |v: f64| b_n_tail(p, v, n, &lf) + zeta * quad::one_minus_pow1m(v * p, n as f64);
    let q = inst.dist().stieltjes(h, &decay_hints(p, n));
    checked(q.value, q.error, Representation::OrderStatistics)
}

/// Both representations; errors if they disagree beyond `rel_tol`.
pub fn opt_value_checked(inst: &Instance, rel_tol: f64) -> Result<(OptValueBreakdown, OptValueBreakdown)> {
    let a = opt_value(inst)?;
    let b = opt_value_order_statistics(inst)?;
    let scale = a.value.abs().max(b.value.abs()).max(1e-300);
    if (a.value - b.value).abs() > rel_tol * scale {
        return Err(Error::numeric(
            "opt_value",
            format!("representations disagree: {} vs {}", a.value, b.value),
        ));
    }
    Ok((a, b))
}

/// Draws `D ~ Geometric(p)` on `{1, 2, ...}`, capped at `cap`.
#[inline]
pub fn draw_geometric<R: Rng + ?Sized>(p: f64, cap: usize, rng: &mut R) -> usize {
    let u = 1.0 - rng.random::<f64>();
    let extra = (u.ln() / (-p).ln_1p()).floor();
    if extra >= cap as f64 {
        cap
    } else {
        1 + extra as usize
    }
}

/// One realization of the clairvoyant payoff.
pub fn opt_payoff(values: &mut [f64], d: usize, zeta: f64) -> f64 {
    let n = values.len();
    if d > n {
        return values.iter().sum();
    }
    let (top, pivot, _) = values.select_nth_unstable_by(d - 1, |a, b| b.total_cmp(a));
    top.iter().sum::<f64>() + zeta * *pivot
}

/// Monte Carlo estimate of v(OPT).
pub fn opt_value_mc(inst: &Instance, cfg: &McConfig) -> Result<Estimate> {
    let (n, p, zeta) = (inst.n(), inst.p(), inst.zeta());
    let [e] = mc::estimate_with(cfg, |rng| {
        let mut values: Vec<f64> = (0..n).map(|_| inst.dist().sample(rng)).collect();
        let d = draw_geometric(p, n + 1, rng);
        [opt_payoff(&mut values, d, zeta)]
    })?;
    Ok(e)
}
