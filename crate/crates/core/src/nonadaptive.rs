//! Single fixed-quantile thresholds.

use serde::Serialize;

use crate::clairvoyant;
use crate::dist::{hard_instance_dist, Instance};
use crate::error::{Error, Result};
use crate::quad::{self, NeumaierSum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonAdaptiveReport {
    pub q: f64,
    pub alg_value: f64,
    pub opt_value: f64,
    pub ratio: f64,
    pub eta_bound: f64,
}

/// `q_n = min{1, 1/(pn)}`.
pub fn optimal_quantile(n: usize, p: f64) -> f64 {
    (1.0 / (p * n as f64)).min(1.0)
}

/// Expected number of accepted and retained items, `(1-p)(1-(1-qp)^n)/p`.
pub fn a_n(n: usize, p: f64, q: f64) -> f64 {
    (1.0 - p) * quad::one_minus_pow1m(q * p, n as f64) / p
}

fn check_quantile(q: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::domain("alg_value", format!("quantile must lie in (0, 1], got {q}")));
    }
    Ok(())
}

pub fn alg_value(inst: &Instance, q: f64) -> Result<f64> {
    check_quantile(q)?;
    let (n, p, zeta) = (inst.n(), inst.p(), inst.zeta());
    let kept = a_n(n, p, q) + zeta * quad::one_minus_pow1m(q * p, n as f64);
    Ok(kept * inst.dist().pe(q) / q)
}

/// Distribution-free lower bound on `alg_value / opt_value` at quantile `q`.
pub fn eta_bound(n: usize, p: f64, q: f64) -> f64 {
    let nf = n as f64;
    let reach = quad::one_minus_pow1m(q * p, nf) / p;
    reach * (p / quad::one_minus_pow1m(p, nf)).min(1.0 / (q * nf))
}

/// `(1 - e^{-α})/α`, the accept-all guarantee when `p = α/n`.
pub fn rare_disruption_bound(alpha: f64) -> f64 {
    if alpha == 0.0 {
        1.0
    } else {
        -(-alpha).exp_m1() / alpha
    }
}

pub fn report(inst: &Instance, q: f64) -> Result<NonAdaptiveReport> {
    let alg = alg_value(inst, q)?;
    let opt = clairvoyant::opt_value(inst)?.value;
    Ok(NonAdaptiveReport {
        q,
        alg_value: alg,
        opt_value: opt,
        ratio: alg / opt,
        eta_bound: eta_bound(inst.n(), inst.p(), q),
    })
}

/// Report at `q_n`.
pub fn report_at_optimal(inst: &Instance) -> Result<NonAdaptiveReport> {
    report(inst, optimal_quantile(inst.n(), inst.p()))
}

/// Best fixed quantile for a concrete instance: log-spaced scan over
/// `[1/n², 1]` plus the distribution's breakpoints, then golden refinement.
pub fn best_fixed_quantile(inst: &Instance) -> Result<NonAdaptiveReport> {
    let n = inst.n() as f64;
    let lo = (1.0 / (n * n)).min(0.5);
    let mut grid: Vec<f64> = (0..=512)
        .map(|k| lo * (1.0 / lo).powf(k as f64 / 512.0))
        .chain(inst.dist().breakpoints().into_iter().filter(|&b| b > 0.0 && b <= 1.0))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let value = |q: f64| alg_value(inst, q).unwrap_or(0.0);
    let vals: Vec<f64> = grid.iter().map(|&q| value(q)).collect();
    let i = (0..grid.len()).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    let (mut best_q, mut best) = (grid[i], vals[i]);
    for (a, b) in [(i.saturating_sub(1), i), (i, (i + 1).min(grid.len() - 1))] {
        if b > a {
            let (q, v) = quad::golden_max(value, grid[a], grid[b], 1e-12 * grid[b]);
            if v > best {
                best_q = q;
                best = v;
            }
        }
    }
    report(inst, best_q)
}

/// Asymptotic analysis of the three-point hard family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HardInstanceReport {
    pub lambda_star: Option<f64>,
    /// Accept only the spike, accept everything in `(0, β/n]`, and `C_1` at `λ*`.
    pub candidates: [f64; 3],
    pub alg_sup_value: f64,
    pub opt_value: f64,
    pub ratio: f64,
}

/// `e^{-λp}(a1 + a1 p λ + a2 p λ²) - a1`.
pub fn critical_point_residual(a1: f64, a2: f64, p: f64, lambda: f64) -> f64 {
    (-lambda * p).exp() * (a1 + a1 * p * lambda + a2 * p * lambda * lambda) - a1
}

/// `((1+x)e^{-x} - 1)/x²`, with a series near zero.
fn scaled_gap(x: f64) -> f64 {
    if x > 0.1 {
        return ((1.0 + x) * (-x).exp() - 1.0) / (x * x);
    }
    // Σ_{k≥2} (-1)^k (1-k) x^{k-2} / k!
    let mut term = 1.0 / 2.0; // x^{k-2}/k! at k = 2
    let mut acc = 0.0;
    for k in 2..24 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * (1.0 - k as f64) * term;
        term *= x / (k + 1) as f64;
    }
    acc
}

/// Critical-point residual divided by `λ²`; same sign for `λ > 0`, no cancellation near 0.
fn scaled_residual(a1: f64, a2: f64, p: f64, lambda: f64) -> f64 {
    let x = lambda * p;
    a1 * p * p * scaled_gap(x) + a2 * p * (-x).exp()
}

/// Positive root of the critical-point equation, if a sign change is found.
pub fn critical_lambda(a1: f64, a2: f64, beta: f64, p: f64) -> Option<f64> {
    let (lo, hi) = (1e-9f64, beta.max(4.0 / p));
    let probes: Vec<f64> = (0..64).map(|k| lo * (hi / lo).powf(k as f64 / 63.0)).collect();
    let r = |l: f64| scaled_residual(a1, a2, p, l);
    probes.windows(2).find_map(|w| {
        if r(w[0]) > 0.0 && r(w[1]) <= 0.0 {
            quad::bisect(r, w[0], w[1], 1e-12, "critical_lambda").ok()
        } else {
            None
        }
    })
}

fn accept_top_value(a1: f64, a2: f64, p: f64, lambda: f64) -> f64 {
    (1.0 - p) * -(-lambda * p).exp_m1() / (lambda * p) * (a1 + a2 * lambda)
}

/// `C_2 = ⌈log_{1-p}(εp/2)⌉`.
pub fn poisson_truncation(p: f64, eps: f64) -> usize {
    ((eps * p / 2.0).ln() / (-p).ln_1p()).ceil().max(1.0) as usize
}

/// `Σ_{j=1}^{C_2} P[Poisson(β) ≥ j] (1-p)^j`.
pub fn poisson_tail_series(beta: f64, p: f64, eps: f64) -> f64 {
    let c2 = poisson_truncation(p, eps);
    let mut below = 0.0; // P[Poisson < j]
    let mut ln_pmf = -beta; // ln P[Poisson = 0]
    let mut w = 1.0;
    let mut acc = NeumaierSum::default();
    for j in 1..=c2 {
        below += ln_pmf.exp();
        ln_pmf += beta.ln() - (j as f64).ln();
        w *= 1.0 - p;
        acc.add((1.0 - below).max(0.0) * w);
    }
    acc.total()
}

/// Large-n limits of the best fixed-quantile value and of v(OPT) on the hard family.
pub fn hard_instance_report(a1: f64, a2: f64, beta: f64, p: f64, n: usize) -> Result<HardInstanceReport> {
    if !(p > 0.0 && p < 1.0) || a1 < 0.0 || a2 < 0.0 || !(beta > 0.0) || beta > n as f64 {
        return Err(Error::InvalidInstance(format!(
            "hard instance needs p in (0,1), a1, a2 >= 0 and 0 < beta <= n (a1={a1}, a2={a2}, beta={beta}, p={p}, n={n})"
        )));
    }
    let lambda_star = critical_lambda(a1, a2, beta, p);
    let c1 = match lambda_star {
        Some(l) if l <= beta => accept_top_value(a1, a2, p, l),
        _ => 0.0,
    };
    let candidates = [(1.0 - p) * a1, accept_top_value(a1, a2, p, beta), c1];
    let alg = candidates.iter().copied().fold(0.0, f64::max);
    let opt = a1 * (1.0 - p) + a2 * poisson_tail_series(beta, p, 1e-12);
    Ok(HardInstanceReport {
        lambda_star,
        candidates,
        alg_sup_value: alg,
        opt_value: opt,
        ratio: alg / opt,
    })
}

/// Best fixed quantile on the finite-n realization of the hard family.
pub fn hard_instance_finite(a1: f64, a2: f64, beta: f64, p: f64, n: usize) -> Result<NonAdaptiveReport> {
    let inst = Instance::new(n, hard_instance_dist(a1, a2, beta, n)?, p, 0.0)?;
    best_fixed_quantile(&inst)
}

/// `v / B_n(p, v)`, which is nondecreasing in `v`.
pub fn lemma_mono_ratio(n: usize, p: f64, v: f64) -> f64 {
    if v == 0.0 {
        return 1.0 / ((1.0 - p) * n as f64);
    }
    v / clairvoyant::b_n(p, v, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::QuantileDistribution;
    use proptest::prelude::*;

    const ONE_MINUS_INV_E: f64 = 0.632_120_558_828_557_7;

    fn uniform_inst(n: usize, p: f64, zeta: f64) -> Instance {
        Instance::new(n, QuantileDistribution::uniform(0.0, 1.0).unwrap(), p, zeta).unwrap()
    }

    #[test]
    fn optimal_quantile_examples() {
        assert_eq!(optimal_quantile(4, 0.5), 0.5);
        assert_eq!(optimal_quantile(1, 0.3), 1.0);
        assert!((optimal_quantile(10, 0.5) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn alg_value_examples() {
        assert!((alg_value(&uniform_inst(1, 0.5, 0.0), 1.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((alg_value(&uniform_inst(2, 0.5, 0.0), 1.0).unwrap() - 0.375).abs() < 1e-15);
        assert!((alg_value(&uniform_inst(1, 0.5, 1.0), 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(alg_value(&uniform_inst(3, 0.5, 0.0), 0.0).is_err());
        assert!(alg_value(&uniform_inst(3, 0.5, 0.0), 1.5).is_err());
    }

    #[test]
    fn alg_value_matches_simulation() {
        use crate::mc::{estimate, FixedQuantile, McConfig};
        let inst = uniform_inst(5, 0.3, 0.5);
        let q = 0.4;
        let e = estimate(&inst, &FixedQuantile(q), &McConfig::new(400_000, 5)).unwrap();
        assert!(e.sum.covers(alg_value(&inst, q).unwrap(), 4.0), "{:?}", e.sum);
    }

    #[test]
    fn eta_examples() {
        assert!((eta_bound(1, 0.5, 1.0) - 1.0).abs() < 1e-15);
        assert!((eta_bound(2, 0.5, 1.0) - 0.75).abs() < 1e-15);
        let far = eta_bound(1_000_000, 0.5, optimal_quantile(1_000_000, 0.5));
        assert!((far - ONE_MINUS_INV_E).abs() < 1e-6);
    }

    #[test]
    fn rare_disruption_examples() {
        assert!((rare_disruption_bound(1.0) - ONE_MINUS_INV_E).abs() < 1e-15);
        assert!((rare_disruption_bound(1e-9) - 1.0).abs() < 1e-9);
        assert!((rare_disruption_bound(0.5) - 0.786_938_680_574_733).abs() < 1e-12);
    }

    #[test]
    fn eta_monotone_in_n() {
        for &p in &[0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99] {
            let mut prev = f64::INFINITY;
            for n in 1..=10_000 {
                let e = eta_bound(n, p, optimal_quantile(n, p));
                assert!(e <= prev + 1e-15, "p={p}, n={n}");
                assert!(e >= ONE_MINUS_INV_E - 1e-12);
                prev = e;
            }
        }
    }

    #[test]
    fn lemma_mono_is_nondecreasing() {
        for n in 1..=50 {
            for &p in &[0.1, 0.5, 0.9] {
                let mut prev = 0.0;
                for k in 0..=200 {
                    let v = k as f64 / 200.0;
                    let r = lemma_mono_ratio(n, p, v);
                    assert!(r >= prev - 1e-12, "n={n}, p={p}, v={v}");
                    prev = r;
                }
            }
        }
    }

    #[test]
    fn critical_lambda_for_tight_weights() {
        for &p in &[0.2, 0.5, 0.8] {
            let a2 = p * (std::f64::consts::E - 2.0);
            let l = critical_lambda(1.0, a2, 200.0, p).unwrap();
            assert!((l - 1.0 / p).abs() < 1e-9, "p={p}, l={l}");
        }
        assert!(critical_lambda(0.0, 1.0, 10.0, 0.5).is_none());
    }

    #[test]
    fn scaled_residual_matches_direct_form() {
        for &(a1, a2, p) in &[(1.0, 0.3, 0.5), (2.0, 0.01, 0.9), (0.5, 1.0, 0.1)] {
            for &l in &[0.05, 0.5, 3.0, 20.0] {
                let direct = critical_point_residual(a1, a2, p, l) / (l * l);
                assert!((scaled_residual(a1, a2, p, l) - direct).abs() < 1e-9 * (1.0 + direct.abs()));
            }
        }
    }

    #[test]
    fn poisson_series_oracle() {
        // Σ_j P[Pois ≥ j] x^j = x (1 - E[x^Pois]) / (1 - x) with x = 1-p
        for &(beta, p) in &[(3.0f64, 0.5f64), (200.0, 0.5), (40.0, 0.1)] {
            let x = 1.0 - p;
            let expect = x * (1.0 - (-beta * p).exp()) / p;
            assert!((poisson_tail_series(beta, p, 1e-12) - expect).abs() < 1e-11);
        }
    }

    #[test]
    fn hard_instance_approaches_one_minus_inv_e() {
        let p = 0.5;
        let r = hard_instance_report(1.0, p * (std::f64::consts::E - 2.0), 200.0, p, 100_000).unwrap();
        assert!((r.ratio - ONE_MINUS_INV_E).abs() < 1e-3, "{r:?}");
        assert!(r.candidates[2] >= r.candidates[0] && r.candidates[2] >= r.candidates[1]);
    }

    #[test]
    fn spike_only_is_solved_exactly() {
        let r = hard_instance_report(1.0, 0.0, 5.0, 0.5, 100).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn hard_instance_rejects_bad_input() {
        assert!(hard_instance_report(1.0, 0.1, 20.0, 0.5, 10).is_err());
        assert!(hard_instance_report(1.0, 0.1, 2.0, 1.0, 10).is_err());
    }

    #[test]
    fn finite_hard_instance_is_near_asymptote() {
        let p = 0.5;
        let a2 = p * (std::f64::consts::E - 2.0);
        let r = hard_instance_finite(1.0, a2, 50.0, p, 20_000).unwrap();
        assert!(r.ratio < ONE_MINUS_INV_E + 0.01, "{r:?}");
        assert!(r.ratio >= r.eta_bound.min(ONE_MINUS_INV_E) - 1e-9);
    }

    proptest! {
        #[test]
        fn ratio_clears_eta(n in 1usize..200, p in 0.01f64..0.99, zeta in 0.0f64..=1.0, rate in 0.1f64..5.0) {
            let d = QuantileDistribution::truncated_exponential(rate, 3.0).unwrap();
            let inst = Instance::new(n, d, p, zeta).unwrap();
            let r = report_at_optimal(&inst).unwrap();
            prop_assert!(r.ratio >= r.eta_bound - 1e-9);
            prop_assert!(r.eta_bound >= ONE_MINUS_INV_E - 1e-12);
        }

        #[test]
        fn eta_independent_of_zeta(n in 1usize..100, p in 0.05f64..0.95) {
            let q = optimal_quantile(n, p);
            let lo = report(&uniform_inst(n, p, 0.0), q).unwrap();
            let hi = report(&uniform_inst(n, p, 1.0), q).unwrap();
            prop_assert_eq!(lo.eta_bound, hi.eta_bound);
            prop_assert!(hi.ratio >= hi.eta_bound - 1e-9);
        }
    }
}
