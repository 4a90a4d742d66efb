//! Maximizing the largest value selected before a disruption.
//!
//! By default the disrupting selection contributes nothing; the inclusive
//! mode counts it as selected.

use serde::Serialize;

use crate::clairvoyant::{decay_hints, geometric_truncation};
use crate::dist::Instance;
use crate::error::{Error, Result};
use crate::hillkertz;
use crate::quad::{self, NeumaierSum};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub enum Counting {
    /// Only selections that did not disrupt count.
    #[default]
    Survivors,
    /// The disrupting selection also counts.
    Inclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxVariantReport {
    pub q: f64,
    pub alg_value: f64,
    pub opt_value: f64,
    pub ratio: f64,
    pub lower_bound: f64,
}

/// `E[X_(1)]` by the quantile integral with weight `n(1-u)^{n-1}`.
fn expected_max(inst: &Instance) -> f64 {
    let n = inst.n();
    let w = |u: f64| n as f64 * quad::pow1m(u, (n - 1) as f64);
    inst.dist().integrate_weighted(w, 0.0, 1.0, &decay_hints(1.0, n)).value
}

/// `(1-p) E[X_(1)]`.
pub fn opt_value_max(inst: &Instance) -> f64 {
    (1.0 - inst.p()) * expected_max(inst)
}

pub fn opt_value_max_with(inst: &Instance, counting: Counting) -> f64 {
    match counting {
        Counting::Survivors => opt_value_max(inst),
        Counting::Inclusive => expected_max(inst),
    }
}

/// Weights `c_l` on `μ_l = E[max of l accepted draws]`, for `l = 0..=L`.
fn mu_weights(n: usize, p: f64, q: f64, counting: Counting) -> Vec<f64> {
    let lf = quad::log_factorials(n);
    let pmf = quad::binomial_pmf(n, q, &lf);
    let tails = quad::binomial_upper_tails(n, q, &lf);
    let l_max = n.min(geometric_truncation(p));
    let mut c = vec![0.0; l_max + 1];
    let mut surv = 1.0; // (1-p)^l
    for (l, cl) in c.iter_mut().enumerate() {
        let above = tails.get(l + 1).copied().unwrap_or(0.0); // P[Bin > l]
        *cl = match counting {
            Counting::Survivors => p * surv * above + surv * pmf[l],
            Counting::Inclusive if l == 0 => pmf[0],
            // disrupted at selection l after l-1 survivors, or all l accepted survive
            Counting::Inclusive => p * surv / (1.0 - p) * tails[l] + surv * pmf[l],
        };
        surv *= 1.0 - p;
    }
    c
}

/// `K(w) = Σ_l c_l (l/q)(1 - w/q)^{l-1}` on `[0, q]`.
fn kernel(c: &[f64], q: f64, w: f64) -> f64 {
    let x = (1.0 - w / q).max(0.0);
    let mut acc = NeumaierSum::default();
    let mut pow = 1.0;
    for (l, &cl) in c.iter().enumerate().skip(1) {
        acc.add(cl * l as f64 * pow);
        pow *= x;
    }
    acc.total() / q
}

fn check_quantile(q: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::domain("alg_value_max", format!("quantile must lie in (0, 1], got {q}")));
    }
    Ok(())
}

/// Value of the fixed quantile `q` under the max objective.
pub fn alg_value_max(inst: &Instance, q: f64) -> Result<f64> {
    alg_value_max_with(inst, q, Counting::Survivors)
}

pub fn alg_value_max_with(inst: &Instance, q: f64, counting: Counting) -> Result<f64> {
    check_quantile(q)?;
    let c = mu_weights(inst.n(), inst.p(), q, counting);
    let mut hints: Vec<f64> = decay_hints(1.0, inst.n()).into_iter().map(|h| h * q).collect();
    hints.push(q);
    let v = inst.dist().integrate_weighted(|w| kernel(&c, q, w), 0.0, q, &hints);
    Ok(v.value)
}

/// `W_ALG(v)`: the weight of `-dF^{-1}(1-v)` in the single-integral form.
pub fn w_alg(n: usize, p: f64, q: f64, v: f64) -> f64 {
    let nf = n as f64;
    if v >= q {
        return (1.0 - p) * quad::one_minus_pow1m(q, nf);
    }
    let s = v / q;
    (1.0 - p) * s / (p + (1.0 - p) * s) * quad::one_minus_pow1m(q * p + (1.0 - p) * v, nf)
}

/// Cross-check of [`alg_value_max`] through `∫ W_ALG(v) r(v) dv`.
pub fn alg_value_max_stieltjes(inst: &Instance, q: f64) -> Result<f64> {
    check_quantile(q)?;
    let (n, p) = (inst.n(), inst.p());
    let mut hints: Vec<f64> = decay_hints(1.0, n);
    hints.push(q);
    Ok(inst.dist().stieltjes(|v| w_alg(n, p, q, v), &hints).value)
}

/// `min{(1-(1-qp)^n)/(npq), 1-(1-q)^n}`.
pub fn lower_bound_at(n: usize, p: f64, q: f64) -> f64 {
    let nf = n as f64;
    let a = quad::one_minus_pow1m(q * p, nf) / (nf * p * q);
    a.min(quad::one_minus_pow1m(q, nf))
}

/// Best finite-n bound over `q = λ/n`; returns `(λ, bound)`.
pub fn cr_lower_bound_max(n: usize, p: f64) -> (f64, f64) {
    let nf = n as f64;
    let gap = |q: f64| quad::one_minus_pow1m(q * p, nf) / (nf * p * q) - quad::one_minus_pow1m(q, nf);
    let q = if gap(1.0) >= 0.0 {
        1.0
    } else {
        // gap falls from +∞ at 0 to negative at 1
        quad::bisect(gap, 1e-300_f64.max(1e-12 / nf), 1.0, 1e-15, "cr_lower_bound_max").unwrap_or(1.0)
    };
    (q * nf, lower_bound_at(n, p, q))
}

pub fn report(inst: &Instance, q: f64) -> Result<MaxVariantReport> {
    let alg = alg_value_max(inst, q)?;
    let opt = opt_value_max(inst);
    Ok(MaxVariantReport {
        q,
        alg_value: alg,
        opt_value: opt,
        ratio: alg / opt,
        lower_bound: lower_bound_at(inst.n(), inst.p(), q),
    })
}

/// Report at the quantile maximizing the finite-n bound.
pub fn report_at_optimal(inst: &Instance) -> Result<MaxVariantReport> {
    let (lambda, _) = cr_lower_bound_max(inst.n(), inst.p());
    report(inst, (lambda / inst.n() as f64).min(1.0))
}

/// `R(v)` for `0 < v ≤ q`.
pub fn r_ratio(n: usize, p: f64, q: f64, v: f64) -> f64 {
    let nf = n as f64;
    let s = v / q;
    s / (p + (1.0 - p) * s) * quad::one_minus_pow1m(q * p + (1.0 - p) * v, nf) / quad::one_minus_pow1m(v, nf)
}

/// `φ(t) = (1 - e^{-pt})/(pt)`.
fn phi(p: f64, t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        -(-p * t).exp_m1() / (p * t)
    }
}

fn phi_slope(p: f64, t: f64) -> f64 {
    let x = p * t;
    // d/dt (1 - e^{-x})/x = p (x e^{-x} - 1 + e^{-x}) / x²
    p * (x * (-x).exp() + (-x).exp_m1()) / (x * x)
}

/// Large-n value of `ALG^{t/n}` for `t ≤ β` on the three-point family.
pub fn hard_alg_low(a1: f64, a2: f64, p: f64, t: f64) -> f64 {
    (1.0 - p) * (a2 * -(-t).exp_m1() + a1 * phi(p, t))
}

/// Large-n value of `ALG^{t/n}` for `t ≥ β`.
pub fn hard_alg_high(a1: f64, a2: f64, beta: f64, p: f64, t: f64) -> f64 {
    let y = p * t + (1.0 - p) * beta;
    a1 * (1.0 - p) * phi(p, t) + a2 * (1.0 - p) * beta / y * -(-y).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxHardReport {
    pub t_best: f64,
    pub alg_sup_value: f64,
    pub opt_value: f64,
    pub ratio: f64,
}

fn sup_on<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> (f64, f64) {
    if hi <= lo {
        return (lo, f(lo));
    }
    let m = 1024;
    let grid: Vec<f64> = (0..=m).map(|k| lo + (hi - lo) * k as f64 / m as f64).collect();
    let k = (0..=m).max_by(|&a, &b| f(grid[a]).total_cmp(&f(grid[b]))).unwrap_or(0);
    let (a, b) = (grid[k.saturating_sub(1)], grid[(k + 1).min(m)]);
    quad::golden_max(f, a, b, 1e-13 * (1.0 + b))
}

/// Asymptotic best fixed quantile against the benchmark on the three-point family.
pub fn hard_instance_max(a1: f64, a2: f64, beta: f64, p: f64, n: usize) -> Result<MaxHardReport> {
    if !(p > 0.0 && p < 1.0) || a1 < 0.0 || a2 < 0.0 || a1 + a2 <= 0.0 || !(beta > 0.0) || beta > n as f64 {
        return Err(Error::InvalidInstance(format!(
            "need p in (0,1), a1, a2 >= 0 not both zero, 0 < beta <= n (a1={a1}, a2={a2}, beta={beta}, p={p}, n={n})"
        )));
    }
    let low = sup_on(|t| hard_alg_low(a1, a2, p, t), 0.0, beta);
    let high = sup_on(|t| hard_alg_high(a1, a2, beta, p, t), beta, beta.max(2.0 / p));
    let (t_best, alg) = if high.1 > low.1 { high } else { low };
    let opt = (1.0 - p) * (a1 + a2 * -(-beta).exp_m1());
    Ok(MaxHardReport {
        t_best,
        alg_sup_value: alg,
        opt_value: opt,
        ratio: alg / opt,
    })
}

/// Weights `(a1, a2)` with `a1 + a2 = 1` that make `λ(p)` the best threshold.
pub fn equalizing_weights(p: f64) -> Result<(f64, f64)> {
    let l = hillkertz::lambda_p(p)?;
    let ratio = (-l).exp() / -phi_slope(p, l);
    Ok((ratio / (1.0 + ratio), 1.0 / (1.0 + ratio)))
}

/// `sup_t min{1 - e^{-t}, φ(t)}`, attained at the crossing `λ(p)`.
pub fn minimax_value(p: f64) -> Result<f64> {
    Ok(-(-hillkertz::lambda_p(p)?).exp_m1())
}

/// Number of sign changes of the discrete derivative of `hard_alg_low` on a
/// 1024-point grid over `(0, β]`.
pub fn quasiconcavity_sign_changes(a1: f64, a2: f64, beta: f64, p: f64) -> usize {
    let m = 1024;
    let vals: Vec<f64> = (1..=m).map(|k| hard_alg_low(a1, a2, p, beta * k as f64 / m as f64)).collect();
    let signs: Vec<f64> = vals
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| d.abs() > 1e-15)
        .map(f64::signum)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// `(p, λ(p), 1 - e^{-λ(p)})` rows.
pub fn ratio_curve(ps: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    ps.iter()
        .map(|&p| {
            let l = hillkertz::lambda_p(p)?;
            Ok((p, l, -(-l).exp_m1()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::QuantileDistribution;
    use crate::mc::{self, FixedQuantile, McConfig};

    const ONE_MINUS_INV_E: f64 = 0.632_120_558_828_557_7;

    fn uniform(n: usize, p: f64) -> Instance {
        Instance::new(n, QuantileDistribution::uniform(0.0, 1.0).unwrap(), p, 0.0).unwrap()
    }

    #[test]
    fn opt_examples() {
        assert!((opt_value_max(&uniform(2, 0.5)) - 1.0 / 3.0).abs() < 1e-12);
        assert!((opt_value_max(&uniform(1, 0.3)) - 0.35).abs() < 1e-12);
        let pm = Instance::new(7, QuantileDistribution::point_mass(2.5).unwrap(), 0.4, 0.0).unwrap();
        assert!((opt_value_max(&pm) - 0.6 * 2.5).abs() < 1e-12);
    }

    #[test]
    fn alg_examples() {
        assert!((alg_value_max(&uniform(1, 0.3), 1.0).unwrap() - 0.35).abs() < 1e-12);
        // accept both: disruption at the first (p) gives 0; otherwise the
        // first survives and the second adds its max whether or not it disrupts
        let p = 0.5;
        let expect = (1.0 - p) * (p * 0.5 + (1.0 - p) * 2.0 / 3.0);
        assert!((alg_value_max(&uniform(2, p), 1.0).unwrap() - expect).abs() < 1e-12);
        assert!(alg_value_max(&uniform(2, p), 0.0).is_err());
    }

    #[test]
    fn inclusive_examples() {
        // inclusive: one draw always counts; with two, the max counts unless the first disrupts
        let p = 0.5;
        assert!((alg_value_max_with(&uniform(1, p), 1.0, Counting::Inclusive).unwrap() - 0.5).abs() < 1e-12);
        let expect = p * 0.5 + (1.0 - p) * 2.0 / 3.0;
        assert!((alg_value_max_with(&uniform(2, p), 1.0, Counting::Inclusive).unwrap() - expect).abs() < 1e-12);
        assert!((opt_value_max_with(&uniform(2, p), Counting::Inclusive) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_and_stieltjes_agree() {
        let dists = [
            QuantileDistribution::uniform(0.0, 1.0).unwrap(),
            QuantileDistribution::truncated_exponential(2.0, 3.0).unwrap(),
            QuantileDistribution::polynomial(1.5, 2.0).unwrap(),
            QuantileDistribution::discrete(&[(0.0, 0.5), (1.0, 0.3), (3.0, 0.2)]).unwrap(),
        ];
        for d in dists {
            for &n in &[1usize, 4, 30, 300] {
                for &p in &[0.1, 0.5, 0.9] {
                    for &q in &[0.05, 0.3, 1.0] {
                        let inst = Instance::new(n, d.clone(), p, 0.0).unwrap();
                        let a = alg_value_max(&inst, q).unwrap();
                        let b = alg_value_max_stieltjes(&inst, q).unwrap();
                        assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-12), "n={n} p={p} q={q}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn simulation_matches_both_modes() {
        let d = QuantileDistribution::truncated_exponential(1.0, 4.0).unwrap();
        let inst = Instance::new(6, d, 0.3, 0.0).unwrap();
        let q = 0.35;
        let e = mc::estimate(&inst, &FixedQuantile(q), &McConfig::new(400_000, 31)).unwrap();
        assert!(e.max.covers(alg_value_max(&inst, q).unwrap(), 4.0));
        assert!(e.max_inclusive.covers(alg_value_max_with(&inst, q, Counting::Inclusive).unwrap(), 4.0));
    }

    #[test]
    fn finite_bound_converges() {
        let target = minimax_value(0.5).unwrap();
        let (lambda, bound) = cr_lower_bound_max(10_000, 0.5);
        assert!((bound - target).abs() < 1e-3);
        assert!((lambda - hillkertz::lambda_p(0.5).unwrap()).abs() < 1e-2);
        let (_, near_one) = cr_lower_bound_max(100_000, 0.999_999);
        assert!((near_one - ONE_MINUS_INV_E).abs() < 1e-3);
    }

    #[test]
    fn bound_holds_on_fixtures() {
        let d = QuantileDistribution::polynomial(2.0, 3.0).unwrap();
        for &n in &[1usize, 3, 20, 200] {
            for &p in &[0.1, 0.5, 0.9] {
                let r = report_at_optimal(&Instance::new(n, d.clone(), p, 0.0).unwrap()).unwrap();
                assert!(r.ratio >= r.lower_bound - 1e-9, "{r:?}");
                assert!(r.lower_bound >= ONE_MINUS_INV_E - 1e-12);
            }
        }
    }

    #[test]
    fn r_is_nondecreasing() {
        for n in 1..=50 {
            for &p in &[0.1, 0.5, 0.9] {
                for &q in &[0.1, 0.5, 1.0] {
                    let mut prev = 0.0;
                    for k in 1..=200 {
                        let r = r_ratio(n, p, q, q * k as f64 / 200.0);
                        assert!(r >= prev - 1e-12, "n={n} p={p} q={q} k={k}");
                        prev = r;
                    }
                }
            }
        }
    }

    #[test]
    fn r_limits() {
        let (n, p, q) = (10usize, 0.4, 0.3);
        let lim = quad::one_minus_pow1m(q * p, n as f64) / (n as f64 * p * q);
        assert!((r_ratio(n, p, q, 1e-9) - lim).abs() < 1e-6);
        assert!((r_ratio(n, p, q, q) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equalized_hard_instance_matches_minimax() {
        for &p in &[0.2, 0.5, 0.8] {
            let (a1, a2) = equalizing_weights(p).unwrap();
            let r = hard_instance_max(a1, a2, 60.0, p, 100_000).unwrap();
            let target = minimax_value(p).unwrap();
            assert!((r.ratio - target).abs() < 1e-6, "p={p}: {r:?} vs {target}");
            assert!((r.t_best - hillkertz::lambda_p(p).unwrap()).abs() < 1e-3);
            assert!(quasiconcavity_sign_changes(a1, a2, 60.0, p) <= 1);
        }
    }

    #[test]
    fn spike_only_max_instance() {
        let r = hard_instance_max(1.0, 0.0, 10.0, 0.5, 1000).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn high_branch_decreases_past_two_over_p() {
        let (a1, a2, beta, p) = (0.3, 0.7, 1.0, 0.25);
        let mut prev = f64::INFINITY;
        for k in 0..100 {
            let t = 2.0 / p + k as f64 * 0.5;
            let v = hard_alg_high(a1, a2, beta, p, t);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn ratio_curve_is_monotone_and_in_range() {
        let ps: Vec<f64> = (1..=99).map(|k| k as f64 / 100.0).collect();
        let rows = ratio_curve(&ps).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].2 <= w[0].2 + 1e-12);
        }
        for &(p, l, r) in &rows {
            assert!(hillkertz::lambda_residual(p, l) < 1e-10);
            assert!((ONE_MINUS_INV_E - 1e-12..=1.0).contains(&r));
        }
    }
}
