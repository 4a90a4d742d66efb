//! Exact dynamic programming on finite supports, a brute-force oracle, and the
//! quantile-space Bellman recursion behind the adaptive upper bound.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{upper_bound_dist, upper_bound_x_end, QuantileDistribution};
use crate::error::{Error, Result};
use crate::hillkertz::{self, OdeSolution};
use crate::mc::{Environment, McRng, Observation};
use crate::quad::{self, NeumaierSum};

/// Brute-force enumeration limit on the number of leaves.
pub const STATE_GUARD: f64 = 1e7;

/// Relative tolerance under which two threshold choices count as tied.
const TIE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub value: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DiscreteFile {
    n: usize,
    p: f64,
    zeta: f64,
    support: Vec<SupportPoint>,
}

/// `n` i.i.d. draws from a finite support, sorted ascending.
#[derive(Debug, Clone)]
pub struct DiscreteInstance {
    n: usize,
    p: f64,
    zeta: f64,
    support: Vec<SupportPoint>,
    dist: QuantileDistribution,
}

impl DiscreteInstance {
    pub fn new(n: usize, support: Vec<SupportPoint>, p: f64, zeta: f64) -> Result<Self> {
        if n == 0 || !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&zeta) {
            return Err(Error::InvalidInstance(format!(
                "need n >= 1, p and zeta in [0, 1] (n={n}, p={p}, zeta={zeta})"
            )));
        }
        if support.is_empty() {
            return Err(Error::InvalidInstance("empty support".into()));
        }
        if support.iter().any(|s| !(s.value >= 0.0 && s.value.is_finite()) || !(s.prob > 0.0)) {
            return Err(Error::InvalidInstance("values must be finite and nonnegative, probabilities positive".into()));
        }
        if support.windows(2).any(|w| w[0].value >= w[1].value) {
            return Err(Error::InvalidInstance("support must be strictly ascending".into()));
        }
        let total: f64 = support.iter().map(|s| s.prob).collect::<NeumaierSum>().total();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInstance(format!("probabilities sum to {total}, not 1")));
        }
        let pairs: Vec<(f64, f64)> = support.iter().map(|s| (s.value, s.prob)).collect();
        let dist = QuantileDistribution::discrete(&pairs)?;
        Ok(Self {
            n,
            p,
            zeta,
            support,
            dist,
        })
    }

    /// Builds from `(value, prob)` pairs in any order.
    pub fn from_pairs(n: usize, pairs: &[(f64, f64)], p: f64, zeta: f64) -> Result<Self> {
        let mut support: Vec<SupportPoint> = pairs.iter().map(|&(value, prob)| SupportPoint { value, prob }).collect();
        support.sort_by(|a, b| a.value.total_cmp(&b.value));
        Self::new(n, support, p, zeta)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn support(&self) -> &[SupportPoint] {
        &self.support
    }

    pub fn dist(&self) -> &QuantileDistribution {
        &self.dist
    }

    /// `1 - p + pζ`, the expected fraction of an accepted value that is kept.
    pub fn retention(&self) -> f64 {
        1.0 - self.p + self.p * self.zeta
    }

    pub fn to_json(&self) -> Result<String> {
        let f = DiscreteFile {
            n: self.n,
            p: self.p,
            zeta: self.zeta,
            support: self.support.clone(),
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: DiscreteFile = serde_json::from_str(text)?;
        Self::new(f.n, f.support, f.p, f.zeta)
    }

    /// Random instance with `n ≤ max_n` and at most `max_support` distinct values.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_n: usize, max_support: usize) -> Self {
        let n = rng.random_range(1..=max_n);
        let m = rng.random_range(1..=max_support);
        let mut values: Vec<f64> = Vec::with_capacity(m);
        while values.len() < m {
            let v = (rng.random_range(0..=40) as f64) / 4.0;
            if !values.contains(&v) {
                values.push(v);
            }
        }
        values.sort_by(f64::total_cmp);
        let weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        let mut support: Vec<SupportPoint> = values
            .iter()
            .zip(&weights)
            .map(|(&value, &w)| SupportPoint { value, prob: w / total })
            .collect();
        // absorb rounding so the masses sum to 1
        let rest: f64 = support[..m - 1].iter().map(|s| s.prob).sum();
        support[m - 1].prob = 1.0 - rest;
        let p = rng.random_range(0.05..0.95);
        let zeta = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..=1.0) };
        Self::new(n, support, p, zeta).expect("random instance is valid")
    }
}

impl Environment for DiscreteInstance {
    fn horizon(&self) -> usize {
        self.n
    }

    fn disruption(&self) -> f64 {
        self.p
    }

    fn recovery(&self) -> f64 {
        self.zeta
    }

    fn observe(&self, _step: usize, rng: &mut McRng) -> Observation {
        let (value, quantile) = self.dist.sample_with_quantile(rng);
        Observation { value, quantile }
    }
}

/// Backward-induction solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpSolution {
    /// `D_1, …, D_{n+1}` with `D_{n+1} = 0`.
    pub values: Vec<f64>,
    /// Index into the ascending support: step `i` accepts values at or above `support[τ_i]`.
    /// An index equal to the support size rejects everything.
    pub thresholds: Vec<usize>,
}

impl DpSolution {
    pub fn d1(&self) -> f64 {
        self.values[0]
    }

    /// Threshold values, `+∞` for reject-all.
    pub fn threshold_values(&self, inst: &DiscreteInstance) -> Vec<f64> {
        self.thresholds
            .iter()
            .map(|&k| inst.support.get(k).map_or(f64::INFINITY, |s| s.value))
            .collect()
    }
}

/// Value of one step when accepting exactly the values with index `≥ k`.
fn cut_values(inst: &DiscreteInstance, next: f64) -> Vec<f64> {
    let b = inst.retention();
    let m = inst.support.len();
    // suffix sums of π_j (b v_j - p D_{i+1})
    let mut out = vec![next; m + 1];
    let mut gain = NeumaierSum::default();
    for k in (0..m).rev() {
        let s = inst.support[k];
        gain.add(s.prob * (b * s.value - inst.p * next));
        out[k] = next + gain.total();
    }
    out
}

pub fn solve(inst: &DiscreteInstance) -> DpSolution {
    let n = inst.n;
    let mut values = vec![0.0; n + 1];
    let mut thresholds = vec![0; n];
    for i in (0..n).rev() {
        let cuts = cut_values(inst, values[i + 1]);
        let mut best = 0;
        for (k, &v) in cuts.iter().enumerate().skip(1) {
            if v > cuts[best] + TIE_TOL * cuts[best].abs().max(f64::MIN_POSITIVE) {
                best = k;
            }
        }
        thresholds[i] = best;
        values[i] = cuts[best];
    }
    DpSolution { values, thresholds }
}

/// Acceptance probability per support point, for each step.
pub type AcceptanceTable = Vec<Vec<f64>>;

/// Deterministic threshold policy as an acceptance table.
pub fn threshold_acceptance(inst: &DiscreteInstance, thresholds: &[usize]) -> Result<AcceptanceTable> {
    if thresholds.len() != inst.n {
        return Err(Error::InvalidSchedule(format!(
            "{} thresholds for horizon {}",
            thresholds.len(),
            inst.n
        )));
    }
    let m = inst.support.len();
    Ok(thresholds
        .iter()
        .map(|&k| (0..m).map(|j| if j >= k { 1.0 } else { 0.0 }).collect())
        .collect())
}

/// Acceptance probabilities of "accept iff the draw lies in the top `q` mass",
/// with a partially accepted boundary atom.
pub fn fixed_quantile_acceptance(inst: &DiscreteInstance, q: f64) -> Vec<f64> {
    let mut above = 0.0;
    let mut out = vec![0.0; inst.support.len()];
    for (j, s) in inst.support.iter().enumerate().rev() {
        out[j] = ((q - above) / s.prob).clamp(0.0, 1.0);
        above += s.prob;
    }
    out
}

fn check_table(inst: &DiscreteInstance, table: &AcceptanceTable) -> Result<()> {
    let m = inst.support.len();
    if table.len() != inst.n || table.iter().any(|row| row.len() != m || row.iter().any(|a| !(0.0..=1.0).contains(a))) {
        return Err(Error::InvalidSchedule(format!(
            "acceptance table must be {} rows of {} probabilities",
            inst.n, m
        )));
    }
    Ok(())
}

/// Exact value of a (possibly randomized) policy by backward recursion.
pub fn policy_value_exact(inst: &DiscreteInstance, table: &AcceptanceTable) -> Result<f64> {
    check_table(inst, table)?;
    let b = inst.retention();
    let mut v = 0.0;
    for row in table.iter().rev() {
        let mut acc = NeumaierSum::default();
        for (s, &a) in inst.support.iter().zip(row) {
            acc.add(s.prob * (a * (b * s.value + (1.0 - inst.p) * v) + (1.0 - a) * v));
        }
        v = acc.total();
    }
    Ok(v)
}

/// Exact value of a threshold policy by enumerating every value sequence and
/// every disruption outcome.
pub fn brute_force_policy_value(inst: &DiscreteInstance, thresholds: &[usize]) -> Result<f64> {
    brute_force_table(inst, &threshold_acceptance(inst, thresholds)?)
}

/// As [`brute_force_policy_value`] for a randomized acceptance table.
pub fn brute_force_table(inst: &DiscreteInstance, table: &AcceptanceTable) -> Result<f64> {
    check_table(inst, table)?;
    let states: f64 = table
        .iter()
        .map(|row| row.iter().map(|&a| (a > 0.0) as u32 as f64 + (a < 1.0) as u32 as f64).sum::<f64>())
        .product();
    if states > STATE_GUARD {
        return Err(Error::StateSpace {
            states,
            guard: STATE_GUARD,
        });
    }
    let parts: Vec<f64> = (0..inst.support.len())
        .into_par_iter()
        .map(|j| {
            let mut acc = NeumaierSum::default();
            branch(inst, table, 0, j, 1.0, 0.0, &mut acc);
            acc.total()
        })
        .collect();
    Ok(parts.into_iter().collect::<NeumaierSum>().total())
}

/// Step `i` draws support index `j` with path weight `w` and banked payoff `paid`.
fn branch(inst: &DiscreteInstance, table: &AcceptanceTable, i: usize, j: usize, w: f64, paid: f64, acc: &mut NeumaierSum) {
    let s = inst.support[j];
    let w = w * s.prob;
    let a = table[i][j];
    if a > 0.0 {
        // disruption ends the run with the recovered fraction
        acc.add(w * a * inst.p * (paid + inst.zeta * s.value));
        continue_from(inst, table, i + 1, w * a * (1.0 - inst.p), paid + s.value, acc);
    }
    if a < 1.0 {
        continue_from(inst, table, i + 1, w * (1.0 - a), paid, acc);
    }
}

fn continue_from(inst: &DiscreteInstance, table: &AcceptanceTable, i: usize, w: f64, paid: f64, acc: &mut NeumaierSum) {
    if w == 0.0 {
        return;
    }
    if i == inst.n {
        acc.add(w * paid);
        return;
    }
    for j in 0..inst.support.len() {
        branch(inst, table, i, j, w, paid, acc);
    }
}

/// `D_i = sup_q { b ∫_0^q F^{-1}(1-u) du + (1 - pq) D_{i+1} }` for a general distribution,
/// returning `D_1, …, D_{n+1}`.
pub fn quantile_bellman(dist: &QuantileDistribution, n: usize, p: f64, zeta: f64) -> Vec<f64> {
    let b = 1.0 - p + p * zeta;
    let mut values = vec![0.0; n + 1];
    for i in (0..n).rev() {
        let next = values[i + 1];
        let obj = |q: f64| b * dist.pe(q) + (1.0 - p * q) * next;
        let (_, best) = quad::golden_max(obj, 0.0, 1.0, 1e-14);
        if cfg!(debug_assertions) {
            let sweep = (0..=128).map(|k| obj(k as f64 / 128.0)).fold(f64::MIN, f64::max);
            debug_assert!(best >= sweep - 1e-9 * sweep.abs().max(1.0), "golden search missed the maximum");
        }
        values[i] = best;
    }
    values
}

/// `D_1^ε` on the adaptive upper-bound instance.
pub fn bellman_upper_bound(eps: f64, p: f64, n: usize, y: &OdeSolution) -> Result<f64> {
    Ok(bellman_upper_bound_values(eps, p, n, y)?[0])
}

/// `D_1^ε, …, D_{n+1}^ε`.
pub fn bellman_upper_bound_values(eps: f64, p: f64, n: usize, y: &OdeSolution) -> Result<Vec<f64>> {
    let dist = upper_bound_dist(eps, p, n, 0.0, y)?;
    Ok(quantile_bellman(&dist, n, p, 0.0))
}

/// `v^ε(OPT) = θ + ∫_{y(1-ε)}^1 (1 - (1 + ln w / n)^n) / f(w)² dw`, the benchmark on the
/// upper-bound instance written in the level variable `w = y(s)`.
pub fn opt_value_eps(eps: f64, p: f64, n: usize, y: &OdeSolution) -> Result<f64> {
    let x_end = upper_bound_x_end(eps, y)?;
    if (n as f64) < (x_end / p).ceil() {
        return Err(Error::InvalidInstance(format!("n={n} is below the floor for eps={eps}, p={p}")));
    }
    let (beta, nf) = (y.beta(), n as f64);
    let y_end = (-x_end).exp();
    let integrand = |w: f64| {
        let f = hillkertz::rhs(w, beta);
        quad::one_minus_pow1m(-w.ln() / nf, nf) / (f * f)
    };
    let breaks: Vec<f64> = [y_end, 1e-6, 1e-3, 0.1, 0.5, 1.0]
        .into_iter()
        .filter(|&b| b >= y_end)
        .collect();
    let q = quad::simpson_piecewise(integrand, &breaks, 1e-12, 1e-300);
    Ok(y.theta() + q.value)
}

/// Large-n limit of [`opt_value_eps`]: `θ + ∫_{y(1-ε)}^1 (1 - w)/f(w)² dw`.
pub fn opt_value_eps_limit(eps: f64, y: &OdeSolution) -> Result<f64> {
    let y_end = y.y_at(1.0 - eps)?;
    let beta = y.beta();
    let q = quad::simpson(
        |w| {
            let f = hillkertz::rhs(w, beta);
            (1.0 - w) / (f * f)
        },
        y_end,
        1.0,
        1e-12,
        1e-300,
    );
    Ok(y.theta() + q.value)
}

/// Continuous value `d(x) = ∫_x^1 -1/y'(s) ds`.
pub fn d_continuous(x: f64, y: &OdeSolution) -> Result<f64> {
    Ok(hillkertz::inverse_slope_mass(y.y_at(x)?, y.beta()))
}

/// `η_σ = (nσ - ln y(1-σ)(1-σ)) / ((1-σ)(n + ln y(1-σ)))`.
pub fn eta_sigma(sigma: f64, n: usize, y: &OdeSolution) -> Result<f64> {
    let l = y.y_at(1.0 - sigma)?.ln();
    let nf = n as f64;
    if !(sigma > 0.0 && sigma < 1.0) || nf + l <= 0.0 {
        return Err(Error::domain("eta_sigma", format!("need sigma in (0,1) and n > -ln y(1-sigma) (sigma={sigma}, n={n})")));
    }
    Ok((nf * sigma - l * (1.0 - sigma)) / ((1.0 - sigma) * (nf + l)))
}

/// `η - σ - ση + (ln y((1-σ)i/n)/n)(1-σ)(1+η)`, which must be nonnegative for `i ∈ [n]`.
pub fn claim_margin(sigma: f64, n: usize, i: usize, y: &OdeSolution) -> Result<f64> {
    let eta = eta_sigma(sigma, n, y)?;
    let nf = n as f64;
    let l = y.y_at((1.0 - sigma) * i as f64 / nf)?.ln();
    Ok(eta - sigma - sigma * eta + l / nf * (1.0 - sigma) * (1.0 + eta))
}

/// `(1 + η_σ) d((1-σ) i / n)`, an upper bound on `D_i^ε`.
pub fn dp_envelope(sigma: f64, n: usize, i: usize, y: &OdeSolution) -> Result<f64> {
    Ok((1.0 + eta_sigma(sigma, n, y)?) * d_continuous((1.0 - sigma) * i as f64 / n as f64, y)?)
}

/// Bellman equation residual at level `w = y(x)`: the value of the supremum at
/// `μ = -ln w / p`, which is `θ + ∫_w^1 d(v)/v dv + ln(w) d(w)`, minus `-1/f(w)`.
pub fn bellman_ode_residual(w: f64, theta: f64) -> f64 {
    let beta = 1.0 / theta;
    let d = |v: f64| hillkertz::inverse_slope_mass(v, beta);
    let breaks: Vec<f64> = [w, 0.01, 0.1, 0.5, 1.0].into_iter().filter(|&b| b >= w).collect();
    let inner = quad::simpson_piecewise(|v| d(v) / v, &breaks, 1e-11, 1e-300).value;
    theta + inner + w.ln() * d(w) + 1.0 / hillkertz::rhs(w, beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UpperBoundReport {
    pub n: usize,
    pub eps: f64,
    pub p: f64,
    pub d1: f64,
    pub opt_value: f64,
    pub ratio: f64,
}

pub fn upper_bound_report(eps: f64, p: f64, n: usize, y: &OdeSolution) -> Result<UpperBoundReport> {
    let d1 = bellman_upper_bound(eps, p, n, y)?;
    let opt = opt_value_eps(eps, p, n, y)?;
    Ok(UpperBoundReport {
        n,
        eps,
        p,
        d1,
        opt_value: opt,
        ratio: d1 / opt,
    })
}
