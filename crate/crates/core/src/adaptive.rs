//! Adaptive quantile-density thresholds.
//!
//! Step `i` samples a quantile from a density proportional to `(1-pq)^{n-2}`
//! on `[ε_{i-1}, ε_i]` and accepts iff the observation lies in that top mass.
//! The breakpoints are chosen so each step's density normalizer equals the
//! previous one discounted by the probability of surviving an acceptance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clairvoyant;
use crate::dist::Instance;
use crate::error::{Error, Result};
use crate::mc::{McRng, Observation, Policy};
use crate::quad;

pub const THETA_BRACKET: (f64, f64) = (1e-3, 10.0);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveSchedule {
    pub n: usize,
    pub p: f64,
    pub zeta: f64,
    pub theta_n: f64,
    /// `ε_1 < … < ε_n = 1`.
    pub breakpoints: Vec<f64>,
    /// `∫β_{i,n}` for each step.
    #[serde(skip)]
    pub normalizers: Vec<f64>,
}

#[derive(Deserialize)]
struct ScheduleFile {
    n: usize,
    p: f64,
    zeta: f64,
    theta_n: f64,
    breakpoints: Vec<f64>,
}

enum Run {
    TooLow,
    TooHigh,
    Fits(Vec<f64>),
}

/// `h_i = (1 - pε_i)^{n-1}` for `i = 1..n-1`, or which side of the root `θ` lies on.
fn run_recursion(n: usize, p: f64, theta: f64) -> Run {
    let nf = n as f64;
    let target = quad::pow1m(p, nf - 1.0);
    let mut hs = Vec::with_capacity(n);
    let (mut h_prev, mut eps_prev) = (1.0, 0.0);
    for i in 1..=n {
        let h = h_prev - 1.0 / (nf * theta) - p * eps_prev * h_prev + quad::one_minus_pow1m(p * eps_prev, nf) / nf;
        if h <= target {
            return Run::TooLow;
        }
        if h >= h_prev {
            return Run::TooHigh;
        }
        if i == n {
            return Run::Fits(hs);
        }
        hs.push(h);
        h_prev = h;
        eps_prev = eps_from_h(h, n, p);
    }
    unreachable!()
}

fn eps_from_h(h: f64, n: usize, p: f64) -> f64 {
    (-(h.ln() / (n as f64 - 1.0)).exp_m1() / p).min(1.0)
}

fn check_params(n: usize, p: f64, zeta: f64) -> Result<()> {
    if n == 0 || !(p > 0.0 && p < 1.0) || !(0.0..=1.0).contains(&zeta) {
        return Err(Error::InvalidInstance(format!(
            "schedule needs n >= 1, p in (0,1), zeta in [0,1] (n={n}, p={p}, zeta={zeta})"
        )));
    }
    Ok(())
}

pub fn solve_schedule(n: usize, p: f64, zeta: f64) -> Result<AdaptiveSchedule> {
    solve_schedule_in(n, p, zeta, THETA_BRACKET)
}

/// As [`solve_schedule`] with an explicit bracket for `θ_n`.
pub fn solve_schedule_in(n: usize, p: f64, zeta: f64, bracket: (f64, f64)) -> Result<AdaptiveSchedule> {
    check_params(n, p, zeta)?;
    if n == 1 {
        return Ok(AdaptiveSchedule {
            n,
            p,
            zeta,
            theta_n: 1.0,
            breakpoints: vec![1.0],
            normalizers: vec![1.0],
        });
    }
    let too_low = |t: f64| matches!(run_recursion(n, p, t), Run::TooLow);
    let (lo, hi) = bracket;
    if !too_low(lo) || too_low(hi) {
        return Err(Error::numeric(
            "solve_schedule",
            format!("theta bracket [{lo}, {hi}] does not contain the root (n={n}, p={p})"),
        ));
    }
    let (_, theta) = quad::bisect_predicate(too_low, lo, hi, 0.0);
    let Run::Fits(hs) = run_recursion(n, p, theta) else {
        return Err(Error::numeric("solve_schedule", format!("recursion failed at theta={theta}")));
    };
    let mut breakpoints: Vec<f64> = hs.iter().map(|&h| eps_from_h(h, n, p)).collect();
    breakpoints.push(1.0);
    let normalizers = normalizers(n, p, theta, &breakpoints);
    Ok(AdaptiveSchedule {
        n,
        p,
        zeta,
        theta_n: theta,
        breakpoints,
        normalizers,
    })
}

/// `∫β_{i,n} = θ n [(1-pε_{i-1})^{n-1} - (1-pε_i)^{n-1}]`.
fn normalizers(n: usize, p: f64, theta: f64, eps: &[f64]) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let k = n as f64 - 1.0;
    let mut prev = 1.0;
    eps.iter()
        .map(|&e| {
            let h = quad::pow1m(p * e, k);
            let r = theta * n as f64 * (prev - h);
            prev = h;
            r
        })
        .collect()
}

impl AdaptiveSchedule {
    /// Normalization residuals: `∫β_1 - 1`, then `∫β_{i+1} - ∫β_i(1-pq)dq` for `i < n`.
    pub fn residuals(&self) -> Vec<f64> {
        let (n, p) = (self.n, self.p);
        let nf = n as f64;
        let mut out = vec![self.normalizers[0] - 1.0];
        let mut prev = 0.0;
        for i in 0..n - 1 {
            let e = self.breakpoints[i];
            let discounted = self.theta_n * (nf - 1.0) * (quad::pow1m(p * prev, nf) - quad::pow1m(p * e, nf));
            out.push(self.normalizers[i + 1] - discounted);
            prev = e;
        }
        out
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals().iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// `[ε_{i-1}, ε_i]` for 1-based `i`.
    pub fn interval(&self, i: usize) -> Result<(f64, f64)> {
        if i == 0 || i > self.n {
            return Err(Error::domain("sample_quantile", format!("step {i} outside 1..={}", self.n)));
        }
        let lo = if i == 1 { 0.0 } else { self.breakpoints[i - 2] };
        Ok((lo, self.breakpoints[i - 1]))
    }

    fn draw(&self, a: f64, b: f64, u: f64) -> f64 {
        if self.n == 1 {
            return 1.0;
        }
        // (1-pq)^{n-1} is uniform between its endpoint values
        let k = self.n as f64 - 1.0;
        let (ha, hb) = (quad::pow1m(self.p * a, k), quad::pow1m(self.p * b, k));
        let t = ha - u * (ha - hb);
        (-(t.ln() / k).exp_m1() / self.p).clamp(a, b)
    }

    /// Quantile threshold for 1-based step `i`.
    pub fn sample_quantile<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Result<f64> {
        let (a, b) = self.interval(i)?;
        Ok(self.draw(a, b, rng.random::<f64>()))
    }

    /// `θ_n (1 - (1-p)^{n-1} pn / (1 - (1-p)^n))`.
    pub fn guarantee(&self) -> f64 {
        if self.n == 1 {
            return 1.0;
        }
        let nf = self.n as f64;
        let tail = quad::pow1m(self.p, nf - 1.0) * self.p * nf / quad::one_minus_pow1m(self.p, nf);
        self.theta_n * (1.0 - tail)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ScheduleFile = serde_json::from_str(text)?;
        check_params(f.n, f.p, f.zeta)?;
        let b = &f.breakpoints;
        let increasing = b.windows(2).all(|w| w[0] < w[1]);
        if b.len() != f.n || !increasing || b[0] <= 0.0 || (b[f.n - 1] - 1.0).abs() > 1e-10 || !(f.theta_n > 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "expected {} increasing breakpoints in (0, 1] ending at 1 and theta_n > 0",
                f.n
            )));
        }
        let normalizers = normalizers(f.n, f.p, f.theta_n, b);
        Ok(AdaptiveSchedule {
            n: f.n,
            p: f.p,
            zeta: f.zeta,
            theta_n: f.theta_n,
            breakpoints: f.breakpoints,
            normalizers,
        })
    }
}

impl Policy for AdaptiveSchedule {
    type State = ();

    #[inline]
    fn decide(&self, step: usize, obs: Observation, _: &mut (), rng: &mut McRng) -> bool {
        let lo = if step == 0 { 0.0 } else { self.breakpoints[step - 1] };
        obs.quantile <= self.draw(lo, self.breakpoints[step], rng.random::<f64>())
    }
}

pub fn guarantee(n: usize, p: f64) -> Result<f64> {
    Ok(solve_schedule(n, p, 0.0)?.guarantee())
}

/// `θ_n (v(OPT) - g_n(p, 1) E[X])`.
pub fn alg_value(inst: &Instance, s: &AdaptiveSchedule) -> Result<f64> {
    if inst.n() != s.n || inst.p() != s.p || inst.zeta() != s.zeta {
        return Err(Error::InvalidSchedule(format!(
            "schedule solved for (n={}, p={}, zeta={}) but instance has (n={}, p={}, zeta={})",
            s.n,
            s.p,
            s.zeta,
            inst.n(),
            inst.p(),
            inst.zeta()
        )));
    }
    let opt = clairvoyant::opt_value(inst)?.value;
    if s.n == 1 {
        return Ok(opt);
    }
    let tail = clairvoyant::g_n(s.p, 1.0, s.n, s.zeta) * inst.dist().mean();
    Ok(s.theta_n * (opt - tail))
}
