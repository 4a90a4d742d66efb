//! The acceptance suite: twelve numbered checks with tolerances and time budgets.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use serde::Serialize;

use crate::dist::{Instance, QuantileDistribution};
use crate::error::Result;
use crate::hillkertz::{self, Scheme};
use crate::mc::{self, AcceptAll, McConfig, McRng};
use crate::report::fmt12;
use crate::{adaptive, clairvoyant, dp, fixtures, maxvariant, nonadaptive, noniid};

const ONE_MINUS_INV_E: f64 = 1.0 - std::f64::consts::E.recip();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub budget_secs: u64,
}

pub const CRITERIA: [Criterion; 12] = [
    Criterion { id: 1, name: "theta-star", budget_secs: 5 },
    Criterion { id: 2, name: "nonadaptive-guarantee", budget_secs: 30 },
    Criterion { id: 3, name: "nonadaptive-tightness", budget_secs: 10 },
    Criterion { id: 4, name: "eta-monotonicity", budget_secs: 10 },
    Criterion { id: 5, name: "adaptive-convergence", budget_secs: 60 },
    Criterion { id: 6, name: "adaptive-upper-bound", budget_secs: 120 },
    Criterion { id: 7, name: "dp-structure", budget_secs: 60 },
    Criterion { id: 8, name: "benchmark-closed-forms", budget_secs: 120 },
    Criterion { id: 9, name: "max-variant", budget_secs: 30 },
    Criterion { id: 10, name: "non-iid", budget_secs: 120 },
    Criterion { id: 11, name: "rare-disruption", budget_secs: 60 },
    Criterion { id: 12, name: "determinism", budget_secs: 120 },
];

/// Criteria run by `--quick`, with reduced Monte Carlo sizes.
pub const QUICK: [u8; 11] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

/// Criteria whose rendered output is compared across worker counts.
const DETERMINISM_SUBSET: [u8; 3] = [8, 10, 11];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyConfig {
    pub quick: bool,
    pub workers: usize,
    pub seed: u64,
    /// Corrupt θ* before it is checked.
    pub inject_fault: bool,
    /// Run only these criteria; empty means the mode's default set.
    pub only: Vec<u8>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            quick: false,
            workers: 0,
            seed: 20_240_601,
            inject_fault: false,
            only: Vec::new(),
        }
    }
}

impl VerifyConfig {
    fn mc(&self, trials: u64, stream: u64) -> McConfig {
        McConfig::new(trials, mc::splitmix64(self.seed ^ stream)).with_workers(self.workers)
    }

    fn selected(&self) -> Vec<u8> {
        if !self.only.is_empty() {
            return self.only.clone();
        }
        if self.quick {
            QUICK.to_vec()
        } else {
            CRITERIA.iter().map(|c| c.id).collect()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub criterion: Criterion,
    pub passed: bool,
    pub detail: String,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl Outcome {
    pub fn within_budget(&self) -> bool {
        self.elapsed <= Duration::from_secs(self.criterion.budget_secs)
    }

    /// One line without timing, so it is stable across runs.
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion.id,
            self.criterion.name,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub outcomes: Vec<Outcome>,
}

impl Summary {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failing(&self) -> Vec<&'static str> {
        self.outcomes.iter().filter(|o| !o.passed).map(|o| o.criterion.name).collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for o in &self.outcomes {
            let _ = writeln!(s, "{}", o.line());
        }
        let passed = self.outcomes.iter().filter(|o| o.passed).count();
        let _ = writeln!(s, "{passed}/{} criteria passed", self.outcomes.len());
        s
    }
}

pub fn criterion(id: u8) -> Option<Criterion> {
    CRITERIA.iter().copied().find(|c| c.id == id)
}

/// Runs the selected criteria in order.
pub fn run(cfg: &VerifyConfig) -> Summary {
    let outcomes = cfg.selected().into_iter().filter_map(|id| run_one(id, cfg)).collect();
    Summary { outcomes }
}

/// Runs one criterion; errors count as failures.
pub fn run_one(id: u8, cfg: &VerifyConfig) -> Option<Outcome> {
    let criterion = criterion(id)?;
    let start = Instant::now();
    let result = match id {
        1 => theta_star(cfg),
        2 => nonadaptive_guarantee(),
        3 => nonadaptive_tightness(),
        4 => eta_monotonicity(),
        5 => adaptive_convergence(),
        6 => adaptive_upper_bound(),
        7 => dp_structure(cfg),
        8 => benchmark_closed_forms(cfg),
        9 => max_variant(),
        10 => non_iid(cfg),
        11 => rare_disruption(cfg),
        12 => determinism(cfg),
        _ => unreachable!(),
    };
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    Some(Outcome {
        criterion,
        passed,
        detail,
        elapsed: start.elapsed(),
    })
}

type Check = Result<(bool, String)>;

fn theta_star(cfg: &VerifyConfig) -> Check {
    let t = hillkertz::theta_star_with(1e-10, Scheme::Simpson)?;
    let theta = if cfg.inject_fault { t.theta + 0.01 } else { t.theta };
    // residual re-evaluated with the other quadrature scheme
    let residual = (hillkertz::shooting_integral(1.0 / theta, Scheme::GaussLegendre, 1e-14) - 1.0).abs();
    let ok = (0.7440..=0.7460).contains(&theta) && residual < 1e-8;
    Ok((ok, format!("theta*={} residual={}", fmt12(theta), fmt12(residual))))
}

fn nonadaptive_guarantee() -> Check {
    let mut worst = (f64::INFINITY, String::new());
    for (name, d, n, p, zeta) in fixtures::grid() {
        let inst = Instance::new(n, d, p, zeta)?;
        let r = nonadaptive::report(&inst, nonadaptive::optimal_quantile(n, p))?;
        if r.ratio < worst.0 {
            worst = (r.ratio, format!("{name} n={n} p={p} zeta={zeta}"));
        }
    }
    let ok = worst.0 >= ONE_MINUS_INV_E - 1e-9;
    Ok((ok, format!("min ratio {} at {} over {} cases", fmt12(worst.0), worst.1, fixtures::grid().len())))
}

fn nonadaptive_tightness() -> Check {
    let p = 0.5;
    let (a1, a2, beta, n) = (1.0, p * (std::f64::consts::E - 2.0), 200.0, 100_000);
    let finite = nonadaptive::hard_instance_finite(a1, a2, beta, p, n)?;
    let limit = nonadaptive::hard_instance_report(a1, a2, beta, p, n)?;
    let ok = finite.ratio <= 0.6421 && limit.ratio <= 0.6421;
    Ok((
        ok,
        format!("best fixed-quantile ratio {} (large-n limit {})", fmt12(finite.ratio), fmt12(limit.ratio)),
    ))
}

fn eta_monotonicity() -> Check {
    let ps = [0.01, 0.05, 0.1, 0.3, 0.5, 0.7, 0.9];
    let mut violations = 0;
    for &p in &ps {
        let mut prev = f64::INFINITY;
        for n in 1..=10_000 {
            let eta = nonadaptive::eta_bound(n, p, nonadaptive::optimal_quantile(n, p));
            if eta > prev + 1e-15 {
                violations += 1;
            }
            prev = eta;
        }
    }
    let terminal = nonadaptive::eta_bound(10_000, 0.5, nonadaptive::optimal_quantile(10_000, 0.5));
    let ok = violations == 0 && (terminal - ONE_MINUS_INV_E).abs() < 1e-3;
    Ok((ok, format!("{violations} increases; eta(10^4, 0.5)={}", fmt12(terminal))))
}

fn adaptive_convergence() -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for &p in &[0.1, 0.5, 0.9] {
        let s = adaptive::solve_schedule(1000, p, 0.0)?;
        let (res, g) = (s.max_residual(), s.guarantee());
        ok &= res < 1e-10 && (0.735..=0.755).contains(&g);
        parts.push(format!("p={p}: guarantee {} residual {}", fmt12(g), fmt12(res)));
    }
    let s = adaptive::solve_schedule(2, 0.5, 0.0)?;
    let eps1 = 2.0 * (2.0 - 3f64.sqrt());
    let err = (s.breakpoints[0] - eps1).abs().max((s.theta_n - 1.0 / eps1).abs());
    ok &= err < 1e-9;
    parts.push(format!("n=2 error {}", fmt12(err)));
    Ok((ok, parts.join("; ")))
}

fn adaptive_upper_bound() -> Check {
    let y = hillkertz::solve_y(hillkertz::theta_star(1e-12)?, 16_384)?;
    let r = dp::upper_bound_report(1e-3, 0.5, 10_000, &y)?;
    Ok((r.ratio <= 0.765, format!("D1/v(OPT) = {} / {} = {}", fmt12(r.d1), fmt12(r.opt_value), fmt12(r.ratio))))
}

fn dp_structure(cfg: &VerifyConfig) -> Check {
    let mut rng = McRng::seed_from_u64(mc::splitmix64(cfg.seed ^ 7));
    let (mut bad_order, mut worst) = (0, 0.0f64);
    for _ in 0..200 {
        let inst = dp::DiscreteInstance::random(&mut rng, 8, 5);
        let sol = dp::solve(&inst);
        let tv = sol.threshold_values(&inst);
        if tv.windows(2).any(|w| w[1] > w[0]) {
            bad_order += 1;
        }
        let brute = dp::brute_force_policy_value(&inst, &sol.thresholds)?;
        worst = worst.max((brute - sol.d1()).abs());
    }
    let ok = bad_order == 0 && worst <= 1e-12;
    Ok((ok, format!("{bad_order} non-monotone schedules; max |D1 - brute force| {}", fmt12(worst))))
}

/// `(n, p, ζ)` triples simulated for every fixture distribution.
const MC_CASES: [(usize, f64, f64); 4] = [(1, 0.5, 0.5), (5, 0.1, 0.0), (10, 0.9, 1.0), (50, 0.5, 0.0)];

fn benchmark_closed_forms(cfg: &VerifyConfig) -> Check {
    let mut worst_rel = 0.0f64;
    for (_, d, n, p, zeta) in fixtures::grid() {
        let inst = Instance::new(n, d, p, zeta)?;
        let a = clairvoyant::opt_value(&inst)?.value;
        let b = clairvoyant::opt_value_order_statistics(&inst)?.value;
        worst_rel = worst_rel.max((a - b).abs() / a.abs().max(b.abs()));
    }
    let trials = if cfg.quick { 100_000 } else { 1_000_000 };
    let (mut misses, mut worst_z) = (0, 0.0f64);
    for (k, (_, d)) in fixtures::smooth_distributions().into_iter().enumerate() {
        for (j, &(n, p, zeta)) in MC_CASES.iter().enumerate() {
            let inst = Instance::new(n, d.clone(), p, zeta)?;
            let exact = clairvoyant::opt_value(&inst)?.value;
            let est = clairvoyant::opt_value_mc(&inst, &cfg.mc(trials, 800 + (k * 16 + j) as u64))?;
            let z = (est.mean - exact).abs() / est.std_error;
            worst_z = worst_z.max(z);
            if z > 4.0 {
                misses += 1;
            }
        }
    }
    let ok = worst_rel <= 1e-8 && misses == 0;
    Ok((
        ok,
        format!(
            "max relative gap between forms {}; max |MC - exact|/SE {} over {} cases at {trials} trials",
            fmt12(worst_rel),
            fmt12(worst_z),
            12 * MC_CASES.len()
        ),
    ))
}

fn max_variant() -> Check {
    let ps: Vec<f64> = (1..=99).map(|k| k as f64 / 100.0).collect();
    let rows = maxvariant::ratio_curve(&ps)?;
    let worst_res = rows.iter().map(|&(p, l, _)| hillkertz::lambda_residual(p, l)).fold(0.0, f64::max);
    let in_range = rows.iter().all(|r| (ONE_MINUS_INV_E..=1.0).contains(&r.2));
    let monotone = rows.windows(2).all(|w| w[1].2 <= w[0].2);
    let (_, bound) = maxvariant::cr_lower_bound_max(10_000, 0.5);
    let gap = (bound - maxvariant::minimax_value(0.5)?).abs();
    let mut r_violations = 0;
    for n in 1..=50 {
        for &p in &[0.1, 0.5, 0.9] {
            for &q in &[0.1, 0.5, 1.0] {
                let mut prev = 0.0;
                for k in 1..=200 {
                    let r = maxvariant::r_ratio(n, p, q, q * k as f64 / 200.0);
                    if r < prev - 1e-12 {
                        r_violations += 1;
                    }
                    prev = r;
                }
            }
        }
    }
    let ok = worst_res < 1e-10 && in_range && monotone && gap < 1e-3 && r_violations == 0;
    Ok((
        ok,
        format!(
            "max lambda residual {}; curve in range {in_range}, nonincreasing {monotone}; finite-n gap {}; {r_violations} R(v) decreases",
            fmt12(worst_res),
            fmt12(gap)
        ),
    ))
}

fn non_iid(cfg: &VerifyConfig) -> Check {
    let count = if cfg.quick { 10 } else { 50 };
    let trials = if cfg.quick { 5_000 } else { 20_000 };
    let mut rng = McRng::seed_from_u64(mc::splitmix64(cfg.seed ^ 10));
    let (mut failures, mut worst) = (0, f64::INFINITY);
    for k in 0..count {
        let inst = noniid::NonIidInstance::random(&mut rng, 20);
        let r = noniid::half_report(&inst, &cfg.mc(trials, 1000 + 2 * k), &cfg.mc(trials, 1001 + 2 * k))?;
        if !r.passes(4.0) {
            failures += 1;
        }
        worst = worst.min((r.ratio - 0.5) / r.ratio_std_error);
    }
    let tight = noniid::tight_instance(10_000, 1e-4, 0.5, 0.0)?;
    let ok = failures == 0 && (tight.ratio - 0.5).abs() < 0.01;
    Ok((
        ok,
        format!(
            "{failures}/{count} fixtures below 1/2 - 4 SE (min (ratio - 1/2)/SE {}); tight ratio {}",
            fmt12(worst),
            fmt12(tight.ratio)
        ),
    ))
}

fn rare_disruption(cfg: &VerifyConfig) -> Check {
    let b1 = nonadaptive::rare_disruption_bound(1.0);
    let n = 10_000;
    let inst = Instance::new(n, QuantileDistribution::uniform(0.0, 1.0)?, 1.0 / n as f64, 0.0)?;
    let trials = if cfg.quick { 400 } else { 2_000 };
    let est = mc::estimate(&inst, &AcceptAll, &cfg.mc(trials, 11))?.sum;
    let opt = clairvoyant::opt_value(&inst)?.value;
    let ratio = est.mean / opt;
    let ok = (b1 - ONE_MINUS_INV_E).abs() < 1e-12 && ratio >= ONE_MINUS_INV_E - 0.01;
    Ok((
        ok,
        format!("bound(1)={}; accept-all ratio {} (SE {})", fmt12(b1), fmt12(ratio), fmt12(est.std_error / opt)),
    ))
}

fn determinism(cfg: &VerifyConfig) -> Check {
    let renders: Vec<String> = [1usize, 4, 16]
        .iter()
        .map(|&w| {
            let sub = VerifyConfig {
                quick: true,
                workers: w,
                only: DETERMINISM_SUBSET.to_vec(),
                ..cfg.clone()
            };
            run(&sub).render()
        })
        .collect();
    let ok = renders.windows(2).all(|w| w[0] == w[1]);
    Ok((ok, format!("criteria {DETERMINISM_SUBSET:?} rendered identically under 1, 4 and 16 workers: {ok}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criteria_are_numbered_in_order() {
        for (k, c) in CRITERIA.iter().enumerate() {
            assert_eq!(c.id as usize, k + 1);
        }
        assert!(criterion(13).is_none());
        assert!(run_one(13, &VerifyConfig::default()).is_none());
    }

    #[test]
    fn fault_injection_fails_theta() {
        let cfg = VerifyConfig {
            inject_fault: true,
            only: vec![1],
            ..VerifyConfig::default()
        };
        let s = run(&cfg);
        assert!(!s.all_passed());
        assert_eq!(s.failing(), vec!["theta-star"]);
        assert!(run(&VerifyConfig { only: vec![1], ..VerifyConfig::default() }).all_passed());
    }

    #[test]
    fn render_has_one_line_per_criterion() {
        let s = run(&VerifyConfig {
            only: vec![1, 4],
            ..VerifyConfig::default()
        });
        let text = s.render();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("[PASS]  1 theta-star"));
    }
}
