//! Independent, non-identically distributed values.
//!
//! The skipping policy reaches step `i` with probability `R_i`, skips it with
//! probability `ε_i` and otherwise accepts the top `z_i` quantile, where `z_i`
//! is the probability that the offline benchmark selects item `i`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{Curve, DistSpec, Instance, Piece, QuantileDistribution};
use crate::error::{Error, Result};
use crate::mc::{self, Environment, Estimate, McConfig, McRng, Observation, Policy};
use crate::quad::{self, NeumaierSum};

const BUDGET_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct NonIidInstance {
    dists: Vec<QuantileDistribution>,
    p: f64,
    zeta: f64,
}

#[derive(Serialize, Deserialize)]
struct NonIidSpec {
    p: f64,
    zeta: f64,
    distributions: Vec<DistSpec>,
}

impl NonIidInstance {
    pub fn new(dists: Vec<QuantileDistribution>, p: f64, zeta: f64) -> Result<Self> {
        if dists.is_empty() {
            return Err(Error::InvalidInstance("need at least one distribution".into()));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidInstance(format!("p must lie in (0, 1), got {p}")));
        }
        if !(0.0..=1.0).contains(&zeta) {
            return Err(Error::InvalidInstance(format!("zeta must lie in [0, 1], got {zeta}")));
        }
        Ok(Self { dists, p, zeta })
    }

    /// The i.i.d. instance viewed as a non-identical one.
    pub fn iid(inst: &Instance) -> Self {
        Self {
            dists: vec![inst.dist().clone(); inst.n()],
            p: inst.p(),
            zeta: inst.zeta(),
        }
    }

    pub fn n(&self) -> usize {
        self.dists.len()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn dists(&self) -> &[QuantileDistribution] {
        &self.dists
    }

    /// `B = 1 - (1 - ζ) p`.
    pub fn recovery_factor(&self) -> f64 {
        1.0 - (1.0 - self.zeta) * self.p
    }

    pub fn to_json(&self) -> Result<String> {
        let spec = NonIidSpec {
            p: self.p,
            zeta: self.zeta,
            distributions: self.dists.iter().map(QuantileDistribution::to_spec).collect(),
        };
        Ok(serde_json::to_string_pretty(&spec)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: NonIidSpec = serde_json::from_str(text)?;
        let dists = spec
            .distributions
            .into_iter()
            .map(QuantileDistribution::try_from)
            .collect::<Result<Vec<_>>>()?;
        Self::new(dists, spec.p, spec.zeta)
    }

    /// Random instance with `n ≤ max_n` whose distributions mix atoms and uniforms.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_n: usize) -> Self {
        let n = rng.random_range(1..=max_n.max(1));
        let p = rng.random_range(0.05..0.95);
        let zeta = rng.random_range(0.0..=1.0);
        let dists = (0..n).map(|_| random_mixture(rng)).collect();
        Self { dists, p, zeta }
    }
}

/// Up to three pieces over disjoint, descending value ranges, each an atom
/// or a uniform.
fn random_mixture<R: Rng + ?Sized>(rng: &mut R) -> QuantileDistribution {
    let k = rng.random_range(1..=3);
    let scale = rng.random_range(0.5..10.0);
    let mut cuts: Vec<f64> = (0..2 * k).map(|_| rng.random_range(0.0..scale)).collect();
    cuts.sort_by(|a, b| b.total_cmp(a));
    let mut masses: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = masses.iter().sum();
    masses.iter_mut().for_each(|m| *m /= total);
    let mut pieces = Vec::with_capacity(k);
    let mut q = 0.0;
    for j in 0..k {
        let (top, bottom) = (cuts[2 * j], cuts[2 * j + 1]);
        let q_hi = if j + 1 == k { 1.0 } else { q + masses[j] };
        if rng.random_bool(0.5) || top - bottom < 1e-9 {
            pieces.push(Piece::Atom {
                mass: q_hi - q,
                value: top,
            });
        } else {
            pieces.push(Piece::Continuous {
                q_lo: q,
                q_hi,
                curve: Curve::Table(vec![[q, top], [q_hi, bottom]]),
            });
        }
        q = q_hi;
    }
    QuantileDistribution::new(pieces).expect("valid mixture")
}

impl Environment for NonIidInstance {
    fn horizon(&self) -> usize {
        self.n()
    }

    fn disruption(&self) -> f64 {
        self.p
    }

    fn recovery(&self) -> f64 {
        self.zeta
    }

    #[inline]
    fn observe(&self, step: usize, rng: &mut McRng) -> Observation {
        let (value, quantile) = self.dists[step].sample_with_quantile(rng);
        Observation { value, quantile }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptProbEstimate {
    /// `z_i`: probability the benchmark selects item `i`.
    pub z: Vec<Estimate>,
    pub opt_value: Estimate,
}

impl OptProbEstimate {
    pub fn z_means(&self) -> Vec<f64> {
        self.z.iter().map(|e| e.mean).collect()
    }
}

/// Estimates the benchmark's selection probabilities and value. Each trial
/// ranks the positive realized values in descending order (ties by index);
/// rank `j` is selected with probability `(1-p)^{j-1}` and contributes
/// `B (1-p)^{j-1}` times its value, so the disruption draw is integrated out.
pub fn estimate_opt_probs(inst: &NonIidInstance, cfg: &McConfig) -> Result<OptProbEstimate> {
    let n = inst.n();
    let (p, b) = (inst.p, inst.recovery_factor());
    let est = mc::estimate_many(cfg, n + 1, |rng, out| {
        let mut items: Vec<(f64, usize)> = inst
            .dists
            .iter()
            .enumerate()
            .map(|(i, d)| (d.sample(rng), i))
            .filter(|&(x, _)| x > 0.0)
            .collect();
        items.sort_by(|a, c| c.0.total_cmp(&a.0).then(a.1.cmp(&c.1)));
        let mut w = 1.0;
        let mut value = NeumaierSum::default();
        for &(x, i) in &items {
            out[i] = w;
            value.add(b * w * x);
            w *= 1.0 - p;
        }
        out[n] = value.total();
    })?;
    Ok(OptProbEstimate {
        z: est[..n].to_vec(),
        opt_value: est[n],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippingSchedule {
    pub z: Vec<f64>,
    /// `τ_i = F_i^{-1}(1 - z_i)`.
    pub tau: Vec<f64>,
    pub eps: Vec<f64>,
    /// `R_i`: probability of reaching step `i`.
    pub reach: Vec<f64>,
}

/// Builds the schedule with `R_i = 1 - (p/2) Σ_{k<i} z_k` and `R_i (1 - ε_i) = 1/2`.
pub fn build_schedule(inst: &NonIidInstance, z: &[f64]) -> Result<SkippingSchedule> {
    let n = inst.n();
    if z.len() != n {
        return Err(Error::InvalidSchedule(format!("expected {n} selection probabilities, got {}", z.len())));
    }
    let p = inst.p;
    let mut prefix = 0.0;
    let (mut eps, mut reach, mut tau) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (i, (&zi, d)) in z.iter().zip(&inst.dists).enumerate() {
        if !(0.0..=1.0).contains(&zi) {
            return Err(Error::InvalidSchedule(format!("z_{} = {zi} outside [0, 1]", i + 1)));
        }
        if p * prefix > 1.0 + BUDGET_TOL {
            return Err(Error::InvalidSchedule(format!(
                "selection budget exceeded before step {}: sum of z = {prefix} > 1/p = {}",
                i + 1,
                1.0 / p
            )));
        }
        let used = (p * prefix).min(1.0);
        reach.push(1.0 - 0.5 * used);
        eps.push(1.0 - 1.0 / (2.0 - used));
        tau.push(d.quantile(zi));
        prefix += zi;
    }
    Ok(SkippingSchedule {
        z: z.to_vec(),
        tau,
        eps,
        reach,
    })
}

impl SkippingSchedule {
    /// Largest violation of the recurrence and normalization identities.
    pub fn max_invariant_error(&self, p: f64) -> f64 {
        let mut err = (self.reach[0] - 1.0).abs();
        for i in 0..self.z.len() {
            err = err.max((self.reach[i] * (1.0 - self.eps[i]) - 0.5).abs());
            if i + 1 < self.z.len() {
                err = err.max((self.reach[i + 1] - (self.reach[i] - 0.5 * p * self.z[i])).abs());
            }
        }
        err
    }
}

impl Policy for SkippingSchedule {
    type State = ();

    #[inline]
    fn decide(&self, step: usize, obs: Observation, _: &mut (), rng: &mut McRng) -> bool {
        let skip = rng.random::<f64>() < self.eps[step];
        !skip && obs.quantile <= self.z[step]
    }
}

/// `Σ_i R_i (1 - ε_i) B ∫_0^{z_i} Q_i`.
pub fn alg_value(inst: &NonIidInstance, s: &SkippingSchedule) -> Result<f64> {
    if s.z.len() != inst.n() {
        return Err(Error::InvalidSchedule("schedule length does not match the instance".into()));
    }
    let b = inst.recovery_factor();
    Ok(s.z
        .iter()
        .zip(&s.reach)
        .zip(&s.eps)
        .zip(&inst.dists)
        .map(|(((&z, &r), &e), d)| r * (1.0 - e) * b * d.pe(z))
        .collect::<NeumaierSum>()
        .total())
}

/// Simulated value of the skipping policy.
pub fn policy_value(inst: &NonIidInstance, s: &SkippingSchedule, cfg: &McConfig) -> Result<Estimate> {
    Ok(mc::estimate(inst, s, cfg)?.sum)
}

#[derive(Debug, Clone, Serialize)]
pub struct HalfReport {
    pub opt: Estimate,
    pub alg: Estimate,
    pub alg_closed_form: f64,
    pub ratio: f64,
    pub ratio_std_error: f64,
    /// Value the policy would gain if every `z_i` were raised by 4 standard errors.
    pub estimation_slack: f64,
}

impl HalfReport {
    pub fn passes(&self, k: f64) -> bool {
        self.ratio >= 0.5 - k * self.ratio_std_error
    }
}

/// Estimates `z`, builds the schedule, simulates it and compares with the benchmark.
pub fn half_report(inst: &NonIidInstance, opt_cfg: &McConfig, alg_cfg: &McConfig) -> Result<HalfReport> {
    let est = estimate_opt_probs(inst, opt_cfg)?;
    let schedule = build_schedule(inst, &est.z_means())?;
    let alg = policy_value(inst, &schedule, alg_cfg)?;
    let closed = alg_value(inst, &schedule)?;
    let b = inst.recovery_factor();
    let slack = est
        .z
        .iter()
        .zip(&inst.dists)
        .map(|(e, d)| 0.5 * b * (d.pe((e.mean + 4.0 * e.std_error).min(1.0)) - d.pe(e.mean)))
        .sum();
    let opt = est.opt_value;
    let ratio = alg.mean / opt.mean;
    let rel = ((alg.std_error / alg.mean).powi(2) + (opt.std_error / opt.mean).powi(2)).sqrt();
    Ok(HalfReport {
        opt,
        alg,
        alg_closed_form: closed,
        ratio,
        ratio_std_error: ratio * rel,
        estimation_slack: slack,
    })
}

/// `E[(X - t)^+]`.
fn expected_excess(d: &QuantileDistribution, t: f64) -> f64 {
    if d.sup() <= t {
        return 0.0;
    }
    if d.quantile(1.0) > t {
        return d.mean() - t;
    }
    let (lo, _) = quad::bisect_predicate(|u| d.quantile(u) > t, 0.0, 1.0, 0.0);
    (d.pe(lo) - t * lo).max(0.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct OnlineSolution {
    /// `V_1, ..., V_{n+1}` with `V_{n+1} = 0`.
    pub values: Vec<f64>,
    /// Step `i` accepts iff `B x ≥ p V_{i+1}`; this is `p V_{i+1} / B`.
    pub thresholds: Vec<f64>,
}

impl OnlineSolution {
    pub fn value(&self) -> f64 {
        self.values[0]
    }
}

/// Optimal online policy by backward induction:
/// `V_i = V_{i+1} + E[(B X_i - p V_{i+1})^+]`.
pub fn online_optimal(inst: &NonIidInstance) -> OnlineSolution {
    let n = inst.n();
    let (p, b) = (inst.p, inst.recovery_factor());
    let mut values = vec![0.0; n + 1];
    let mut thresholds = vec![0.0; n];
    for i in (0..n).rev() {
        let next = values[i + 1];
        let gain = if b > 0.0 {
            thresholds[i] = p * next / b;
            b * expected_excess(&inst.dists[i], thresholds[i])
        } else {
            thresholds[i] = f64::INFINITY;
            0.0
        };
        values[i] = next + gain;
    }
    OnlineSolution { values, thresholds }
}

#[derive(Debug, Clone, Serialize)]
pub struct TightInstance {
    #[serde(skip)]
    pub instance: NonIidInstance,
    pub alg_value: f64,
    pub opt_value: f64,
    pub ratio: f64,
}

/// `n - 1` deterministic values `p - ε` followed by `1/ε` with probability `ε`.
pub fn tight_instance(n: usize, eps: f64, p: f64, zeta: f64) -> Result<TightInstance> {
    if n == 0 || !(p > 0.0 && p < 1.0) || !(eps > 0.0 && eps < p) {
        return Err(Error::InvalidInstance(format!(
            "tight instance needs n >= 1, p in (0, 1) and eps in (0, p) (n={n}, p={p}, eps={eps})"
        )));
    }
    let mut dists = vec![QuantileDistribution::point_mass(p - eps)?; n - 1];
    dists.push(QuantileDistribution::discrete(&[(1.0 / eps, eps), (0.0, 1.0 - eps)])?);
    let instance = NonIidInstance::new(dists, p, zeta)?;
    let b = instance.recovery_factor();
    let geo = -quad::pow1m(p, (n - 1) as f64) + 1.0;
    let opt = b * (1.0 + (p - eps) * (1.0 - eps * p) / p * geo);
    Ok(TightInstance {
        instance,
        alg_value: b,
        opt_value: opt,
        ratio: b / opt,
    })
}

/// Exact benchmark selection probabilities on the tight instance.
pub fn tight_opt_probs(n: usize, eps: f64, p: f64) -> Vec<f64> {
    let mut z: Vec<f64> = (1..n)
        .map(|i| eps * (1.0 - p).powi(i as i32) + (1.0 - eps) * (1.0 - p).powi(i as i32 - 1))
        .collect();
    z.push(eps);
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clairvoyant;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand::SeedableRng;

    fn two_step() -> NonIidInstance {
        NonIidInstance::new(
            vec![
                QuantileDistribution::uniform(0.0, 1.0).unwrap(),
                QuantileDistribution::discrete(&[(4.0, 0.25), (1.0, 0.75)]).unwrap(),
            ],
            0.4,
            0.3,
        )
        .unwrap()
    }

    #[test]
    fn schedule_edge_cases() {
        let inst = two_step();
        let s = build_schedule(&inst, &[0.0, 0.0]).unwrap();
        assert_eq!(s.eps, vec![0.5, 0.5]);
        assert_eq!(s.reach, vec![1.0, 1.0]);
        let s = build_schedule(&inst, &[1.0, 1.0]).unwrap();
        assert_eq!((s.eps[0], s.reach[0]), (0.5, 1.0));
        assert!((s.reach[1] - 0.8).abs() < 1e-15);
        assert!(s.max_invariant_error(inst.p()) < 1e-12);
    }

    #[test]
    fn full_budget_gives_half_reach() {
        let dists = vec![QuantileDistribution::uniform(0.0, 1.0).unwrap(); 3];
        let inst = NonIidInstance::new(dists, 0.5, 0.0).unwrap();
        let s = build_schedule(&inst, &[1.0, 1.0, 0.5]).unwrap();
        assert!((s.reach[2] - 0.5).abs() < 1e-15);
        assert!(s.eps[2].abs() < 1e-15);
    }

    #[test]
    fn budget_violation_is_rejected() {
        let dists = vec![QuantileDistribution::uniform(0.0, 1.0).unwrap(); 4];
        let inst = NonIidInstance::new(dists, 0.5, 0.0).unwrap();
        let err = build_schedule(&inst, &[1.0, 1.0, 0.5, 0.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidSchedule(_)));
        assert!(build_schedule(&inst, &[1.0, 1.1, 0.0, 0.0]).is_err());
        assert!(build_schedule(&inst, &[1.0]).is_err());
    }

    #[test]
    fn single_item_is_exactly_half() {
        let d = QuantileDistribution::truncated_exponential(1.5, 3.0).unwrap();
        let inst = NonIidInstance::new(vec![d.clone()], 0.3, 0.6).unwrap();
        let s = build_schedule(&inst, &[1.0]).unwrap();
        let b = inst.recovery_factor();
        assert!((alg_value(&inst, &s).unwrap() - 0.5 * b * d.mean()).abs() < 1e-12);
        let est = estimate_opt_probs(&inst, &McConfig::new(20_000, 1)).unwrap();
        assert_eq!(est.z[0].mean, 1.0);
        assert!(est.opt_value.covers(b * d.mean(), 4.0));
    }

    #[test]
    fn identical_items_have_symmetric_z_up_to_ties() {
        let d = QuantileDistribution::uniform(1.0, 2.0).unwrap();
        let inst = NonIidInstance::new(vec![d; 5], 0.3, 0.0).unwrap();
        let est = estimate_opt_probs(&inst, &McConfig::new(100_000, 3)).unwrap();
        let mean = est.z_means().iter().sum::<f64>() / 5.0;
        for e in &est.z {
            assert!(e.covers(mean, 4.0 * 2.0), "{e:?} vs {mean}");
        }
        // Σ z = Σ_{j≤5} (1-p)^{j-1} exactly
        let total: f64 = est.z_means().iter().sum();
        assert!((total - (1.0 - 0.7f64.powi(5)) / 0.3).abs() < 1e-9);
    }

    #[test]
    fn decreasing_point_masses_give_geometric_z() {
        let dists: Vec<_> = (0..6).map(|k| QuantileDistribution::point_mass(6.0 - k as f64).unwrap()).collect();
        let inst = NonIidInstance::new(dists, 0.25, 0.0).unwrap();
        let est = estimate_opt_probs(&inst, &McConfig::new(10, 5)).unwrap();
        for (i, e) in est.z.iter().enumerate() {
            assert!((e.mean - 0.75f64.powi(i as i32)).abs() < 1e-15);
            let prefix: f64 = est.z[..i].iter().map(|e| e.mean).sum();
            assert!(prefix <= (1.0 - 0.75f64.powi(i as i32)) / 0.25 + 1e-12);
        }
    }

    #[test]
    fn tight_instance_probabilities_match_closed_form() {
        let (n, eps, p) = (8, 0.1, 0.3);
        let t = tight_instance(n, eps, p, 0.2).unwrap();
        let est = estimate_opt_probs(&t.instance, &McConfig::new(200_000, 9)).unwrap();
        for (e, z) in est.z.iter().zip(tight_opt_probs(n, eps, p)) {
            assert!(e.covers(z, 4.0), "{e:?} vs {z}");
        }
        assert!(est.opt_value.covers(t.opt_value, 4.0), "{:?} vs {}", est.opt_value, t.opt_value);
    }

    #[test]
    fn tight_instance_online_optimum_skips() {
        let t = tight_instance(50, 0.01, 0.5, 0.4).unwrap();
        let online = online_optimal(&t.instance);
        assert!((online.value() - t.alg_value).abs() < 1e-12);
        let b = t.instance.recovery_factor();
        for i in 0..49 {
            // accepting p - ε yields B(p-ε) + (1-p)B = B(1-ε) < B
            assert!(online.thresholds[i] > 0.5 - 0.01, "step {i}");
            assert!((online.values[i + 1] - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tight_ratio_approaches_half() {
        let t = tight_instance(10_000, 1e-4, 0.5, 0.0).unwrap();
        assert!((t.ratio - 0.5).abs() < 0.01);
        assert!(tight_instance(5, 0.6, 0.5, 0.0).is_err());
        let one = tight_instance(1, 0.1, 0.5, 0.0).unwrap();
        assert!((one.ratio - 1.0).abs() < 1e-15);
    }

    #[test]
    fn online_dp_matches_discrete_dp_on_iid() {
        let mut rng = McRng::seed_from_u64(4);
        for _ in 0..20 {
            let di = crate::dp::DiscreteInstance::random(&mut rng, 6, 4);
            let inst = NonIidInstance::new(vec![di.dist().clone(); di.n()], di.p(), di.zeta()).unwrap();
            let a = online_optimal(&inst).value();
            let b = crate::dp::solve(&di).d1();
            assert!((a - b).abs() <= 1e-12 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn simulation_matches_closed_form() {
        let inst = two_step();
        let s = build_schedule(&inst, &[0.6, 0.9]).unwrap();
        let v = policy_value(&inst, &s, &McConfig::new(300_000, 11)).unwrap();
        assert!(v.covers(alg_value(&inst, &s).unwrap(), 4.0));
    }

    #[test]
    fn iid_case_clears_half_of_clairvoyant() {
        let d = QuantileDistribution::polynomial(2.0, 1.5).unwrap();
        for &(n, p, zeta) in &[(5usize, 0.5, 0.0), (12, 0.2, 0.5), (20, 0.9, 1.0)] {
            let inst = Instance::new(n, d.clone(), p, zeta).unwrap();
            let ni = NonIidInstance::iid(&inst);
            let est = estimate_opt_probs(&ni, &McConfig::new(50_000, 2)).unwrap();
            let opt = clairvoyant::opt_value(&inst).unwrap().value;
            assert!(est.opt_value.covers(opt, 4.0));
            let s = build_schedule(&ni, &est.z_means()).unwrap();
            assert!(alg_value(&ni, &s).unwrap() >= 0.5 * opt * (1.0 - 1e-3));
        }
    }

    #[test]
    fn json_round_trip() {
        let inst = two_step();
        let back = NonIidInstance::from_json(&inst.to_json().unwrap()).unwrap();
        assert_eq!(back.n(), 2);
        for (a, b) in inst.dists().iter().zip(back.dists()) {
            for k in 0..=20 {
                let q = k as f64 / 20.0;
                assert!((a.quantile(q) - b.quantile(q)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn half_guarantee_on_random_fixtures() {
        let mut rng = McRng::seed_from_u64(17);
        for k in 0..8 {
            let inst = NonIidInstance::random(&mut rng, 10);
            let r = half_report(&inst, &McConfig::new(20_000, k), &McConfig::new(20_000, 100 + k)).unwrap();
            assert!(r.passes(4.0), "{r:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn feasible_z_gives_valid_schedule(seed in 0u64..10_000, p in 0.05f64..0.95) {
            let mut rng = McRng::seed_from_u64(seed);
            let n = rng.random_range(1..=15);
            // any z below the per-rank budget is feasible
            let z: Vec<f64> = (0..n).map(|i| rng.random::<f64>() * (1.0 - p).powi(i as i32)).collect();
            let dists = vec![QuantileDistribution::uniform(0.0, 1.0).unwrap(); n];
            let inst = NonIidInstance::new(dists, p, 0.0).unwrap();
            let s = build_schedule(&inst, &z).unwrap();
            prop_assert!(s.max_invariant_error(p) < 1e-9);
            prop_assert!(s.eps.iter().all(|e| (0.0..=1.0).contains(e)));
            prop_assert!(s.reach.iter().all(|&r| r >= 0.5 - 1e-12));
        }
    }
}
