//! Seeded Monte Carlo engine.
//!
//! Every trial gets its own ChaCha stream derived from `(seed, trial)`, trials
//! are grouped into fixed-size chunks and chunk statistics are merged in chunk
//! order, so estimates are bit-identical for any worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dist::Instance;
use crate::error::{Error, Result};

pub type McRng = ChaCha8Rng;

const CHUNK: u64 = 1024;

/// 64-bit finalizer from SplitMix64.
#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// The random stream of one trial.
pub fn trial_rng(seed: u64, trial: u64) -> McRng {
    McRng::seed_from_u64(splitmix64(seed ^ splitmix64(trial)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McConfig {
    pub trials: u64,
    pub seed: u64,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
}

impl McConfig {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self {
            trials,
            seed,
            workers: 0,
        }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        Self { workers, ..self }
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl Estimate {
    /// True if `value` lies within `k` standard errors of the mean.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let (na, nb) = (self.n as f64, other.n as f64);
        Moments {
            n,
            mean: self.mean + d * nb / n as f64,
            m2: self.m2 + other.m2 + d * d * na * nb / n as f64,
        }
    }

    fn estimate(&self) -> Estimate {
        let var = if self.n > 1 { self.m2 / (self.n - 1) as f64 } else { 0.0 };
        Estimate {
            mean: self.mean,
            std_error: (var / self.n as f64).sqrt(),
            trials: self.n,
        }
    }
}

/// Runs `f` once per trial with that trial's stream and estimates the mean
/// of each of its `K` outputs.
pub fn estimate_with<const K: usize, F>(cfg: &McConfig, f: F) -> Result<[Estimate; K]>
where
    F: Fn(&mut McRng) -> [f64; K] + Sync,
{
    let v = estimate_many(cfg, K, |rng, out| out.copy_from_slice(&f(rng)))?;
    Ok(std::array::from_fn(|i| v[i]))
}

/// Like [`estimate_with`] for a runtime number of outputs; `f` fills a
/// zeroed buffer of length `dim`.
pub fn estimate_many<F>(cfg: &McConfig, dim: usize, f: F) -> Result<Vec<Estimate>>
where
    F: Fn(&mut McRng, &mut [f64]) + Sync,
{
    if cfg.trials == 0 {
        return Err(Error::domain("estimate", "trials must be at least 1"));
    }
    let chunks = cfg.trials.div_ceil(CHUNK);
    let run_chunk = |c: u64| {
        let mut m = vec![Moments::default(); dim];
        let mut out = vec![0.0; dim];
        let end = ((c + 1) * CHUNK).min(cfg.trials);
        for t in c * CHUNK..end {
            let mut rng = trial_rng(cfg.seed, t);
            out.fill(0.0);
            f(&mut rng, &mut out);
            for (acc, &x) in m.iter_mut().zip(&out) {
                acc.push(x);
            }
        }
        m
    };
    let parts: Vec<Vec<Moments>> = if cfg.workers == 1 {
        (0..chunks).map(run_chunk).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::numeric("estimate", e.to_string()))?;
        pool.install(|| (0..chunks).into_par_iter().map(run_chunk).collect())
    };
    let mut total = vec![Moments::default(); dim];
    for part in parts {
        for (acc, m) in total.iter_mut().zip(part) {
            *acc = acc.merge(m);
        }
    }
    Ok(total.into_iter().map(|m| m.estimate()).collect())
}

/// What a policy sees at one step: the value and its position in quantile space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub value: f64,
    /// `U` with `value = F^{-1}(1 - U)`; smaller means better.
    pub quantile: f64,
}

/// A source of sequentially revealed values with geometric disruption.
pub trait Environment: Sync {
    fn horizon(&self) -> usize;
    fn disruption(&self) -> f64;
    fn recovery(&self) -> f64;
    /// Draws the value of step `step` (0-based).
    fn observe(&self, step: usize, rng: &mut McRng) -> Observation;
}

impl Environment for Instance {
    fn horizon(&self) -> usize {
        self.n()
    }

    fn disruption(&self) -> f64 {
        self.p()
    }

    fn recovery(&self) -> f64 {
        self.zeta()
    }

    #[inline]
    fn observe(&self, _step: usize, rng: &mut McRng) -> Observation {
        let (value, quantile) = self.dist().sample_with_quantile(rng);
        Observation { value, quantile }
    }
}

/// An online policy. It only ever sees the current observation.
pub trait Policy: Sync {
    type State: Default;

    /// Accept or reject the value at 0-based `step`.
    fn decide(&self, step: usize, obs: Observation, state: &mut Self::State, rng: &mut McRng) -> bool;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptAll;

impl Policy for AcceptAll {
    type State = ();

    fn decide(&self, _: usize, _: Observation, _: &mut (), _: &mut McRng) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RejectAll;

impl Policy for RejectAll {
    type State = ();

    fn decide(&self, _: usize, _: Observation, _: &mut (), _: &mut McRng) -> bool {
        false
    }
}

/// Accept iff the observation lies in the top `q` of the distribution.
#[derive(Debug, Clone, Copy)]
pub struct FixedQuantile(pub f64);

impl Policy for FixedQuantile {
    type State = ();

    #[inline]
    fn decide(&self, _: usize, obs: Observation, _: &mut (), _: &mut McRng) -> bool {
        obs.quantile <= self.0
    }
}

/// Accept iff the value reaches the step's threshold.
#[derive(Debug, Clone)]
pub struct ValueThresholds(pub Vec<f64>);

impl Policy for ValueThresholds {
    type State = ();

    fn decide(&self, step: usize, obs: Observation, _: &mut (), _: &mut McRng) -> bool {
        obs.value >= self.0[step]
    }
}

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// Values accepted and retained before any disruption.
    pub accepted_values: Vec<f64>,
    pub disrupted: bool,
    pub disrupting_value: Option<f64>,
    /// Retained values plus `ζ` times the disrupting value.
    pub payoff: f64,
    /// Largest retained value, 0 if none.
    pub max_payoff: f64,
}

impl Episode {
    /// Max objective when the disrupting selection also counts.
    pub fn max_payoff_inclusive(&self) -> f64 {
        self.max_payoff.max(self.disrupting_value.unwrap_or(0.0))
    }
}

#[inline]
fn play<E, P, F>(env: &E, policy: &P, rng: &mut McRng, mut on_accept: F)
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
    F: FnMut(f64, bool),
{
    let p = env.disruption();
    let mut state = P::State::default();
    for step in 0..env.horizon() {
        let obs = env.observe(step, rng);
        if policy.decide(step, obs, &mut state, rng) {
            let disrupted = rng.random::<f64>() < p;
            on_accept(obs.value, disrupted);
            if disrupted {
                return;
            }
        }
    }
}

/// Plays one episode, drawing values lazily.
pub fn run_episode<E, P>(env: &E, policy: &P, rng: &mut McRng) -> Episode
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let zeta = env.recovery();
    let mut ep = Episode {
        accepted_values: Vec::new(),
        disrupted: false,
        disrupting_value: None,
        payoff: 0.0,
        max_payoff: 0.0,
    };
    play(env, policy, rng, |v, disrupted| {
        if disrupted {
            ep.disrupted = true;
            ep.disrupting_value = Some(v);
            ep.payoff += zeta * v;
        } else {
            ep.accepted_values.push(v);
            ep.payoff += v;
            ep.max_payoff = ep.max_payoff.max(v);
        }
    });
    ep
}

/// Estimates of the sum objective and both max objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeEstimate {
    pub sum: Estimate,
    pub max: Estimate,
    pub max_inclusive: Estimate,
}

/// Monte Carlo estimate of a policy's value.
pub fn estimate<E, P>(env: &E, policy: &P, cfg: &McConfig) -> Result<EpisodeEstimate>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    if cfg.trials < 2 {
        return Err(Error::domain("estimate", "trials must be at least 2"));
    }
    let zeta = env.recovery();
    let [sum, max, max_inclusive] = estimate_with(cfg, |rng| {
        let (mut payoff, mut best, mut last) = (0.0, 0.0f64, 0.0f64);
        play(env, policy, rng, |v, disrupted| {
            if disrupted {
                payoff += zeta * v;
                last = v;
            } else {
                payoff += v;
                best = best.max(v);
            }
        });
        [payoff, best, best.max(last)]
    })?;
    Ok(EpisodeEstimate {
        sum,
        max,
        max_inclusive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::QuantileDistribution;

    struct Fixed {
        n: usize,
        p: f64,
    }

    impl Environment for Fixed {
        fn horizon(&self) -> usize {
            self.n
        }
        fn disruption(&self) -> f64 {
            self.p
        }
        fn recovery(&self) -> f64 {
            0.5
        }
        fn observe(&self, step: usize, _: &mut McRng) -> Observation {
            Observation {
                value: step as f64 + 1.0,
                quantile: 0.5,
            }
        }
    }

    #[test]
    fn reject_all_pays_nothing() {
        let inst = Instance::new(5, QuantileDistribution::uniform(0.0, 1.0).unwrap(), 0.5, 0.0).unwrap();
        let mut rng = trial_rng(1, 0);
        let ep = run_episode(&inst, &RejectAll, &mut rng);
        assert_eq!(ep.payoff, 0.0);
        assert!(!ep.disrupted && ep.accepted_values.is_empty());
    }

    #[test]
    fn no_disruption_collects_everything() {
        let env = Fixed { n: 4, p: 0.0 };
        let ep = run_episode(&env, &AcceptAll, &mut trial_rng(3, 0));
        assert_eq!(ep.payoff, 10.0);
        assert_eq!(ep.max_payoff, 4.0);
        assert!(!ep.disrupted);
    }

    #[test]
    fn payoff_invariants() {
        let env = Fixed { n: 20, p: 0.3 };
        for t in 0..200 {
            let ep = run_episode(&env, &AcceptAll, &mut trial_rng(9, t));
            let kept: f64 = ep.accepted_values.iter().sum();
            let extra = ep.disrupting_value.map_or(0.0, |v| 0.5 * v);
            assert_eq!(ep.payoff, kept + extra);
            assert_eq!(ep.disrupted, ep.disrupting_value.is_some());
            let best = ep.accepted_values.iter().cloned().fold(0.0, f64::max);
            assert_eq!(ep.max_payoff, best);
        }
    }

    #[test]
    fn accept_all_on_point_mass_follows_geometric_law() {
        // payoff = min(D-1, n) + ζ·1{D <= n}; compare the histogram of min(D-1, n)
        let (n, p) = (6usize, 0.3);
        let inst = Instance::new(n, QuantileDistribution::point_mass(1.0).unwrap(), p, 0.0).unwrap();
        let trials = 200_000u64;
        let mut counts = vec![0u64; n + 1];
        for t in 0..trials {
            let ep = run_episode(&inst, &AcceptAll, &mut trial_rng(5, t));
            counts[ep.accepted_values.len()] += 1;
        }
        let mut chi2 = 0.0;
        for (k, &c) in counts.iter().enumerate() {
            let prob = if k < n { (1.0 - p).powi(k as i32) * p } else { (1.0 - p).powi(n as i32) };
            let expect = prob * trials as f64;
            chi2 += (c as f64 - expect).powi(2) / expect;
        }
        // 6 degrees of freedom; 0.999 quantile is 22.46
        assert!(chi2 < 22.46, "chi2 = {chi2}");
    }

    #[test]
    fn estimates_identical_across_workers() {
        let inst = Instance::new(10, QuantileDistribution::uniform(0.0, 1.0).unwrap(), 0.4, 0.3).unwrap();
        let policy = FixedQuantile(0.25);
        let base = estimate(&inst, &policy, &McConfig::new(5000, 42).with_workers(1)).unwrap();
        for w in [2, 4, 16] {
            let e = estimate(&inst, &policy, &McConfig::new(5000, 42).with_workers(w)).unwrap();
            assert_eq!(base, e);
        }
    }

    #[test]
    fn stderr_scales_with_trials() {
        let inst = Instance::new(5, QuantileDistribution::uniform(0.0, 1.0).unwrap(), 0.5, 0.0).unwrap();
        let a = estimate(&inst, &AcceptAll, &McConfig::new(40_000, 1)).unwrap().sum;
        let b = estimate(&inst, &AcceptAll, &McConfig::new(160_000, 1)).unwrap().sum;
        let ratio = a.std_error / b.std_error;
        assert!((ratio - 2.0).abs() < 0.4, "{ratio}");
    }

    #[test]
    fn rejects_too_few_trials() {
        let inst = Instance::new(5, QuantileDistribution::uniform(0.0, 1.0).unwrap(), 0.5, 0.0).unwrap();
        assert!(estimate(&inst, &AcceptAll, &McConfig::new(1, 1)).is_err());
    }
}
