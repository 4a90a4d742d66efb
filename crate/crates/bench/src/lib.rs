//! Inputs shared by the benchmarks.

use osud_core::dist::{Instance, QuantileDistribution};
use osud_core::dp::DiscreteInstance;
use osud_core::mc;

pub fn uniform(n: usize, p: f64) -> Instance {
    Instance::new(n, QuantileDistribution::uniform(0.0, 1.0).expect("valid"), p, 0.0).expect("valid")
}

pub fn polynomial(n: usize, p: f64) -> Instance {
    Instance::new(n, QuantileDistribution::polynomial(2.0, 1.5).expect("valid"), p, 0.5).expect("valid")
}

/// A reproducible finite-support instance with horizon `n` and `support` values.
pub fn discrete(n: usize, support: usize, seed: u64) -> DiscreteInstance {
    let mut rng = mc::trial_rng(seed, 0);
    loop {
        let d = DiscreteInstance::random(&mut rng, n, support);
        if d.n() == n && d.support().len() == support {
            return d;
        }
    }
}
