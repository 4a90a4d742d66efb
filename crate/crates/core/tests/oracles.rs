//! Closed forms against exhaustive enumeration on small discrete instances.

use osud_core::dist::{Instance, QuantileDistribution};
use osud_core::{clairvoyant, maxvariant, nonadaptive};
use proptest::prelude::*;

/// Atoms sorted by value, descending, as `(value, mass)`.
fn atoms(pairs: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut a = pairs.to_vec();
    a.sort_by(|x, y| y.0.total_cmp(&x.0));
    a
}

/// Probability that an item from atom `k` lies in the top `q` quantile.
fn accept_prob(atoms: &[(f64, f64)], k: usize, q: f64) -> f64 {
    let lo: f64 = atoms[..k].iter().map(|a| a.1).sum();
    ((q - lo) / atoms[k].1).clamp(0.0, 1.0)
}

/// Calls `f(values, probability)` for every realization of `n` draws.
fn each_realization(atoms: &[(f64, f64)], n: usize, f: &mut dyn FnMut(&[usize], f64)) {
    let m = atoms.len();
    let mut idx = vec![0usize; n];
    loop {
        let prob: f64 = idx.iter().map(|&k| atoms[k].1).product();
        f(&idx, prob);
        let mut pos = 0;
        loop {
            if pos == n {
                return;
            }
            idx[pos] += 1;
            if idx[pos] < m {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

struct Oracle {
    opt_sum: f64,
    alg_sum: f64,
    opt_max: f64,
    alg_max: f64,
    alg_max_inclusive: f64,
}

fn enumerate(pairs: &[(f64, f64)], n: usize, p: f64, zeta: f64, q: f64) -> Oracle {
    let a = atoms(pairs);
    let b = 1.0 - (1.0 - zeta) * p;
    let mut o = Oracle { opt_sum: 0.0, alg_sum: 0.0, opt_max: 0.0, alg_max: 0.0, alg_max_inclusive: 0.0 };
    each_realization(&a, n, &mut |idx, prob| {
        let mut vals: Vec<f64> = idx.iter().map(|&k| a[k].0).collect();
        let in_order = vals.clone();
        vals.sort_by(|x, y| y.total_cmp(x));
        let opt: f64 = vals.iter().enumerate().map(|(j, v)| b * (1.0 - p).powi(j as i32) * v).sum();
        o.opt_sum += prob * opt;
        o.opt_max += prob * (1.0 - p) * vals[0];
        // every accept/reject pattern
        for mask in 0u32..(1 << n) {
            let mut w = prob;
            let mut accepted = Vec::new();
            for (i, &k) in idx.iter().enumerate() {
                let ap = accept_prob(&a, k, q);
                if mask >> i & 1 == 1 {
                    w *= ap;
                    accepted.push(in_order[i]);
                } else {
                    w *= 1.0 - ap;
                }
            }
            if w == 0.0 {
                continue;
            }
            let sum: f64 = accepted.iter().enumerate().map(|(k, v)| b * (1.0 - p).powi(k as i32) * v).sum();
            o.alg_sum += w * sum;
            let m = accepted.len();
            let (mut mx, mut mx_inc) = (0.0, 0.0);
            let mut running = 0.0f64;
            for (k, &v) in accepted.iter().enumerate() {
                // disruption at the (k+1)-th acceptance
                let pk = p * (1.0 - p).powi(k as i32);
                mx += pk * running;
                mx_inc += pk * running.max(v);
                running = running.max(v);
            }
            let survive = (1.0 - p).powi(m as i32);
            mx += survive * running;
            mx_inc += survive * running;
            o.alg_max += w * mx;
            o.alg_max_inclusive += w * mx_inc;
        }
    });
    o
}

fn instance(pairs: &[(f64, f64)], n: usize, p: f64, zeta: f64) -> Instance {
    Instance::new(n, QuantileDistribution::discrete(pairs).unwrap(), p, zeta).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn small_fixed_cases() {
    let pairs = [(0.0, 0.2), (1.0, 0.5), (3.0, 0.3)];
    for n in 1..=5 {
        for &(p, zeta, q) in &[(0.3, 0.0, 0.45), (0.7, 0.5, 0.3), (0.5, 1.0, 1.0), (0.1, 0.2, 0.1)] {
            let inst = instance(&pairs, n, p, zeta);
            let o = enumerate(&pairs, n, p, zeta, q);
            let opt = clairvoyant::opt_value(&inst).unwrap().value;
            assert!(close(opt, o.opt_sum), "opt n={n} p={p}: {opt} vs {}", o.opt_sum);
            let alg = nonadaptive::alg_value(&inst, q).unwrap();
            assert!(close(alg, o.alg_sum), "alg n={n} p={p} q={q}: {alg} vs {}", o.alg_sum);
            let opt_max = maxvariant::opt_value_max(&inst);
            assert!(close(opt_max, o.opt_max), "opt max n={n}: {opt_max} vs {}", o.opt_max);
            let alg_max = maxvariant::alg_value_max(&inst, q).unwrap();
            assert!(close(alg_max, o.alg_max), "alg max n={n} p={p} q={q}: {alg_max} vs {}", o.alg_max);
            let inc = maxvariant::alg_value_max_with(&inst, q, maxvariant::Counting::Inclusive).unwrap();
            assert!(close(inc, o.alg_max_inclusive), "inclusive n={n} q={q}: {inc} vs {}", o.alg_max_inclusive);
        }
    }
}

#[test]
fn uniform_two_draws_max_benchmark() {
    let inst = Instance::new(2, QuantileDistribution::uniform(0.0, 1.0).unwrap(), 0.5, 0.0).unwrap();
    assert!((maxvariant::opt_value_max(&inst) - 1.0 / 3.0).abs() < 1e-12);
}

fn support() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0u32..20, 0.05f64..1.0), 1..=3).prop_map(|raw| {
        let mut seen = Vec::new();
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (v, w) in raw {
            if !seen.contains(&v) {
                seen.push(v);
                out.push((v as f64 / 4.0, w));
            }
        }
        let total: f64 = out.iter().map(|x| x.1).sum();
        out.iter_mut().for_each(|x| x.1 /= total);
        let rest: f64 = out[..out.len() - 1].iter().map(|x| x.1).sum();
        let last = out.len() - 1;
        out[last].1 = 1.0 - rest;
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn closed_forms_match_enumeration(
        pairs in support(),
        n in 1usize..=4,
        p in 0.05f64..0.95,
        zeta in 0.0f64..=1.0,
        q in 0.01f64..=1.0,
    ) {
        let inst = instance(&pairs, n, p, zeta);
        let o = enumerate(&pairs, n, p, zeta, q);
        prop_assert!(close(clairvoyant::opt_value(&inst).unwrap().value, o.opt_sum));
        prop_assert!(close(clairvoyant::opt_value_order_statistics(&inst).unwrap().value, o.opt_sum));
        prop_assert!(close(nonadaptive::alg_value(&inst, q).unwrap(), o.alg_sum));
        prop_assert!(close(maxvariant::alg_value_max(&inst, q).unwrap(), o.alg_max));
        prop_assert!(close(maxvariant::opt_value_max(&inst), o.opt_max));
    }
}
