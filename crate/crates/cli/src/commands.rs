use std::path::Path;

use anyhow::Context;
use osud_core::dist::{Instance, QuantileDistribution};
use osud_core::mc::{self, FixedQuantile, McConfig};
use osud_core::noniid::{self, NonIidInstance};
use osud_core::report::{fmt12, BoundKind, RatioReport};
use osud_core::verify::{self, VerifyConfig};
use osud_core::{adaptive, clairvoyant, dp, hillkertz, maxvariant, nonadaptive};
use serde::Serialize;

use crate::config::{parse_dist, Algorithm, ExperimentConfig, Format};
use crate::output::{self, csv_text, emit, json_text};
use crate::Failure;

const ONE_MINUS_INV_E: f64 = 1.0 - std::f64::consts::E.recip();

pub fn constants(ps: &[f64], out: Option<&Path>) -> Result<(), Failure> {
    let t = hillkertz::theta_star_with(1e-12, hillkertz::Scheme::Simpson)?;
    let mut rows = vec![
        vec!["theta_star".into(), String::new(), fmt12(t.theta), fmt12(t.residual)],
        vec!["one_minus_inv_e".into(), String::new(), fmt12(ONE_MINUS_INV_E), "0".into()],
    ];
    for &p in ps {
        let l = hillkertz::lambda_p(p)?;
        rows.push(vec!["lambda".into(), fmt12(p), fmt12(l), fmt12(hillkertz::lambda_residual(p, l))]);
    }
    emit(out, &csv_text(&["quantity", "p", "value", "residual"], rows)?)?;
    Ok(())
}

fn sim_config(cfg: &ExperimentConfig, trials: u64, stream: u64) -> McConfig {
    let seed = cfg.seed.expect("validated: simulation has a seed");
    McConfig::new(trials, mc::splitmix64(seed ^ stream)).with_workers(cfg.workers.unwrap_or(0))
}

/// Computes the report and whether it clears its bound.
pub fn ratio(cfg: &ExperimentConfig) -> Result<(RatioReport, bool), Failure> {
    cfg.validate().map_err(Failure::Config)?;
    let algorithm = cfg.algorithm.expect("validated");
    let p = cfg.p.unwrap_or(0.5);
    let zeta = cfg.zeta.unwrap_or(0.0);
    let trials = cfg.trials.unwrap_or(0);
    let tol = cfg.tol.unwrap_or(1e-9);
    let dist = || -> Result<QuantileDistribution, Failure> {
        parse_dist(cfg.dist.as_deref().unwrap_or("uniform")).map_err(Failure::Config)
    };
    let report = match algorithm {
        Algorithm::Nonadaptive => {
            let n = cfg.n.unwrap_or(10);
            let inst = Instance::new(n, dist()?, p, zeta)?;
            let q = cfg.q.unwrap_or_else(|| nonadaptive::optimal_quantile(n, p));
            let r = nonadaptive::report(&inst, q)?;
            let mut out = base("nonadaptive", &inst, Some(q), r.alg_value, r.opt_value, r.eta_bound, BoundKind::Lower);
            if trials > 0 {
                out.alg_mc = Some(mc::estimate(&inst, &FixedQuantile(q), &sim_config(cfg, trials, 1))?.sum);
                out.opt_mc = Some(clairvoyant::opt_value_mc(&inst, &sim_config(cfg, trials, 2))?);
            }
            out
        }
        Algorithm::Adaptive => {
            let n = cfg.n.unwrap_or(10);
            let inst = Instance::new(n, dist()?, p, zeta)?;
            let s = adaptive::solve_schedule(n, p, zeta)?;
            let alg = adaptive::alg_value(&inst, &s)?;
            let opt = clairvoyant::opt_value(&inst)?.value;
            let mut out = base("adaptive", &inst, None, alg, opt, s.guarantee(), BoundKind::Lower);
            if trials > 0 {
                out.alg_mc = Some(mc::estimate(&inst, &s, &sim_config(cfg, trials, 1))?.sum);
                out.opt_mc = Some(clairvoyant::opt_value_mc(&inst, &sim_config(cfg, trials, 2))?);
            }
            out
        }
        Algorithm::Hard => {
            let n = cfg.n.unwrap_or(100_000);
            let beta = cfg.beta.unwrap_or(200.0);
            let (a1, a2) = (1.0, p * (std::f64::consts::E - 2.0));
            let r = nonadaptive::hard_instance_finite(a1, a2, beta, p, n)?;
            let inst = Instance::new(n, osud_core::dist::hard_instance_dist(a1, a2, beta, n)?, p, 0.0)?;
            let mut out = base("hard", &inst, Some(r.q), r.alg_value, r.opt_value, ONE_MINUS_INV_E + 0.01, BoundKind::Upper);
            if trials > 0 {
                out.alg_mc = Some(mc::estimate(&inst, &FixedQuantile(r.q), &sim_config(cfg, trials, 1))?.sum);
                out.opt_mc = Some(clairvoyant::opt_value_mc(&inst, &sim_config(cfg, trials, 2))?);
            }
            out
        }
        Algorithm::Max => {
            let n = cfg.n.unwrap_or(10);
            let inst = Instance::new(n, dist()?, p, zeta)?;
            let r = match cfg.q {
                Some(q) => maxvariant::report(&inst, q)?,
                None => maxvariant::report_at_optimal(&inst)?,
            };
            let mut out = base("max", &inst, Some(r.q), r.alg_value, r.opt_value, r.lower_bound, BoundKind::Lower);
            if trials > 0 {
                out.alg_mc = Some(mc::estimate(&inst, &FixedQuantile(r.q), &sim_config(cfg, trials, 1))?.max);
            }
            out
        }
        Algorithm::Noniid => {
            let path = cfg.instance.as_ref().expect("validated");
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading instance {}", path.display()))
                .map_err(Failure::Config)?;
            let mut inst = NonIidInstance::from_json(&text)?;
            if cfg.p.is_some() || cfg.zeta.is_some() {
                inst = NonIidInstance::new(inst.dists().to_vec(), cfg.p.unwrap_or(inst.p()), cfg.zeta.unwrap_or(inst.zeta()))?;
            }
            let trials = if trials > 0 { trials } else { 20_000 };
            let est = noniid::estimate_opt_probs(&inst, &sim_config(cfg, trials, 2))?;
            let s = noniid::build_schedule(&inst, &est.z_means())?;
            let alg = noniid::alg_value(&inst, &s)?;
            let sim = noniid::policy_value(&inst, &s, &sim_config(cfg, trials, 1))?;
            RatioReport {
                algorithm: "noniid".into(),
                n: inst.n(),
                p: inst.p(),
                zeta: inst.zeta(),
                q: None,
                alg_value: alg,
                opt_value: est.opt_value.mean,
                ratio: sim.mean / est.opt_value.mean,
                bound: 0.5,
                bound_kind: BoundKind::Lower,
                alg_mc: Some(sim),
                opt_mc: Some(est.opt_value),
            }
        }
    };
    if !report.ratio.is_finite() {
        return Err(Failure::Numeric(anyhow::anyhow!("ratio is not finite: {} / {}", report.alg_value, report.opt_value)));
    }
    // a simulated ratio gets four standard errors of slack
    let slack = if algorithm == Algorithm::Noniid { 4.0 * report.ratio_std_error().unwrap_or(0.0) } else { 0.0 };
    let passes = report.passes(tol + slack);
    let text = match cfg.format.unwrap_or_default() {
        Format::Csv => output::ratio_csv(&report, passes)?,
        Format::Json => json_text(&RatioOutput { report: &report, passes })?,
    };
    emit(cfg.output.as_deref(), &text)?;
    Ok((report, passes))
}

#[derive(Serialize)]
struct RatioOutput<'a> {
    #[serde(flatten)]
    report: &'a RatioReport,
    passes: bool,
}

fn base(
    algorithm: &str,
    inst: &Instance,
    q: Option<f64>,
    alg: f64,
    opt: f64,
    bound: f64,
    bound_kind: BoundKind,
) -> RatioReport {
    RatioReport {
        algorithm: algorithm.into(),
        n: inst.n(),
        p: inst.p(),
        zeta: inst.zeta(),
        q,
        alg_value: alg,
        opt_value: opt,
        ratio: alg / opt,
        bound,
        bound_kind,
        alg_mc: None,
        opt_mc: None,
    }
}

/// `p` values of the λ-curve.
fn lambda_grid() -> Vec<f64> {
    let mut ps = vec![0.001, 0.002, 0.005];
    ps.extend((1..=100).map(|k| k as f64 / 100.0));
    ps
}

const THETA_NS: [usize; 12] = [2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10_000];
const ETA_PS: [f64; 3] = [0.1, 0.5, 0.9];

fn eta_ns() -> Vec<usize> {
    let mut ns: Vec<usize> = (1..=100).collect();
    ns.extend([200, 500, 1000, 2000, 5000, 10_000]);
    ns
}

pub fn curves(out_dir: &Path, p: f64) -> Result<(), Failure> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))
        .map_err(Failure::Config)?;
    let lambda_rows = maxvariant::ratio_curve(&lambda_grid())?
        .into_iter()
        .map(|(p, l, r)| vec![fmt12(p), fmt12(l), fmt12(r)]);
    emit(Some(&out_dir.join("lambda_curve.csv")), &csv_text(&["p", "lambda", "one_minus_exp_neg_lambda"], lambda_rows)?)?;

    let theta_rows = THETA_NS
        .iter()
        .map(|&n| {
            let s = adaptive::solve_schedule(n, p, 0.0)?;
            Ok(vec![n.to_string(), fmt12(s.theta_n), fmt12(s.guarantee())])
        })
        .collect::<osud_core::Result<Vec<_>>>()?;
    emit(Some(&out_dir.join("theta_convergence.csv")), &csv_text(&["n", "theta_n", "guarantee"], theta_rows)?)?;

    let header: Vec<String> = std::iter::once("n".to_string())
        .chain(ETA_PS.iter().map(|p| format!("eta_p{p}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let eta_rows = eta_ns().into_iter().map(|n| {
        std::iter::once(n.to_string())
            .chain(ETA_PS.iter().map(|&p| fmt12(nonadaptive::eta_bound(n, p, nonadaptive::optimal_quantile(n, p)))))
            .collect()
    });
    emit(Some(&out_dir.join("eta_table.csv")), &csv_text(&header, eta_rows)?)?;
    Ok(())
}

pub fn verify(cfg: &VerifyConfig) -> Result<(), Failure> {
    let summary = verify::run(cfg);
    emit(None, &summary.render())?;
    if summary.all_passed() {
        Ok(())
    } else {
        Err(Failure::Criteria(format!("failing criteria: {}", summary.failing().join(", "))))
    }
}

pub fn schedule(n: usize, p: f64, zeta: f64, out: Option<&Path>) -> Result<(), Failure> {
    let s = adaptive::solve_schedule(n, p, zeta)?;
    emit(out, &json_text(&s)?)?;
    Ok(())
}

pub fn ode(grid: usize, out: Option<&Path>) -> Result<(), Failure> {
    let y = hillkertz::solve_y(hillkertz::theta_star(1e-12)?, grid)?;
    let rows = y.rows().map(|(t, v, d)| vec![fmt12(t), fmt12(v), fmt12(d)]);
    emit(out, &csv_text(&["t", "y", "dy_dt"], rows)?)?;
    Ok(())
}

#[derive(Serialize)]
struct DpOutput {
    n: usize,
    p: f64,
    zeta: f64,
    d1: f64,
    values: Vec<f64>,
    thresholds: Vec<usize>,
    threshold_values: Vec<f64>,
}

pub fn dp(instance: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let text = std::fs::read_to_string(instance)
        .with_context(|| format!("reading instance {}", instance.display()))
        .map_err(Failure::Config)?;
    let inst = dp::DiscreteInstance::from_json(&text)?;
    let sol = dp::solve(&inst);
    let o = DpOutput {
        n: inst.n(),
        p: inst.p(),
        zeta: inst.zeta(),
        d1: sol.d1(),
        threshold_values: sol.threshold_values(&inst),
        values: sol.values.clone(),
        thresholds: sol.thresholds.clone(),
    };
    emit(out, &json_text(&o)?)?;
    Ok(())
}
