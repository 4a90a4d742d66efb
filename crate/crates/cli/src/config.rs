//! Experiment configuration: JSON files overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use osud_core::dist::QuantileDistribution;
use serde::Deserialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Fixed quantile threshold.
    Nonadaptive,
    /// Per-step quantile densities.
    Adaptive,
    /// Best fixed quantile on the three-point hard instance.
    Hard,
    /// Fixed quantile under the max-value objective.
    Max,
    /// Skipping policy on independent non-identical values.
    Noniid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Fields of a ratio experiment. Every field is optional in the file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: Option<u32>,
    pub algorithm: Option<Algorithm>,
    pub n: Option<usize>,
    pub p: Option<f64>,
    pub zeta: Option<f64>,
    pub dist: Option<String>,
    pub instance: Option<PathBuf>,
    pub q: Option<f64>,
    pub beta: Option<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub tol: Option<f64>,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        match cfg.schema_version {
            Some(SCHEMA_VERSION) => Ok(cfg),
            Some(v) => bail!("unsupported schema_version {v}; expected {SCHEMA_VERSION}"),
            None => bail!("config {} has no schema_version", path.display()),
        }
    }

    /// Fields set in `flags` replace those in `self`.
    pub fn overridden_by(self, flags: ExperimentConfig) -> Self {
        Self {
            schema_version: self.schema_version,
            algorithm: flags.algorithm.or(self.algorithm),
            n: flags.n.or(self.n),
            p: flags.p.or(self.p),
            zeta: flags.zeta.or(self.zeta),
            dist: flags.dist.or(self.dist),
            instance: flags.instance.or(self.instance),
            q: flags.q.or(self.q),
            beta: flags.beta.or(self.beta),
            trials: flags.trials.or(self.trials),
            seed: flags.seed.or(self.seed),
            workers: flags.workers.or(self.workers),
            tol: flags.tol.or(self.tol),
            format: flags.format.or(self.format),
            output: flags.output.or(self.output),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.algorithm.is_none() {
            bail!("no algorithm given (use --algorithm or the config file)");
        }
        if let Some(p) = self.p {
            if !(p > 0.0 && p < 1.0) {
                bail!("p must lie in (0, 1), got {p}");
            }
        }
        if let Some(z) = self.zeta {
            if !(0.0..=1.0).contains(&z) {
                bail!("zeta must lie in [0, 1], got {z}");
            }
        }
        if self.n == Some(0) {
            bail!("n must be at least 1");
        }
        if let Some(q) = self.q {
            if !(q > 0.0 && q <= 1.0) {
                bail!("q must lie in (0, 1], got {q}");
            }
        }
        if let Some(t) = self.tol {
            if !(t >= 0.0) {
                bail!("tol must be nonnegative, got {t}");
            }
        }
        let simulates = self.trials.unwrap_or(0) > 0 || self.algorithm == Some(Algorithm::Noniid);
        if simulates && self.seed.is_none() {
            bail!("simulation needs an explicit --seed");
        }
        if self.algorithm == Some(Algorithm::Noniid) && self.instance.is_none() {
            bail!("noniid needs --instance with a JSON instance file");
        }
        Ok(())
    }
}

/// Parses `uniform:lo,hi`, `texp:rate,cap`, `poly:scale,exponent`, `point:v`,
/// `discrete:v@prob,...` or `file:path.json`.
pub fn parse_dist(spec: &str) -> anyhow::Result<QuantileDistribution> {
    let (kind, args) = spec.split_once(':').unwrap_or((spec, ""));
    let nums = || -> anyhow::Result<Vec<f64>> {
        args.split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.trim().parse::<f64>().map_err(|e| anyhow!("bad number {s:?} in {spec:?}: {e}")))
            .collect()
    };
    let want = |v: Vec<f64>, k: usize| -> anyhow::Result<Vec<f64>> {
        if v.len() != k {
            bail!("{kind} takes {k} parameters, got {} in {spec:?}", v.len());
        }
        Ok(v)
    };
    let d = match kind {
        "uniform" if args.is_empty() => QuantileDistribution::uniform(0.0, 1.0),
        "uniform" => {
            let v = want(nums()?, 2)?;
            QuantileDistribution::uniform(v[0], v[1])
        }
        "texp" => {
            let v = want(nums()?, 2)?;
            QuantileDistribution::truncated_exponential(v[0], v[1])
        }
        "poly" => {
            let v = want(nums()?, 2)?;
            QuantileDistribution::polynomial(v[0], v[1])
        }
        "point" => {
            let v = want(nums()?, 1)?;
            QuantileDistribution::point_mass(v[0])
        }
        "discrete" => {
            let pairs = args
                .split(',')
                .map(|item| {
                    let (v, m) = item.split_once('@').ok_or_else(|| anyhow!("expected value@prob, got {item:?}"))?;
                    Ok((v.trim().parse::<f64>()?, m.trim().parse::<f64>()?))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            QuantileDistribution::discrete(&pairs)
        }
        "file" => {
            let text = std::fs::read_to_string(args).with_context(|| format!("reading distribution {args}"))?;
            QuantileDistribution::from_json(&text)
        }
        _ => bail!("unknown distribution kind {kind:?}"),
    };
    Ok(d?)
}
