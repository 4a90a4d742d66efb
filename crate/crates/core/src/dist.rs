//! Value distributions in quantile space.
//!
//! A distribution is stored through its upper-quantile function
//! `Q(q) = F^{-1}(1 - q)` on `(0, 1]`, as an ordered list of segments that
//! are either atoms (constant `Q` over their mass interval) or continuous
//! curves. `q` near 0 holds the largest values.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hillkertz::{self, OdeSolution};
use crate::quad::{self, GaussLegendre, Quadrature, REL_TOL};

const MASS_TOL: f64 = 1e-12;

/// A continuous, nonincreasing quantile curve `q ↦ Q(q)` in global quantile coordinates.
#[derive(Debug, Clone)]
pub enum Curve {
    /// `Q(q) = intercept + slope·q` with `slope ≤ 0`.
    Linear { intercept: f64, slope: f64 },
    /// Piecewise-linear interpolation of `(q, value)` nodes.
    Table(Vec<[f64; 2]>),
    /// Exponential(rate) conditioned on `[0, cap]`.
    TruncatedExponential { rate: f64, cap: f64 },
    /// `Q(q) = scale·(1 - q)^exponent`.
    Polynomial { scale: f64, exponent: f64 },
    /// Continuous part of the adaptive upper-bound instance.
    UpperBoundTail(Arc<UpperBoundTail>),
}

impl Curve {
    pub fn value(&self, q: f64) -> f64 {
        match self {
            Curve::Linear { intercept, slope } => intercept + slope * q,
            Curve::Table(t) => table_value(t, q),
            Curve::TruncatedExponential { rate, cap } => {
                let c = -(-rate * cap).exp_m1();
                (-(-(1.0 - q) * c).ln_1p() / rate).max(0.0)
            }
            Curve::Polynomial { scale, exponent } => scale * (1.0 - q).max(0.0).powf(*exponent),
            Curve::UpperBoundTail(t) => t.value(q),
        }
    }

    /// `dQ/dq`, always `≤ 0`.
    pub fn slope(&self, q: f64) -> f64 {
        match self {
            Curve::Linear { slope, .. } => *slope,
            Curve::Table(t) => {
                let k = table_segment(t, q);
                (t[k + 1][1] - t[k][1]) / (t[k + 1][0] - t[k][0])
            }
            Curve::TruncatedExponential { rate, cap } => {
                let c = -(-rate * cap).exp_m1();
                let w = 1.0 - (1.0 - q) * c;
                -c / (rate * w)
            }
            Curve::Polynomial { scale, exponent } => {
                -scale * exponent * (1.0 - q).max(0.0).powf(exponent - 1.0)
            }
            Curve::UpperBoundTail(t) => t.slope(q),
        }
    }

    /// `∫_a^b Q(q) dq` in closed form.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Curve::Linear { intercept, slope } => intercept * (b - a) + 0.5 * slope * (b * b - a * a),
            Curve::Table(t) => table_integral(t, a, b),
            Curve::TruncatedExponential { rate, cap } => {
                let c = -(-rate * cap).exp_m1();
                let g = |q: f64| {
                    let w = 1.0 - (1.0 - q) * c;
                    -(quad::xlogx(w) - w) / (rate * c)
                };
                g(b) - g(a)
            }
            Curve::Polynomial { scale, exponent } => {
                let g = |q: f64| -scale * (1.0 - q).max(0.0).powf(exponent + 1.0) / (exponent + 1.0);
                g(b) - g(a)
            }
            Curve::UpperBoundTail(t) => t.integral(a, b),
        }
    }

    /// Interior points where the curve is not smooth.
    fn kinks(&self, a: f64, b: f64) -> Vec<f64> {
        match self {
            Curve::Table(t) => t.iter().map(|p| p[0]).filter(|&q| q > a && q < b).collect(),
            Curve::UpperBoundTail(t) => {
                let end = t.support_end();
                if end > a && end < b {
                    vec![end]
                } else {
                    Vec::new()
                }
            }
            _ => Vec::new(),
        }
    }
}

fn table_segment(t: &[[f64; 2]], q: f64) -> usize {
    let i = t.partition_point(|p| p[0] <= q);
    i.clamp(1, t.len() - 1) - 1
}

fn table_value(t: &[[f64; 2]], q: f64) -> f64 {
    let k = table_segment(t, q);
    let (q0, v0) = (t[k][0], t[k][1]);
    let (q1, v1) = (t[k + 1][0], t[k + 1][1]);
    let s = ((q - q0) / (q1 - q0)).clamp(0.0, 1.0);
    v0 + s * (v1 - v0)
}

fn table_integral(t: &[[f64; 2]], a: f64, b: f64) -> f64 {
    let mut nodes = vec![a];
    nodes.extend(t.iter().map(|p| p[0]).filter(|&q| q > a && q < b));
    nodes.push(b);
    nodes
        .windows(2)
        .map(|w| 0.5 * (w[1] - w[0]) * (table_value(t, w[0]) + table_value(t, w[1])))
        .sum()
}

/// Tabulated `Ψ(x) = ∫_x^{x_e} e^{-s} / f(e^{-s})² ds` and `Φ(x) = ∫_x^{x_e} Ψ`,
/// giving the continuous part `c·Ψ(κ q)` of the upper-bound instance.
#[derive(Debug)]
pub struct UpperBoundTail {
    coef: f64,
    scale: f64,
    x_end: f64,
    beta: f64,
    step: f64,
    psi: Vec<f64>,
    phi: Vec<f64>,
}

impl UpperBoundTail {
    const NODES: usize = 4096;

    fn new(coef: f64, scale: f64, x_end: f64, beta: f64) -> Self {
        let m = Self::NODES;
        let step = x_end / m as f64;
        let gl = GaussLegendre::new(12);
        let dens = |s: f64| {
            let f = hillkertz::rhs((-s).exp(), beta);
            (-s).exp() / (f * f)
        };
        let mut psi = vec![0.0; m + 1];
        for k in (0..m).rev() {
            let a = k as f64 * step;
            psi[k] = psi[k + 1] + gl.integrate(dens, a, a + step);
        }
        let mut phi = vec![0.0; m + 1];
        for k in (0..m).rev() {
            // exact integral of the cubic Hermite interpolant of Ψ
            let d0 = -dens(k as f64 * step);
            let d1 = -dens((k + 1) as f64 * step);
            phi[k] = phi[k + 1] + 0.5 * step * (psi[k] + psi[k + 1]) + step * step * (d0 - d1) / 12.0;
        }
        Self {
            coef,
            scale,
            x_end,
            beta,
            step,
            psi,
            phi,
        }
    }

    fn dpsi(&self, x: f64) -> f64 {
        let f = hillkertz::rhs((-x).exp(), self.beta);
        -(-x).exp() / (f * f)
    }

    fn hermite(&self, x: f64, vals: &[f64], deriv: impl Fn(f64) -> f64) -> f64 {
        if x >= self.x_end {
            return 0.0;
        }
        let x = x.max(0.0);
        let k = ((x / self.step) as usize).min(Self::NODES - 1);
        let x0 = k as f64 * self.step;
        let h = self.step;
        let s = (x - x0) / h;
        let (y0, y1) = (vals[k], vals[k + 1]);
        let (d0, d1) = (deriv(x0) * h, deriv(x0 + h) * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1
    }

    /// `Ψ(x)`.
    pub fn psi(&self, x: f64) -> f64 {
        self.hermite(x, &self.psi, |s| self.dpsi(s)).max(0.0)
    }

    /// `Φ(x) = ∫_x^{x_e} Ψ`.
    pub fn phi(&self, x: f64) -> f64 {
        self.hermite(x, &self.phi, |s| -self.psi_at_node(s)).max(0.0)
    }

    fn psi_at_node(&self, x: f64) -> f64 {
        let k = (x / self.step).round() as usize;
        if k <= Self::NODES && ((k as f64 * self.step) - x).abs() < 1e-9 * self.step.max(1.0) {
            self.psi[k]
        } else {
            self.psi(x)
        }
    }

    pub fn value(&self, q: f64) -> f64 {
        self.coef * self.psi(self.scale * q)
    }

    pub fn slope(&self, q: f64) -> f64 {
        let x = self.scale * q;
        if x >= self.x_end {
            0.0
        } else {
            self.coef * self.scale * self.dpsi(x)
        }
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.coef / self.scale * (self.phi(self.scale * a) - self.phi(self.scale * b))
    }

    /// Quantile beyond which the tail is zero.
    pub fn support_end(&self) -> f64 {
        self.x_end / self.scale
    }
}

/// Construction-time description of one segment.
#[derive(Debug, Clone)]
pub enum Piece {
    Atom { mass: f64, value: f64 },
    Continuous { q_lo: f64, q_hi: f64, curve: Curve },
}

#[derive(Debug, Clone)]
enum Kind {
    Atom(f64),
    Continuous(Curve),
}

#[derive(Debug, Clone)]
struct Segment {
    q_lo: f64,
    q_hi: f64,
    kind: Kind,
}

impl Segment {
    fn value(&self, q: f64) -> f64 {
        match &self.kind {
            Kind::Atom(v) => *v,
            Kind::Continuous(c) => c.value(q.clamp(self.q_lo, self.q_hi)),
        }
    }

    fn top(&self) -> f64 {
        self.value(self.q_lo)
    }

    fn bottom(&self) -> f64 {
        self.value(self.q_hi)
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        match &self.kind {
            Kind::Atom(v) => v * (b - a),
            Kind::Continuous(c) => c.integral(a, b),
        }
    }
}

/// A value distribution represented by its upper-quantile function.
#[derive(Debug, Clone)]
pub struct QuantileDistribution {
    segments: Vec<Segment>,
}

impl QuantileDistribution {
    /// Validates and assembles pieces ordered from the top of the distribution.
    pub fn new(pieces: Vec<Piece>) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidInstance(msg));
        if pieces.is_empty() {
            return bad("distribution has no pieces".into());
        }
        let mut segments = Vec::with_capacity(pieces.len());
        let mut cursor = 0.0;
        for piece in pieces {
            let seg = match piece {
                Piece::Atom { mass, value } => {
                    if !(mass > 0.0) || !mass.is_finite() {
                        return bad(format!("atom mass must be positive, got {mass}"));
                    }
                    if !(value >= 0.0) || !value.is_finite() {
                        return bad(format!("atom value must be finite and nonnegative, got {value}"));
                    }
                    Segment {
                        q_lo: cursor,
                        q_hi: cursor + mass,
                        kind: Kind::Atom(value),
                    }
                }
                Piece::Continuous { q_lo, q_hi, curve } => {
                    if (q_lo - cursor).abs() > MASS_TOL {
                        return bad(format!("continuous piece starts at {q_lo}, expected {cursor}"));
                    }
                    if !(q_hi > q_lo) {
                        return bad(format!("empty continuous piece ({q_lo}, {q_hi}]"));
                    }
                    validate_curve(&curve, q_lo, q_hi)?;
                    Segment {
                        q_lo: cursor,
                        q_hi,
                        kind: Kind::Continuous(curve),
                    }
                }
            };
            cursor = seg.q_hi;
            segments.push(seg);
        }
        if (cursor - 1.0).abs() > MASS_TOL {
            return bad(format!("pieces carry total mass {cursor}, expected 1"));
        }
        segments.last_mut().expect("nonempty").q_hi = 1.0;
        for w in segments.windows(2) {
            let (up, down) = (w[0].bottom(), w[1].top());
            if down > up + 1e-12 * up.abs().max(1.0) {
                return bad(format!("quantile function increases at q={}: {up} -> {down}", w[0].q_hi));
            }
        }
        Ok(Self { segments })
    }

    pub fn point_mass(value: f64) -> Result<Self> {
        Self::new(vec![Piece::Atom { mass: 1.0, value }])
    }

    /// Uniform on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0 && hi >= lo) {
            return Err(Error::InvalidInstance(format!("uniform needs 0 <= lo <= hi, got [{lo}, {hi}]")));
        }
        if hi == lo {
            return Self::point_mass(lo);
        }
        Self::continuous(Curve::Linear {
            intercept: hi,
            slope: lo - hi,
        })
    }

    /// Exponential with the given rate conditioned on `[0, cap]`.
    pub fn truncated_exponential(rate: f64, cap: f64) -> Result<Self> {
        if !(rate > 0.0 && cap > 0.0) {
            return Err(Error::InvalidInstance("truncated exponential needs rate, cap > 0".into()));
        }
        Self::continuous(Curve::TruncatedExponential { rate, cap })
    }

    /// `Q(q) = scale·(1 - q)^exponent`, i.e. `F(x) = (x/scale)^{1/exponent}` on `[0, scale]`.
    pub fn polynomial(scale: f64, exponent: f64) -> Result<Self> {
        if !(scale > 0.0 && exponent > 0.0) {
            return Err(Error::InvalidInstance("polynomial needs scale, exponent > 0".into()));
        }
        Self::continuous(Curve::Polynomial { scale, exponent })
    }

    /// Piecewise-linear quantile table over `(0, 1]`.
    pub fn from_table(points: Vec<[f64; 2]>) -> Result<Self> {
        Self::continuous(Curve::Table(points))
    }

    /// Finite support given as `(value, probability)` pairs in any order.
    pub fn discrete(support: &[(f64, f64)]) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = support.iter().copied().filter(|&(_, m)| m > 0.0).collect();
        atoms.sort_by(|a, b| b.0.total_cmp(&a.0));
        Self::new(
            atoms
                .into_iter()
                .map(|(value, mass)| Piece::Atom { mass, value })
                .collect(),
        )
    }

    fn continuous(curve: Curve) -> Result<Self> {
        Self::new(vec![Piece::Continuous {
            q_lo: 0.0,
            q_hi: 1.0,
            curve,
        }])
    }

    fn locate(&self, q: f64) -> usize {
        // first segment with q <= q_hi
        let i = self.segments.partition_point(|s| s.q_hi < q);
        i.min(self.segments.len() - 1)
    }

    /// `F^{-1}(1 - q)` for `q ∈ (0, 1]`.
    pub fn inverse_cdf(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::domain("inverse_cdf", format!("q must lie in (0, 1], got {q}")));
        }
        Ok(self.quantile(q))
    }

    /// Unchecked `Q(q)`; `q` is clamped into `[0, 1]`.
    #[inline]
    pub fn quantile(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        self.segments[self.locate(q)].value(q)
    }

    /// `∫_0^q F^{-1}(1 - u) du`.
    pub fn partial_expectation(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::domain("partial_expectation", format!("q must lie in [0, 1], got {q}")));
        }
        Ok(self.pe(q))
    }

    pub(crate) fn pe(&self, q: f64) -> f64 {
        let mut acc = quad::NeumaierSum::default();
        for s in &self.segments {
            if s.q_lo >= q {
                break;
            }
            acc.add(s.integral(s.q_lo, s.q_hi.min(q)));
        }
        acc.total()
    }

    /// `∫_a^b Q`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.pe(b) - self.pe(a)
    }

    pub fn mean(&self) -> f64 {
        self.pe(1.0)
    }

    /// Largest value in the support.
    pub fn sup(&self) -> f64 {
        self.segments[0].top()
    }

    /// Draws a value.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_with_quantile(rng).0
    }

    /// Draws `(Q(U), U)` with `U` uniform on `(0, 1]`. Within an atom `U` is the
    /// tie-breaking position of the draw.
    #[inline]
    pub fn sample_with_quantile<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let u = 1.0 - rng.random::<f64>();
        (self.quantile(u), u)
    }

    /// Points where `Q` or its slope may be discontinuous, including 0 and 1.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        for s in &self.segments {
            if let Kind::Continuous(c) = &s.kind {
                out.extend(c.kinks(s.q_lo, s.q_hi));
            }
            out.push(s.q_hi);
        }
        out
    }

    /// `∫_a^b Q(q) w(q) dq` by piecewise adaptive Simpson; `hints` are extra
    /// subdivision points where `w` varies quickly.
    pub fn integrate_weighted<W: Fn(f64) -> f64>(&self, w: W, a: f64, b: f64, hints: &[f64]) -> Quadrature {
        let mut total = Quadrature::ZERO;
        if !(b > a) {
            return total;
        }
        for s in &self.segments {
            let (lo, hi) = (s.q_lo.max(a), s.q_hi.min(b));
            if hi <= lo {
                continue;
            }
            let mut breaks = vec![lo];
            if let Kind::Continuous(c) = &s.kind {
                breaks.extend(c.kinks(lo, hi));
            }
            breaks.extend(hints.iter().copied().filter(|&h| h > lo && h < hi));
            breaks.push(hi);
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            let q = match &s.kind {
                Kind::Atom(v) => quad::simpson_piecewise(&w, &breaks, REL_TOL, 1e-300).scale(*v),
                Kind::Continuous(c) => quad::simpson_piecewise(|x| c.value(x) * w(x), &breaks, REL_TOL, 1e-300),
            };
            total = total.add(q);
        }
        total
    }

    /// Stieltjes form `h(1)Q(1) + ∫_{(0,1]} h d(-Q)`: slopes of continuous
    /// pieces plus jumps at segment boundaries. Equals `∫ Q h'` when `h(0) = 0`.
    pub fn stieltjes<H: Fn(f64) -> f64>(&self, h: H, hints: &[f64]) -> Quadrature {
        let last = self.segments.last().expect("nonempty");
        let mut total = Quadrature {
            value: h(1.0) * last.bottom(),
            ..Quadrature::ZERO
        };
        for (k, s) in self.segments.iter().enumerate() {
            if let Kind::Continuous(c) = &s.kind {
                let mut breaks = vec![s.q_lo];
                breaks.extend(c.kinks(s.q_lo, s.q_hi));
                breaks.extend(hints.iter().copied().filter(|&x| x > s.q_lo && x < s.q_hi));
                breaks.push(s.q_hi);
                breaks.sort_by(f64::total_cmp);
                breaks.dedup();
                let q = quad::simpson_piecewise(|x| -c.slope(x) * h(x), &breaks, REL_TOL, 1e-300);
                total = total.add(q);
            }
            if let Some(next) = self.segments.get(k + 1) {
                let jump = s.bottom() - next.top();
                if jump != 0.0 {
                    total.value += h(s.q_hi) * jump;
                }
            }
        }
        total
    }

    /// True when the distribution has no atoms.
    pub fn is_atomless(&self) -> bool {
        self.segments.iter().all(|s| matches!(s.kind, Kind::Continuous(_)))
    }

    /// The segments as construction pieces.
    pub fn pieces(&self) -> Vec<Piece> {
        self.segments
            .iter()
            .map(|s| match &s.kind {
                Kind::Atom(v) => Piece::Atom {
                    mass: s.q_hi - s.q_lo,
                    value: *v,
                },
                Kind::Continuous(c) => Piece::Continuous {
                    q_lo: s.q_lo,
                    q_hi: s.q_hi,
                    curve: c.clone(),
                },
            })
            .collect()
    }

    /// Serializable form. Analytic curves are exported as 257-node tables.
    pub fn to_spec(&self) -> DistSpec {
        DistSpec {
            pieces: self
                .segments
                .iter()
                .map(|s| match &s.kind {
                    Kind::Atom(v) => PieceSpec::Atom {
                        mass: s.q_hi - s.q_lo,
                        value: *v,
                    },
                    Kind::Continuous(c) => {
                        let table = match c {
                            Curve::Table(t) => t.clone(),
                            _ => (0..=256)
                                .map(|k| {
                                    let q = s.q_lo + (s.q_hi - s.q_lo) * k as f64 / 256.0;
                                    [q, c.value(q)]
                                })
                                .collect(),
                        };
                        PieceSpec::Continuous {
                            q_lo: s.q_lo,
                            q_hi: s.q_hi,
                            table,
                        }
                    }
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_spec())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: DistSpec = serde_json::from_str(text)?;
        Self::try_from(spec)
    }
}

fn validate_curve(curve: &Curve, q_lo: f64, q_hi: f64) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidInstance(msg));
    match curve {
        Curve::Linear { slope, .. } if *slope > 0.0 => return bad(format!("linear slope {slope} > 0")),
        Curve::Table(t) => {
            if t.len() < 2 {
                return bad("table needs at least two nodes".into());
            }
            if (t[0][0] - q_lo).abs() > MASS_TOL || (t[t.len() - 1][0] - q_hi).abs() > MASS_TOL {
                return bad(format!("table must span [{q_lo}, {q_hi}]"));
            }
            for w in t.windows(2) {
                if !(w[1][0] > w[0][0]) {
                    return bad("table quantiles must be strictly increasing".into());
                }
                if w[1][1] > w[0][1] {
                    return bad("table values must be nonincreasing in q".into());
                }
            }
        }
        Curve::TruncatedExponential { rate, cap } if !(*rate > 0.0 && *cap > 0.0) => {
            return bad("truncated exponential needs rate, cap > 0".into())
        }
        Curve::Polynomial { scale, exponent } if !(*scale >= 0.0 && *exponent > 0.0) => {
            return bad("polynomial needs scale >= 0, exponent > 0".into())
        }
        _ => {}
    }
    let (top, bottom) = (curve.value(q_lo), curve.value(q_hi));
    if !(bottom >= -1e-15) || !top.is_finite() {
        return bad(format!("curve values must be finite and nonnegative on [{q_lo}, {q_hi}]"));
    }
    Ok(())
}

/// JSON schema of a distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistSpec {
    pub pieces: Vec<PieceSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PieceSpec {
    Atom { mass: f64, value: f64 },
    Continuous { q_lo: f64, q_hi: f64, table: Vec<[f64; 2]> },
}

impl TryFrom<DistSpec> for QuantileDistribution {
    type Error = Error;

    fn try_from(spec: DistSpec) -> Result<Self> {
        Self::new(
            spec.pieces
                .into_iter()
                .map(|p| match p {
                    PieceSpec::Atom { mass, value } => Piece::Atom { mass, value },
                    PieceSpec::Continuous { q_lo, q_hi, table } => Piece::Continuous {
                        q_lo,
                        q_hi,
                        curve: Curve::Table(table),
                    },
                })
                .collect(),
        )
    }
}

/// One OS-UD problem: horizon, value distribution, disruption probability and recovery fraction.
#[derive(Debug, Clone)]
pub struct Instance {
    n: usize,
    dist: QuantileDistribution,
    p: f64,
    zeta: f64,
}

impl Instance {
    pub fn new(n: usize, dist: QuantileDistribution, p: f64, zeta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInstance("horizon n must be at least 1".into()));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidInstance(format!("p must lie in (0, 1), got {p}")));
        }
        if !(0.0..=1.0).contains(&zeta) {
            return Err(Error::InvalidInstance(format!("zeta must lie in [0, 1], got {zeta}")));
        }
        Ok(Self { n, dist, p, zeta })
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

    pub fn dist(&self) -> &QuantileDistribution {
        &self.dist
    }

    /// Expected fraction of an accepted value that is kept: `1 - (1 - ζ) p`.
    pub fn recovery_factor(&self) -> f64 {
        1.0 - (1.0 - self.zeta) * self.p
    }
}

/// Three-level hard instance: a spike of total weight `a1/n` near `q = 0`
/// (an atom of mass `1/n²` at `a1·n`), value `a2` up to quantile `β/n`, zero beyond.
pub fn hard_instance_dist(a1: f64, a2: f64, beta: f64, n: usize) -> Result<QuantileDistribution> {
    let nf = n as f64;
    if !(a1 >= 0.0 && a2 >= 0.0) || a1 + a2 <= 0.0 {
        return Err(Error::InvalidInstance("need a1, a2 >= 0, not both zero".into()));
    }
    if !(beta > 0.0) || beta > nf {
        return Err(Error::InvalidInstance(format!("need 0 < beta <= n, got beta={beta}, n={n}")));
    }
    if beta * nf < 1.0 {
        return Err(Error::InvalidInstance("need beta >= 1/n so the spike fits".into()));
    }
    let spike = 1.0 / (nf * nf);
    let middle = beta / nf;
    let mut pieces = Vec::new();
    if a1 > 0.0 {
        pieces.push(Piece::Atom {
            mass: spike,
            value: a1 * nf + a2,
        });
        if middle - spike > 0.0 {
            pieces.push(Piece::Atom {
                mass: middle - spike,
                value: a2,
            });
        }
    } else {
        pieces.push(Piece::Atom { mass: middle, value: a2 });
    }
    if 1.0 - middle > 0.0 {
        pieces.push(Piece::Atom {
            mass: 1.0 - middle,
            value: 0.0,
        });
    }
    QuantileDistribution::new(pieces)
}

/// Upper-bound instance for adaptive policies: a spike of weight `θ/(b n)` near 0
/// (an atom of mass `1/n²`) on top of the continuous part
/// `(p/b) ∫_{y^{-1}(e^{-pnu})}^{1-ε} ds / (-y'(s))`, where `b = 1 - p + pζ`.
pub fn upper_bound_dist(eps: f64, p: f64, n: usize, zeta: f64, y: &OdeSolution) -> Result<QuantileDistribution> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain("upper_bound_dist", format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(p > 0.0 && p < 1.0) || !(0.0..=1.0).contains(&zeta) {
        return Err(Error::InvalidInstance("need p in (0, 1) and zeta in [0, 1]".into()));
    }
    let x_end = upper_bound_x_end(eps, y)?;
    let floor = (x_end / p).ceil();
    if (n as f64) < floor {
        return Err(Error::InvalidInstance(format!(
            "n={n} is below the floor {floor} for eps={eps}, p={p}"
        )));
    }
    let nf = n as f64;
    let b = 1.0 - p + p * zeta;
    let tail = Arc::new(UpperBoundTail::new(p / b, p * nf, x_end, y.beta()));
    let spike = 1.0 / (nf * nf);
    let spike_avg = tail.integral(0.0, spike) / spike;
    QuantileDistribution::new(vec![
        Piece::Atom {
            mass: spike,
            value: y.theta() * nf / b + spike_avg,
        },
        Piece::Continuous {
            q_lo: spike,
            q_hi: 1.0,
            curve: Curve::UpperBoundTail(tail),
        },
    ])
}

/// `-ln y(1 - ε)`: the scaled quantile where the upper-bound tail vanishes.
pub fn upper_bound_x_end(eps: f64, y: &OdeSolution) -> Result<f64> {
    Ok(-y.y_at(1.0 - eps)?.ln())
}
