//! The Hill–Kertz system: the constant θ*, the curve y(t) and λ(p).
//!
//! With β = 1/θ the ODE reads `y' = y (ln y - 1) - (β - 1)`, `y(0) = 1`.
//! Writing `f(y)` for the right-hand side, the time at which the solution
//! reaches level `y` is `t(y) = ∫_y^1 ds / (-f(s))`, so the shooting
//! condition `y(1) = 0` is the integral equation `∫_0^1 dy / (-f(y)) = 1`.

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad::{self, GaussLegendre};

/// Right-hand side `y (ln y - 1) - (β - 1)`; negative on `[0, 1]` for β > 1.
#[inline]
pub fn rhs(y: f64, beta: f64) -> f64 {
    quad::xlogx(y) - y - (beta - 1.0)
}

/// Quadrature scheme for the integral equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Adaptive Simpson directly in `y`.
    Simpson,
    /// Composite Gauss–Legendre after the substitution `y = s²`.
    GaussLegendre,
}

/// `∫_0^1 dy / (y - y ln y + β - 1)`. Decreasing in β.
pub fn shooting_integral(beta: f64, scheme: Scheme, rel_tol: f64) -> f64 {
    match scheme {
        Scheme::Simpson => {
            let breaks = [0.0, 1e-6, 1e-4, 1e-2, 0.1, 0.5, 1.0];
            quad::simpson_piecewise(|y| 1.0 / -rhs(y, beta), &breaks, rel_tol, 1e-300).value
        }
        Scheme::GaussLegendre => {
            let gl = GaussLegendre::new(20);
            let breaks: Vec<f64> = (0..=64).map(|k| k as f64 / 64.0).collect();
            gl.integrate_composite(|s| 2.0 * s / -rhs(s * s, beta), &breaks)
        }
    }
}

/// θ* with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaStar {
    pub theta: f64,
    pub beta: f64,
    /// `|∫_0^1 dy/(-f(y)) - 1|` at the returned β.
    pub residual: f64,
}

/// θ* = 1/β where β solves the integral equation, using adaptive Simpson.
pub fn theta_star(tol: f64) -> Result<f64> {
    theta_star_with(tol, Scheme::Simpson).map(|t| t.theta)
}

/// θ* using a chosen quadrature scheme.
pub fn theta_star_with(tol: f64, scheme: Scheme) -> Result<ThetaStar> {
    if !(tol >= 1e-12) || !tol.is_finite() {
        return Err(Error::domain("theta_star", format!("tol must be >= 1e-12, got {tol}")));
    }
    let rel = (tol * 1e-2).max(1e-14);
    let g = |beta: f64| shooting_integral(beta, scheme, rel) - 1.0;
    // θ tolerance maps to β tolerance through dβ = dθ/θ².
    let beta = quad::bisect(g, 1.0 + 1e-6, 3.0, (tol * 0.25).min(1e-13), "theta_star")?;
    let residual = g(beta).abs();
    Ok(ThetaStar {
        theta: 1.0 / beta,
        beta,
        residual,
    })
}

/// How the integration of y(t) terminated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Shooting {
    /// y stayed positive over the whole grid.
    ReachedEnd { y_end: f64 },
    /// y dropped to the event level before the end of the grid.
    HitZero { t_hit: f64 },
}

/// Tabulated solution of the Hill–Kertz ODE.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    theta: f64,
    beta: f64,
    t: Vec<f64>,
    y: Vec<f64>,
    shooting: Shooting,
}

const EVENT_LEVEL: f64 = 1e-10;
const MIN_STEP: f64 = 1e-8;

/// Integrates the ODE from `y(0) = 1` with adaptive Dormand–Prince steps,
/// recording values on a cosine-spaced grid `t_k = sin(π k / 2N)`.
pub fn solve_y(theta: f64, grid_size: usize) -> Result<OdeSolution> {
    if !(theta > 0.5 && theta < 1.0) {
        return Err(Error::domain("solve_y", format!("theta must lie in (0.5, 1), got {theta}")));
    }
    if grid_size < 16 {
        return Err(Error::domain("solve_y", "grid_size must be at least 16"));
    }
    let beta = 1.0 / theta;
    let f = |y: f64| rhs(y.max(0.0), beta);
    let n = grid_size;
    let grid: Vec<f64> = (0..n).map(|k| (FRAC_PI_2 * k as f64 / n as f64).sin()).collect();

    let mut ts = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    ts.push(0.0);
    ys.push(1.0);
    let mut t = 0.0;
    let mut y = 1.0;
    let mut h: f64 = 1e-3;
    let mut shooting = None;
    'grid: for &target in &grid[1..] {
        while t < target {
            let step = h.min(target - t);
            let (y_new, err) = dopri_step(&f, y, step);
            let scale = 1e-14 + 1e-12 * y.abs().max(y_new.abs());
            let ratio = err / scale;
            if ratio > 1.0 && step > MIN_STEP {
                h = (step * (0.9 * ratio.powf(-0.2)).max(0.2)).max(MIN_STEP);
                continue;
            }
            if y_new <= EVENT_LEVEL {
                // linear interpolation of the crossing inside the step
                let frac = (y - EVENT_LEVEL) / (y - y_new);
                shooting = Some(Shooting::HitZero { t_hit: t + frac * step });
                break 'grid;
            }
            t += step;
            y = y_new;
            let grow = if ratio > 0.0 { 0.9 * ratio.powf(-0.2) } else { 5.0 };
            if step == h {
                h = (h * grow.clamp(0.2, 5.0)).max(MIN_STEP);
            }
        }
        ts.push(t);
        ys.push(y);
    }
    let shooting = shooting.unwrap_or(Shooting::ReachedEnd { y_end: y });
    Ok(OdeSolution {
        theta,
        beta,
        t: ts,
        y: ys,
        shooting,
    })
}

fn dopri_step<F: Fn(f64) -> f64>(f: &F, y: f64, h: f64) -> (f64, f64) {
    let k1 = f(y);
    let k2 = f(y + h * (k1 / 5.0));
    let k3 = f(y + h * (3.0 / 40.0 * k1 + 9.0 / 40.0 * k2));
    let k4 = f(y + h * (44.0 / 45.0 * k1 - 56.0 / 15.0 * k2 + 32.0 / 9.0 * k3));
    let k5 = f(y + h * (19372.0 / 6561.0 * k1 - 25360.0 / 2187.0 * k2 + 64448.0 / 6561.0 * k3 - 212.0 / 729.0 * k4));
    let k6 = f(y + h * (9017.0 / 3168.0 * k1 - 355.0 / 33.0 * k2 + 46732.0 / 5247.0 * k3 + 49.0 / 176.0 * k4
        - 5103.0 / 18656.0 * k5));
    let y5 = y + h * (35.0 / 384.0 * k1 + 500.0 / 1113.0 * k3 + 125.0 / 192.0 * k4 - 2187.0 / 6784.0 * k5
        + 11.0 / 84.0 * k6);
    let k7 = f(y5);
    let y4 = y + h * (5179.0 / 57600.0 * k1 + 7571.0 / 16695.0 * k3 + 393.0 / 640.0 * k4 - 92097.0 / 339200.0 * k5
        + 187.0 / 2100.0 * k6
        + 1.0 / 40.0 * k7);
    (y5, (y5 - y4).abs())
}

impl OdeSolution {
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn grid(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn shooting(&self) -> Shooting {
        self.shooting
    }

    /// Last tabulated time.
    pub fn t_max(&self) -> f64 {
        *self.t.last().expect("grid is never empty")
    }

    /// Smallest tabulated value of y.
    pub fn y_min(&self) -> f64 {
        *self.y.last().expect("grid is never empty")
    }

    /// y(t) by cubic Hermite interpolation using the ODE slopes.
    pub fn y_at(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.t_max()).contains(&t) {
            return Err(Error::domain("y_at", format!("t={t} outside [0, {}]", self.t_max())));
        }
        let k = self.segment(t);
        Ok(self.hermite(k, t))
    }

    /// y'(t) through the ODE right-hand side.
    pub fn derivative(&self, t: f64) -> Result<f64> {
        Ok(rhs(self.y_at(t)?, self.beta))
    }

    /// The inverse map: the time at which y reaches `v`.
    pub fn y_inverse(&self, v: f64) -> Result<f64> {
        if !(v >= self.y_min() && v <= 1.0) {
            return Err(Error::domain(
                "y_inverse",
                format!("v={v} outside [{}, 1]", self.y_min()),
            ));
        }
        if v == 1.0 {
            return Ok(0.0);
        }
        // y is decreasing: find the bracketing segment
        let k = match self.y.binary_search_by(|probe| v.partial_cmp(probe).expect("finite")) {
            Ok(i) => return Ok(self.t[i]),
            Err(i) => i - 1,
        };
        let (mut lo, mut hi) = (self.t[k], self.t[k + 1]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.hermite(k, mid) > v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Rows `(t, y, y')` of the tabulated solution.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.t
            .iter()
            .zip(&self.y)
            .map(move |(&t, &y)| (t, y, rhs(y, self.beta)))
    }

    fn segment(&self, t: f64) -> usize {
        let i = self.t.partition_point(|&g| g <= t);
        i.clamp(1, self.t.len() - 1) - 1
    }

    fn hermite(&self, k: usize, t: f64) -> f64 {
        let (t0, t1) = (self.t[k], self.t[k + 1]);
        let (y0, y1) = (self.y[k], self.y[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (d0, d1) = (rhs(y0, self.beta) * h, rhs(y1, self.beta) * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1
    }
}

/// `t(y) = ∫_y^1 ds/(-f(s))`: the time at which the exact solution reaches `y`.
pub fn time_to_level(y: f64, beta: f64) -> f64 {
    quad::simpson(|s| 1.0 / -rhs(s, beta), y, 1.0, 1e-12, 1e-300).value
}

/// `∫_0^y dw / f(w)²`, which equals `∫_{t(y)}^1 -1/y'(s) ds`.
pub fn inverse_slope_mass(y: f64, beta: f64) -> f64 {
    let breaks = [0.0, (1e-4f64).min(y), (0.1f64).min(y), y];
    quad::simpson_piecewise(
        |w| {
            let f = rhs(w, beta);
            1.0 / (f * f)
        },
        &breaks,
        1e-12,
        1e-300,
    )
    .value
}

/// The positive root λ(p) of `1 - e^{-pλ} = pλ (1 - e^{-λ})`.
pub fn lambda_p(p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::domain("lambda_p", format!("p must lie in (0, 1], got {p}")));
    }
    // φ(λ) - (1 - e^{-λ}) with φ(λ) = (1 - e^{-pλ})/(pλ), decreasing minus increasing
    let h = |l: f64| -(-p * l).exp_m1() / (p * l) + (-l).exp_m1();
    let mut hi = 2.0 / p + 2.0;
    while h(hi) > 0.0 {
        hi *= 2.0;
    }
    quad::bisect(h, 1e-12, hi, 0.0, "lambda_p")
}

/// Residual of the λ(p) equation.
pub fn lambda_residual(p: f64, lambda: f64) -> f64 {
    (-(-p * lambda).exp_m1() + p * lambda * (-lambda).exp_m1()).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star() -> ThetaStar {
        theta_star_with(1e-12, Scheme::Simpson).unwrap()
    }

    #[test]
    fn theta_star_value_and_residual() {
        let s = star();
        assert!((s.theta - 0.745).abs() < 1e-3, "{s:?}");
        assert!(s.residual < 1e-10);
    }

    #[test]
    fn schemes_agree() {
        let a = star();
        let b = theta_star_with(1e-12, Scheme::GaussLegendre).unwrap();
        assert!((a.theta - b.theta).abs() < 1e-8, "{a:?} {b:?}");
    }

    #[test]
    fn integral_decreases_in_beta() {
        // at β = 1.5 the solution reaches zero before t = 1
        assert!(shooting_integral(1.5, Scheme::Simpson, 1e-10) < 1.0);
        assert!(shooting_integral(1.2, Scheme::Simpson, 1e-10) > 1.0);
    }

    #[test]
    fn ode_at_theta_star_reaches_zero_at_one() {
        let s = star();
        let sol = solve_y(s.theta, 4096).unwrap();
        assert_eq!(sol.values()[0], 1.0);
        assert!(matches!(sol.shooting(), Shooting::ReachedEnd { .. }));
        assert!(sol.y_at(1.0 - 1e-4).unwrap() < 1e-3);
        assert!(sol.values().windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn ode_matches_quadrature_time() {
        let s = star();
        let sol = solve_y(s.theta, 4096).unwrap();
        for &y in &[0.9, 0.5, 0.1, 0.01] {
            let t = time_to_level(y, s.beta);
            assert!((sol.y_at(t).unwrap() - y).abs() < 1e-9, "y={y}");
        }
    }

    #[test]
    fn shooting_fails_off_theta_star() {
        let s = star();
        let low = solve_y(s.theta - 0.01, 4096).unwrap();
        assert!(matches!(low.shooting(), Shooting::HitZero { t_hit } if t_hit < 1.0));
        let high = solve_y(s.theta + 0.01, 4096).unwrap();
        match high.shooting() {
            Shooting::ReachedEnd { y_end } => assert!(y_end > 1e-3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn second_derivative_identity() {
        // y'' = y' ln y, checked with central differences of the slope
        let s = star();
        let sol = solve_y(s.theta, 4096).unwrap();
        for &t in &[0.1, 0.4, 0.7, 0.95] {
            let h = 1e-5;
            let ypp = (sol.derivative(t + h).unwrap() - sol.derivative(t - h).unwrap()) / (2.0 * h);
            let expect = sol.derivative(t).unwrap() * sol.y_at(t).unwrap().ln();
            assert!((ypp - expect).abs() < 1e-6 * expect.abs().max(1.0), "t={t}");
        }
    }

    #[test]
    fn inverse_round_trip() {
        let sol = solve_y(star().theta, 2048).unwrap();
        assert_eq!(sol.y_inverse(1.0).unwrap(), 0.0);
        let y_half = sol.y_at(0.5).unwrap();
        assert!((sol.y_inverse(y_half).unwrap() - 0.5).abs() < 1e-9);
        for k in 1..100 {
            let t = k as f64 / 100.0 * sol.t_max();
            let v = sol.y_at(t).unwrap();
            let back = sol.y_inverse(v).unwrap();
            assert!((sol.y_at(back).unwrap() - v).abs() < 1e-9);
        }
        assert!(sol.y_inverse(1.5).is_err());
    }

    #[test]
    fn lambda_values() {
        let l1 = lambda_p(1.0).unwrap();
        assert!((l1 - 1.0).abs() < 1e-9);
        let l = lambda_p(0.5).unwrap();
        assert!((l - 1.32).abs() < 0.01, "{l}");
        assert!(lambda_residual(0.5, l) < 1e-10);
        let small = lambda_p(1e-6).unwrap();
        assert!(1.0 - (-small).exp() > 0.99);
        assert!(lambda_p(0.0).is_err());
    }
}
