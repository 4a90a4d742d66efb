//! One experiment's outcome: algorithm value, benchmark value and the bound they are checked against.

use serde::Serialize;

use crate::mc::Estimate;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioReport {
    pub algorithm: String,
    pub n: usize,
    pub p: f64,
    pub zeta: f64,
    /// Quantile used by a fixed-quantile policy, if any.
    pub q: Option<f64>,
    pub alg_value: f64,
    pub opt_value: f64,
    pub ratio: f64,
    /// The guarantee the ratio should clear (or, for hard instances, stay below).
    pub bound: f64,
    pub bound_kind: BoundKind,
    pub alg_mc: Option<Estimate>,
    pub opt_mc: Option<Estimate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    /// `ratio ≥ bound - tol`.
    Lower,
    /// `ratio ≤ bound + tol`.
    Upper,
}

impl RatioReport {
    pub fn passes(&self, tol: f64) -> bool {
        match self.bound_kind {
            BoundKind::Lower => self.ratio >= self.bound - tol,
            BoundKind::Upper => self.ratio <= self.bound + tol,
        }
    }

    /// Standard error of the ratio by the delta method, when both values were simulated.
    pub fn ratio_std_error(&self) -> Option<f64> {
        match (&self.alg_mc, &self.opt_mc) {
            (Some(a), Some(o)) => {
                let rel = ((a.std_error / a.mean).powi(2) + (o.std_error / o.mean).powi(2)).sqrt();
                Some(self.ratio.abs() * rel)
            }
            (Some(a), None) => Some(a.std_error / self.opt_value),
            _ => None,
        }
    }
}

/// Formats with 12 significant digits, trailing zeros trimmed.
pub fn fmt12(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let fixed = format!("{:.*}", (11 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
