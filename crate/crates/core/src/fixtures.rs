//! Shared fixture distributions and parameter grids.

use crate::dist::QuantileDistribution;

pub const GRID_N: [usize; 6] = [1, 2, 5, 10, 100, 1000];
pub const GRID_P: [f64; 3] = [0.1, 0.5, 0.9];
pub const GRID_ZETA: [f64; 3] = [0.0, 0.5, 1.0];

/// Twelve atomless distributions with continuous quantile functions.
pub fn smooth_distributions() -> Vec<(&'static str, QuantileDistribution)> {
    let d = |r: crate::Result<QuantileDistribution>| r.expect("fixture parameters are valid");
    vec![
        ("uniform-0-1", d(QuantileDistribution::uniform(0.0, 1.0))),
        ("uniform-1-2", d(QuantileDistribution::uniform(1.0, 2.0))),
        ("uniform-0-10", d(QuantileDistribution::uniform(0.0, 10.0))),
        ("texp-1-5", d(QuantileDistribution::truncated_exponential(1.0, 5.0))),
        ("texp-3-2", d(QuantileDistribution::truncated_exponential(3.0, 2.0))),
        ("texp-0.5-10", d(QuantileDistribution::truncated_exponential(0.5, 10.0))),
        ("poly-1-2", d(QuantileDistribution::polynomial(1.0, 2.0))),
        ("poly-2-1.5", d(QuantileDistribution::polynomial(2.0, 1.5))),
        ("poly-3-3", d(QuantileDistribution::polynomial(3.0, 3.0))),
        ("poly-1-5", d(QuantileDistribution::polynomial(1.0, 5.0))),
        (
            "table-heavy-top",
            d(QuantileDistribution::from_table(vec![[0.0, 5.0], [0.1, 2.0], [0.5, 1.0], [1.0, 0.0]])),
        ),
        (
            "table-narrow",
            d(QuantileDistribution::from_table(vec![[0.0, 1.0], [0.5, 0.9], [1.0, 0.8]])),
        ),
    ]
}

/// Every `(distribution, n, p, ζ)` combination of the standard grid.
pub fn grid() -> Vec<(&'static str, QuantileDistribution, usize, f64, f64)> {
    let mut out = Vec::new();
    for (name, d) in smooth_distributions() {
        for &n in &GRID_N {
            for &p in &GRID_P {
                for &zeta in &GRID_ZETA {
                    out.push((name, d.clone(), n, p, zeta));
                }
            }
        }
    }
    out
}
