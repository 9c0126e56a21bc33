//! Empirical domination constants of a skewed stable density and its
//! weighted derivatives by the symmetric companion density.

use super::{stable_density_all, StableParams};
use crate::error::{Error, Result};

/// Smallest constants with `g ≤ C₀ĝ`, `|g'|(1+|x|) ≤ C₁ĝ` and
/// `|g''|(1+|x|)² ≤ C₂ĝ` on the grid, where `ĝ` is the symmetric companion.
#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// Per-ratio flag: the ratio keeps growing in the far tails and exceeds
    /// its grid maximum there.
    pub unbounded: [bool; 3],
    pub grid_points: usize,
}

impl DominationReport {
    pub fn passed(&self) -> bool {
        !self.unbounded.iter().any(|u| *u) && self.c0.is_finite() && self.c1.is_finite() && self.c2.is_finite()
    }
}

pub fn check_density_domination(p: &StableParams, grid: &[f64]) -> Result<DominationReport> {
    if grid.len() < 8 {
        return Err(Error::invalid("grid", "needs at least 8 points"));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    for i in 0..n {
        let (a, b) = (sorted[i], sorted[n - 1 - i]);
        if !a.is_finite() || (a + b).abs() > 1e-9 * a.abs().max(1.0) {
            return Err(Error::invalid("grid", "must be finite and symmetric about 0"));
        }
    }
    let q = p.symmetric_companion();
    let mut ratios = vec![[0.0f64; 3]; n];
    for (i, &x) in sorted.iter().enumerate() {
        ratios[i] = ratio_at(p, &q, x)?;
    }
    let mut c = [0.0f64; 3];
    for k in 0..3 {
        c[k] = ratios.iter().map(|r| r[k]).fold(0.0, f64::max);
    }
    // A grid only a few spreads wide cannot tell slow convergence from
    // growth, so the tails are probed at 10 and 100 times the grid end.
    let end = sorted[n - 1];
    let mut unbounded = [false; 3];
    for side in [-1.0, 1.0] {
        let near = ratio_at(p, &q, side * 10.0 * end)?;
        let far = ratio_at(p, &q, side * 100.0 * end)?;
        for k in 0..3 {
            let slope = if near[k] > 0.0 && far[k] > 0.0 { (far[k] / near[k]).log10() } else { 0.0 };
            unbounded[k] |= slope > 0.1 && far[k] > c[k];
        }
    }
    Ok(DominationReport {
        c0: c[0],
        c1: c[1],
        c2: c[2],
        unbounded,
        grid_points: n,
    })
}

fn ratio_at(p: &StableParams, q: &StableParams, x: f64) -> Result<[f64; 3]> {
    let g = stable_density_all(p, 1.0, x)?;
    let h = stable_density_all(q, 1.0, x)?[0];
    let w = 1.0 + x.abs();
    Ok([g[0] / h, g[1].abs() * w / h, g[2].abs() * w * w / h])
}
