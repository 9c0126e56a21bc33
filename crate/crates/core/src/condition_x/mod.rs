//! Transition densities, their time derivatives and the bound
//! `|∂_t p_t(x,y)| ≤ B t^{−β} q_{t,x}(y)`.
//!
//! Closed forms cover the stable process with constant drift; the locally
//! stable SDE is handled by the parametrix series in [`parametrix`].

pub mod parametrix;

pub use parametrix::{
    build_parametrix_density, convolve_space_time, Anchor, ConvolutionRule, DensityBoundReport, KernelKind, KernelTable,
    ParametrixConfig, ParametrixState, SeriesDiagnostics,
};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::ProcessModel;
use crate::numerics::{fit_line, simpson_nonuniform, LineFit, PowerTail, SinhGrid};
use crate::stable::{stable_density, StableParams, StableTable};

/// `p_t(x,y) = t^{−1/α} g^{(α)}((y − x − ct)/t^{1/α})` for the canonical
/// symmetric law `E e^{iξZ_1} = e^{−|ξ|^α}`.
pub fn density_stable_drift(alpha: f64, c: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    let p = StableParams::canonical(alpha)?;
    density_stable_drift_with(&p, c, t, x, y)
}

/// Same as [`density_stable_drift`] for arbitrary stable parameters.
pub fn density_stable_drift_with(p: &StableParams, c: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", "time must be positive and finite"));
    }
    stable_density(p, t, y - x - c * t, 0)
}

/// A transition density that can be evaluated along a row of end points.
pub trait TransitionDensity: Sync {
    /// Stable part of the driving noise.
    fn noise(&self) -> &StableParams;

    /// Deterministic centre `χ_t(x)` of the law of `X_t` started at `x`.
    fn center(&self, t: f64, x: f64) -> Result<f64>;

    /// `p_t(x, y)` for every `y` in `ys`.
    fn density_row(&self, t: f64, x: f64, ys: &[f64]) -> Result<Vec<f64>>;

    /// Exponent `α` when `p_t(x,·)` has power tails `∝ |y|^{−1−α}` beyond
    /// the grid; `None` when the tails decay faster and need no completion.
    fn power_tail(&self) -> Option<f64> {
        Some(self.noise().alpha)
    }

    /// Closed-form `∂_t p_t(x, y)` when one exists.
    fn dt_row(&self, _t: f64, _x: f64, _ys: &[f64]) -> Option<Result<Vec<f64>>> {
        None
    }
}

/// Stable process with constant drift, evaluated through a density table.
#[derive(Debug, Clone)]
pub struct StableDriftDensity {
    table: StableTable,
    c: f64,
}

impl StableDriftDensity {
    pub fn new(p: &StableParams, c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::invalid("c", "drift must be finite"));
        }
        Ok(Self {
            table: StableTable::new(p)?,
            c,
        })
    }

    pub fn from_model(model: &ProcessModel) -> Result<Self> {
        model.validate()?;
        match model {
            ProcessModel::StableWithDrift { p, c } => Self::new(p, *c),
            ProcessModel::StableProcess(p) => Self::new(p, 0.0),
            _ => Err(Error::Unsupported(
                "closed-form densities exist only for stable processes with constant drift".into(),
            )),
        }
    }

    pub fn drift(&self) -> f64 {
        self.c
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("t", "time must be positive and finite"))
    }
}

impl TransitionDensity for StableDriftDensity {
    fn noise(&self) -> &StableParams {
        self.table.params()
    }

    fn center(&self, t: f64, x: f64) -> Result<f64> {
        Ok(x + self.c * t)
    }

    fn density_row(&self, t: f64, x: f64, ys: &[f64]) -> Result<Vec<f64>> {
        check_time(t)?;
        let m = x + self.c * t;
        Ok(ys.iter().map(|y| self.table.density(t, y - m)).collect())
    }

    /// `∂_t p = −(1/α) t^{−1/α−1}[g(z) + z g′(z)] − c t^{−2/α} g′(z)`,
    /// `z = (y − x − ct)/t^{1/α}`.
    fn dt_row(&self, t: f64, x: f64, ys: &[f64]) -> Option<Result<Vec<f64>>> {
        if let Err(e) = check_time(t) {
            return Some(Err(e));
        }
        let al = self.table.params().alpha;
        let k = t.powf(-1.0 / al);
        let m = x + self.c * t;
        Some(Ok(ys
            .iter()
            .map(|y| {
                let z = (y - m) * k;
                let g = self.table.eval_unit(z, 0);
                let g1 = self.table.eval_unit(z, 1);
                -(k / (al * t)) * (g + z * g1) - self.c * k * k * g1
            })
            .collect()))
    }
}

/// How `∂_t p` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DtMethod {
    Analytic,
    /// Central differences with step `t/100`, reduced fourfold while the
    /// Richardson correction is not small, and one Richardson level.
    FiniteDifference,
    /// Analytic when a closed form exists, otherwise finite differences.
    Auto,
}

/// End-point grid `y = center + spread·sinh(u)` reaching `reach` spreads,
/// optionally capped at an absolute distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldGrid {
    pub reach: f64,
    pub points: usize,
    pub max_extent: f64,
}

impl Default for FieldGrid {
    fn default() -> Self {
        Self {
            reach: 1e4,
            points: 2001,
            max_extent: f64::INFINITY,
        }
    }
}

impl FieldGrid {
    pub fn nodes(&self, center: f64, spread: f64) -> Vec<f64> {
        let n = self.points.max(5) | 1;
        let extent = (self.reach * spread).min(self.max_extent);
        SinhGrid::symmetric(center, spread, extent, n).nodes()
    }

    /// Same range with twice the resolution.
    pub fn refined(&self) -> Self {
        Self {
            points: 2 * (self.points.max(5) | 1) - 1,
            ..*self
        }
    }
}

/// `p_t(x,·)` and `∂_t p_t(x,·)` on a grid of end points.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub t: f64,
    pub x: f64,
    pub center: f64,
    /// Tail exponent used to complete integrals beyond the grid.
    pub tail_alpha: Option<f64>,
    pub y_grid: Vec<f64>,
    pub p_values: Vec<f64>,
    pub dp_dt_values: Vec<f64>,
}

impl DensityField {
    /// `∫ p dy`, with power-tail completion beyond the grid when the tails
    /// are heavy.
    pub fn mass(&self) -> f64 {
        line_integral(&self.y_grid, &self.p_values, self.center, self.tail_alpha)
    }

    /// `∫ ∂_t p dy`.
    pub fn dt_mass(&self) -> f64 {
        line_integral(&self.y_grid, &self.dp_dt_values, self.center, self.tail_alpha)
    }

    /// `N(t) = ∫ |∂_t p| dy`.
    pub fn abs_dt_mass(&self) -> f64 {
        let a: Vec<f64> = self.dp_dt_values.iter().map(|v| v.abs()).collect();
        line_integral(&self.y_grid, &a, self.center, self.tail_alpha)
    }
}

/// Simpson integral over an ascending grid plus, given `α`, power-tail
/// completion on both sides with tail exponents `1 + kα`.
pub fn line_integral(ys: &[f64], vals: &[f64], center: f64, tail_alpha: Option<f64>) -> f64 {
    let body = simpson_nonuniform(ys, vals);
    let Some(alpha) = tail_alpha else {
        return body;
    };
    let exps = [1.0 + alpha, 1.0 + 2.0 * alpha, 1.0 + 3.0 * alpha];
    let side = |sign: f64| {
        let mut pts: Vec<(f64, f64)> = ys
            .iter()
            .zip(vals)
            .filter(|(y, _)| (*y - center) * sign > 0.0)
            .map(|(y, v)| ((y - center).abs(), *v))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.len() < 4 {
            return 0.0;
        }
        let r: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let f: Vec<f64> = pts.iter().map(|p| p.1).collect();
        PowerTail::fit(&r, &f, &exps).integral()
    };
    body + side(1.0) + side(-1.0)
}

/// Tabulate `p_t(x,·)` and `∂_t p_t(x,·)` on `y_grid`.
pub fn dt_density(model: &dyn TransitionDensity, t: f64, x: f64, y_grid: &[f64], method: DtMethod) -> Result<DensityField> {
    check_time(t)?;
    if y_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("y_grid", "must be strictly ascending"));
    }
    let p_values = model.density_row(t, x, y_grid)?;
    let dp_dt_values = match method {
        DtMethod::FiniteDifference => finite_difference(model, t, x, y_grid)?,
        DtMethod::Analytic => model
            .dt_row(t, x, y_grid)
            .ok_or_else(|| Error::Unsupported("no closed-form time derivative for this model".into()))??,
        DtMethod::Auto => match model.dt_row(t, x, y_grid) {
            Some(v) => v?,
            None => finite_difference(model, t, x, y_grid)?,
        },
    };
    Ok(DensityField {
        t,
        x,
        center: model.center(t, x)?,
        tail_alpha: model.power_tail(),
        y_grid: y_grid.to_vec(),
        p_values,
        dp_dt_values,
    })
}

/// Richardson-extrapolated central difference. The step shrinks until two
/// successive estimates agree to `FD_TOL` of their sup, or until they drift
/// apart after agreeing to 1%; the best agreeing pair wins, and disagreement
/// above 1% fails.
fn finite_difference(model: &dyn TransitionDensity, t: f64, x: f64, ys: &[f64]) -> Result<Vec<f64>> {
    const FD_TOL: f64 = 1e-7;
    let estimate = |h: f64| -> Result<Vec<f64>> {
        let rows = [t + h, t - h, t + 0.5 * h, t - 0.5 * h]
            .par_iter()
            .map(|&s| model.density_row(s, x, ys))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..ys.len())
            .map(|j| {
                let d1 = (rows[0][j] - rows[1][j]) / (2.0 * h);
                let d2 = (rows[2][j] - rows[3][j]) / h;
                (4.0 * d2 - d1) / 3.0
            })
            .collect())
    };
    // Initial step moves the centre by at most a fiftieth of the spread.
    let spread = model.noise().spread(t);
    let mut h = t / 50.0;
    while h > t * 1e-6 && (model.center(t + h, x)? - model.center(t, x)?).abs() > 0.02 * spread {
        h *= 0.5;
    }
    let mut prev = estimate(h)?;
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for _ in 0..8 {
        h *= 0.5;
        let cur = estimate(h)?;
        let diff = cur.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let sup = cur.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if diff <= FD_TOL * sup {
            return Ok(cur);
        }
        match &best {
            // Past the asymptotic regime roundoff only grows the gap.
            Some((d, s, _)) if diff >= *d => {
                if *d <= 0.01 * s {
                    break;
                }
            }
            _ => best = Some((diff, sup, cur.clone())),
        }
        prev = cur;
    }
    match best {
        Some((diff, sup, out)) if diff <= 0.01 * sup => Ok(out),
        Some((diff, sup, _)) => Err(Error::FiniteDifference {
            what: "time derivative of the transition density",
            noise: diff,
            central: sup,
        }),
        None => unreachable!("at least one refinement runs"),
    }
}

/// Fitted `N(t) ≈ B t^{−β}` with `N(t) = ∫|∂_t p_t(x,y)| dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaEstimate {
    pub beta_hat: f64,
    /// `max_t N(t) t^{β̂}` over the sampled times.
    pub b_hat: f64,
    pub fit: LineFit,
    /// `(t, N(t))`.
    pub samples: Vec<(f64, f64)>,
}

fn check_t_list(t_list: &[f64], t_final: f64) -> Result<()> {
    if t_list.iter().any(|&t| !(t > 0.0 && t <= t_final)) {
        return Err(Error::invalid("t_list", "times must lie in (0, T]"));
    }
    let lo = t_list.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t_list.iter().copied().fold(0.0, f64::max);
    if t_list.len() < 3 || hi < 100.0 * lo * (1.0 - 1e-12) {
        return Err(Error::InsufficientData("t_list must hold at least 3 times spanning two decades".into()));
    }
    Ok(())
}

/// Estimate `β` and `B` from the slope of `log N(t)` against `log t`.
pub fn estimate_beta(model: &dyn TransitionDensity, t_list: &[f64], x: f64, t_final: f64, grid: &FieldGrid) -> Result<BetaEstimate> {
    check_t_list(t_list, t_final)?;
    let mut samples = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let ys = grid.nodes(model.center(t, x)?, model.noise().spread(t));
        let field = dt_density(model, t, x, &ys, DtMethod::Auto)?;
        samples.push((t, field.abs_dt_mass()));
    }
    beta_from_samples(samples)
}

pub(crate) fn beta_from_samples(samples: Vec<(f64, f64)>) -> Result<BetaEstimate> {
    let lx: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ly: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let fit = fit_line(&lx, &ly)?;
    let beta_hat = -fit.slope;
    let b_hat = samples.iter().map(|(t, n)| n * t.powf(beta_hat)).fold(0.0, f64::max);
    Ok(BetaEstimate {
        beta_hat,
        b_hat,
        fit,
        samples,
    })
}

/// Dominating density `q_{t,x}(y) = ½(g_{t+1} + g_t)(y − χ_t(x))` built
/// from the symmetric companion table `env`.
pub fn q_kernel(env: &StableTable, t: f64, center: f64, y: f64) -> f64 {
    0.5 * envelope(env, t, y - center)
}

/// `(g_{t+1} + g_t)(w)`.
#[inline]
pub(crate) fn envelope(env: &StableTable, t: f64, w: f64) -> f64 {
    env.density(t + 1.0, w) + env.density(t, w)
}

/// Outcome of the `∂_t p` bound check.
#[derive(Debug, Clone, PartialEq)]
pub struct DtBoundReport {
    /// `sup |∂_t p|·t^{1/α} / (g_{t+1} + g_t)(y − χ_t(x))` over all samples.
    pub sup_ratio: f64,
    /// Per-time sup of the same ratio.
    pub per_t: Vec<(f64, f64)>,
    pub beta: BetaEstimate,
    pub grid: FieldGrid,
}

/// Evaluate the ratio of `|∂_t p|` to `t^{−1/α}(g_{t+1}+g_t)(y − χ_t(x))`
/// on the grid and feed `N(t)` to the `β` fit.
pub fn check_dt_bound(model: &dyn TransitionDensity, t_list: &[f64], x: f64, t_final: f64, grid: &FieldGrid) -> Result<DtBoundReport> {
    check_t_list(t_list, t_final)?;
    let p = model.noise();
    let env = StableTable::new(&p.symmetric_companion())?;
    let mut per_t = Vec::with_capacity(t_list.len());
    let mut samples = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let center = model.center(t, x)?;
        let ys = grid.nodes(center, p.spread(t));
        let field = dt_density(model, t, x, &ys, DtMethod::Auto)?;
        let scale = t.powf(1.0 / p.alpha);
        let sup = ys
            .iter()
            .zip(&field.dp_dt_values)
            .map(|(y, d)| d.abs() * scale / envelope(&env, t, y - center))
            .fold(0.0, f64::max);
        per_t.push((t, sup));
        samples.push((t, field.abs_dt_mass()));
    }
    let sup_ratio = per_t.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(DtBoundReport {
        sup_ratio,
        per_t,
        beta: beta_from_samples(samples)?,
        grid: *grid,
    })
}

/// Log-spaced times `lo..=hi`.
pub fn log_times(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![hi];
    }
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}
