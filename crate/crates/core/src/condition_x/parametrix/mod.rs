//! Parametrix construction of the transition density of the locally
//! stable SDE `dX = b(X)dt + dZ`, `α < 1`:
//! `p = p⁰ + p⁰ ⋆ Ψ`, `Ψ = Σ_k Φ^{⋆k}`, `Φ = (L_x − ∂_t)p⁰`,
//! `p⁰_t(x,y) = g_t(θ_t(y) − x)`.
//!
//! A state is anchored at one spatial point. Anchored at the start point
//! (forward) it tabulates `Φ^{⋆k}(x,·)` and `p⁰ ⋆ Φ^{⋆k}(x,·)` and evaluates
//! `p_t(x,·)` on demand as `p⁰ + (p⁰ + Σ_{k<K} p⁰⋆Φ^{⋆k}) ⋆ Φ`. Anchored at
//! the end point (backward) it tabulates `Φ^{⋆k}(·,y)` and `Ψ(·,y)` and
//! evaluates `p_t(·,y) = p⁰ + p⁰ ⋆ Ψ`.

mod convolve;
mod kernels;
mod table;

pub use convolve::{convolve_space_time, spatial_convolution, ConvolutionRule, Explicit, FlowStableKernel, SpaceTimeKernel};
pub use table::KernelTable;

use rayon::prelude::*;

use self::convolve::Kern;
use self::kernels::{Context, Engine};
use super::{check_dt_bound, line_integral, log_times, DtBoundReport, FieldGrid, TransitionDensity};
use crate::error::{Error, Result};
use crate::models::{flow_chi, flow_theta, DriftSpec, ProcessModel, TailSpec};
use crate::numerics::{fit_line, FeatureQuadrature, QuadSettings};
use crate::stable::StableParams;

/// Which end point a state is anchored at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    /// Fixed start point `x`; kernels are functions of the end point.
    Start,
    /// Fixed end point `y`; kernels are functions of the start point.
    End,
}

#[derive(Debug, Clone)]
pub struct ParametrixConfig {
    pub drift: DriftSpec,
    pub noise: StableParams,
    pub tail: TailSpec,
    pub anchor: Anchor,
    pub point: f64,
    pub t_final: f64,
    pub k_max: usize,
    /// Highest order the build may raise `K` to while the fitted remainder
    /// exceeds `tau_series`; equal to `k_max` disables raising.
    pub k_ceiling: usize,
    /// Largest admissible fitted series remainder.
    pub tau_series: f64,
    /// First table time as a fraction of `T`.
    pub warmup_ratio: f64,
    pub per_decade: usize,
    /// Step of the sinh variable in kernel tables.
    pub du: f64,
    /// Half-width of the spatial range of the tables.
    pub extent: f64,
    pub s_nodes: usize,
    pub z_points: usize,
    pub z_panel: f64,
}

impl ParametrixConfig {
    pub fn new(drift: DriftSpec, noise: StableParams, tail: TailSpec, x: f64, t_final: f64) -> Self {
        Self {
            drift,
            noise,
            tail,
            anchor: Anchor::Start,
            point: x,
            t_final,
            k_max: 4,
            k_ceiling: 4,
            tau_series: 1e-3,
            warmup_ratio: 1e-4,
            per_decade: 6,
            du: 0.1,
            extent: 400.0,
            s_nodes: 8,
            z_points: 6,
            z_panel: 1.0,
        }
    }

    pub fn from_model(model: &ProcessModel, x: f64, t_final: f64) -> Result<Self> {
        model.validate()?;
        match model {
            ProcessModel::LocallyStableSde { drift, p, tail, .. } => Ok(Self::new(drift.clone(), *p, *tail, x, t_final)),
            _ => Err(Error::Unsupported("the parametrix is built for the locally stable SDE only".into())),
        }
    }

    /// Same settings anchored at the end point `y`.
    pub fn backward(&self, y: f64) -> Self {
        Self {
            anchor: Anchor::End,
            point: y,
            ..self.clone()
        }
    }

    /// Smallest time at which results are reported: `10⁻³·T`.
    pub fn t_min(&self) -> f64 {
        1e-3 * self.t_final
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if !(self.noise.alpha < 1.0) {
            return Err(Error::invalid("alpha", "the parametrix construction requires alpha < 1"));
        }
        self.drift.validate(true)?;
        self.tail.validate()?;
        let positive = [
            ("t_final", self.t_final),
            ("tau_series", self.tau_series),
            ("du", self.du),
            ("extent", self.extent),
            ("z_panel", self.z_panel),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        if !(self.warmup_ratio > 0.0 && self.warmup_ratio < 1e-3) {
            return Err(Error::invalid("warmup_ratio", "must lie in (0, 1e-3)"));
        }
        if self.k_max < 2 {
            return Err(Error::invalid("k_max", "at least two series terms are needed to fit the envelope"));
        }
        if self.k_ceiling < self.k_max {
            return Err(Error::invalid("k_ceiling", "must be at least k_max"));
        }
        if self.per_decade < 2 || self.s_nodes < 2 || self.z_points < 2 {
            return Err(Error::invalid("per_decade", "grid sizes must be at least 2"));
        }
        if !self.point.is_finite() {
            return Err(Error::invalid("x", "must be finite"));
        }
        Ok(())
    }
}

/// Size of the series terms and the fitted factorial envelope
/// `|Φ^{⋆k}| ≤ Ĉ₀(Ĉt)^{k−1}/k!·(g_{t+1} + g_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesDiagnostics {
    /// `A_k = sup |Φ^{⋆k}_τ| / (τ^{k−1}(g_{τ+1} + g_τ))` over table times
    /// `τ ≥ t_min`, for `k = 1..=K`.
    pub envelope_ratios: Vec<f64>,
    /// `max |Φ^{⋆k}_T|` over the table grid at `T`.
    pub sup_norms: Vec<f64>,
    pub c0_hat: f64,
    pub c_hat: f64,
    /// `Σ_{k>K} Ĉ₀(ĈT)^{k−1}/k!`.
    pub tail_bound: f64,
    /// `log sup_norms` has nonpositive second differences.
    pub concave: bool,
    pub decreasing: bool,
}

/// Empirical constant of `p_t(x,y) ≤ C(g_{t+1} + g_t)(y − χ_t(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityBoundReport {
    pub sup_ratio: f64,
    /// `(t, sup ratio at t, ∫ p_t dy)`.
    pub per_t: Vec<(f64, f64, f64)>,
    pub grid: FieldGrid,
}

pub struct ParametrixState {
    pub config: ParametrixConfig,
    engine: Engine,
    /// Reporting times, log-spaced in `[10⁻³T, T]`.
    pub t_grid: Vec<f64>,
    /// Table times, log-spaced from `warmup_ratio·T` to `T`.
    pub tau_grid: Vec<f64>,
    /// Time-split nodes `(s, weight)` on `[0, T/2]`.
    pub s_quadrature: Vec<(f64, f64)>,
    /// `Φ^{⋆k}` for `k = 2..=K` (index 0 holds `k = 2`).
    pub series: Vec<KernelTable>,
    /// Start anchor: `Σ_{k=1}^{K−1} p⁰⋆Φ^{⋆k}`; end anchor: `Σ_{k=2}^{K} Φ^{⋆k}`.
    pub correction: Option<KernelTable>,
    /// Last `p⁰⋆Φ^{⋆k}` level, kept for extending a start-anchored series.
    p_last: Option<KernelTable>,
    pub diagnostics: SeriesDiagnostics,
}

impl std::fmt::Debug for ParametrixState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParametrixState")
            .field("config", &self.config)
            .field("tau_grid", &self.tau_grid.len())
            .field("diagnostics", &self.diagnostics)
            .finish()
    }
}

/// Tabulate the parametrix series and form the density.
pub fn build_parametrix_density(config: ParametrixConfig) -> Result<ParametrixState> {
    ParametrixState::build(config)
}

impl ParametrixState {
    pub fn build(config: ParametrixConfig) -> Result<Self> {
        config.validate()?;
        let engine = Engine::new(
            config.drift.clone(),
            config.noise,
            config.tail,
            config.extent,
            config.s_nodes,
            config.z_points,
            config.z_panel,
        )?;
        let t_final = config.t_final;
        let decades = (1.0 / config.warmup_ratio).log10();
        let n_tau = (decades * config.per_decade as f64).ceil() as usize + 1;
        let tau_grid = log_times(config.warmup_ratio * t_final, t_final, n_tau);
        let t_grid = log_times(config.t_min(), t_final, 13);
        let s_quadrature = engine.split_times(t_final);
        let mut state = Self {
            config,
            engine,
            t_grid,
            tau_grid,
            s_quadrature,
            series: Vec::new(),
            correction: None,
            p_last: None,
            diagnostics: SeriesDiagnostics {
                envelope_ratios: Vec::new(),
                sup_norms: Vec::new(),
                c0_hat: 0.0,
                c_hat: 0.0,
                tail_bound: 0.0,
                concave: true,
                decreasing: true,
            },
        };
        let contexts = state.tau_grid.iter().map(|&t| state.engine.context(t)).collect::<Result<Vec<_>>>()?;
        while state.order() < state.config.k_max {
            state.extend(&contexts)?;
        }
        loop {
            state.diagnostics = state.series_diagnostics()?;
            if state.diagnostics.tail_bound <= state.config.tau_series {
                return Ok(state);
            }
            if state.order() >= state.config.k_ceiling {
                return Err(Error::SeriesTruncation {
                    tail_bound: state.diagnostics.tail_bound,
                    tolerance: state.config.tau_series,
                    k_max: state.order(),
                });
            }
            state.extend(&contexts)?;
        }
    }

    fn point(&self) -> f64 {
        self.config.point
    }

    fn empty_table(&self, label: &str, power: i32) -> Result<KernelTable> {
        let b = &self.config.drift;
        let centers = self
            .tau_grid
            .iter()
            .map(|&t| match self.config.anchor {
                Anchor::Start => flow_chi(b, self.point(), t),
                Anchor::End => flow_theta(b, self.point(), t),
            })
            .collect::<Result<Vec<_>>>()?;
        let scales = self.tau_grid.iter().map(|&t| self.config.noise.spread(t)).collect();
        Ok(KernelTable::empty(label, &self.tau_grid, centers, scales, self.config.du, self.config.extent, power))
    }

    /// One convolution level `L ⋆ R` tabulated on the table grids.
    fn level(&self, contexts: &[Context], label: &str, power: i32, left: Kern, right: Kern) -> Result<KernelTable> {
        let mut table = self.empty_table(label, power)?;
        let cells: Vec<(usize, usize)> = (0..self.tau_grid.len())
            .flat_map(|i| (0..table.ratios[i].len()).map(move |j| (i, j)))
            .collect();
        let anchor = self.config.anchor;
        let point = self.point();
        let values: Vec<f64> = cells
            .par_iter()
            .map_init(Vec::new, |buf, &(i, j)| {
                let z = table.node(i, j);
                match anchor {
                    Anchor::Start => self.engine.convolve(&contexts[i], left, right, point, z, buf),
                    Anchor::End => self.engine.convolve(&contexts[i], left, right, z, point, buf),
                }
            })
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Quadrature {
                what: "parametrix convolution",
                error: f64::NAN,
                intervals: 0,
            });
        }
        let mut k = 0;
        for i in 0..self.tau_grid.len() {
            let n = table.ratios[i].len();
            let row = values[k..k + n].to_vec();
            table.set(&self.engine.env, i, &row);
            k += n;
        }
        Ok(table)
    }

    /// Current series order `K`.
    pub fn order(&self) -> usize {
        self.series.len() + 1
    }

    /// Add `Φ^{⋆(K+1)}` and, when start-anchored, `p⁰⋆Φ^{⋆K}`.
    fn extend(&mut self, contexts: &[Context]) -> Result<()> {
        let k = self.order() + 1;
        let phi = Kern::explicit(Explicit::Phi);
        let label = format!("phi_star_{k}");
        let next = match (self.config.anchor, self.series.last()) {
            (_, None) => self.level(contexts, &label, k as i32 - 1, phi, phi)?,
            (Anchor::Start, Some(prev)) => self.level(contexts, &label, k as i32 - 1, Kern::table(prev), phi)?,
            (Anchor::End, Some(prev)) => self.level(contexts, &label, k as i32 - 1, phi, Kern::table(prev))?,
        };
        let mut sum = match self.correction.take() {
            Some(t) => t,
            None => match self.config.anchor {
                Anchor::Start => self.empty_table("p0_star_psi_partial", 1)?,
                Anchor::End => self.empty_table("psi_minus_phi", 1)?,
            },
        };
        match self.config.anchor {
            Anchor::End => sum.accumulate(&next),
            Anchor::Start => {
                let label = format!("p0_star_phi_star_{}", k - 1);
                let left = match &self.p_last {
                    None => Kern::explicit(Explicit::P0),
                    Some(p) => Kern::table(p),
                };
                let t = self.level(contexts, &label, k as i32 - 1, left, phi)?;
                sum.accumulate(&t);
                self.p_last = Some(t);
            }
        }
        self.series.push(next);
        self.correction = Some(sum);
        Ok(())
    }

    /// `Φ_τ` on the grid of table time `i`.
    fn phi_on_grid(&self, i: usize, grid: &KernelTable) -> Result<Vec<f64>> {
        let sl = self.engine.slice(self.tau_grid[i])?;
        let e = &self.engine;
        Ok(grid
            .nodes(i)
            .iter()
            .map(|&z| match self.config.anchor {
                Anchor::Start => e.phi(&sl, self.point(), sl.theta(e, z)),
                Anchor::End => e.phi(&sl, z, sl.theta(e, self.point())),
            })
            .collect())
    }

    fn series_diagnostics(&self) -> Result<SeriesDiagnostics> {
        let kk = self.order();
        let grid = self.empty_table("grid", 0)?;
        let env = &self.engine.env;
        let last = self.tau_grid.len() - 1;
        let t_min = self.config.t_min() * (1.0 - 1e-9);
        let mut ratios = vec![0.0f64; kk];
        let mut norms = vec![0.0f64; kk];
        for (i, &tau) in self.tau_grid.iter().enumerate() {
            if tau < t_min {
                continue;
            }
            let nodes = grid.nodes(i);
            for k in 1..=kk {
                let vals = if k == 1 {
                    self.phi_on_grid(i, &grid)?
                } else {
                    self.series[k - 2].values(env, i)
                };
                for (z, v) in nodes.iter().zip(&vals) {
                    let n = tau.powi(k as i32 - 1) * self.engine.envelope(tau, z - grid.centers[i]);
                    ratios[k - 1] = ratios[k - 1].max(v.abs() / n);
                    if i == last {
                        norms[k - 1] = norms[k - 1].max(v.abs());
                    }
                }
            }
        }
        let (c0_hat, c_hat) = fit_envelope(&ratios);
        let t = self.config.t_final;
        let mut tail_bound = 0.0;
        let mut term = c0_hat;
        for k in 1..=kk + 80 {
            if k > 1 {
                term *= c_hat * t / k as f64;
            }
            if k > kk {
                tail_bound += term;
            }
        }
        let logs: Vec<f64> = norms.iter().map(|n| n.ln()).collect();
        let concave = logs.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] <= 1e-9 * w[1].abs().max(1.0));
        let decreasing = logs.windows(2).all(|w| w[1] < w[0]);
        Ok(SeriesDiagnostics {
            envelope_ratios: ratios,
            sup_norms: norms,
            c0_hat,
            c_hat,
            tail_bound,
            concave,
            decreasing,
        })
    }

    fn expect_anchor(&self, anchor: Anchor, value: f64) -> Result<()> {
        if self.config.anchor != anchor || value != self.point() {
            return Err(Error::Unsupported(format!(
                "state is anchored at {:?} point {}; requested {:?} point {}",
                self.config.anchor,
                self.point(),
                anchor,
                value
            )));
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t > 0.0 && t <= 1.05 * self.config.t_final) {
            return Err(Error::invalid("t", "time must lie in (0, T]"));
        }
        Ok(())
    }

    /// `p_t(x, y)` for the anchored `x` and every `y` in `ys`.
    fn forward_row(&self, t: f64, ys: &[f64]) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let ctx = self.engine.context(t)?;
        let sl = self.engine.slice(t)?;
        let x = self.point();
        let e = &self.engine;
        let left = Kern::sum(Explicit::P0, self.correction.as_ref());
        let right = Kern::explicit(Explicit::Phi);
        Ok(ys
            .par_iter()
            .map_init(Vec::new, |buf, &y| e.p0(&sl, x, sl.theta(e, y)) + e.convolve(&ctx, left, right, x, y, buf))
            .collect())
    }

    /// `p_t(x, y)` for the anchored `y` and every `x` in `xs`.
    pub fn density_column(&self, t: f64, xs: &[f64]) -> Result<Vec<f64>> {
        if self.config.anchor != Anchor::End {
            return Err(Error::Unsupported("columns need a state anchored at the end point".into()));
        }
        self.check_time(t)?;
        let ctx = self.engine.context(t)?;
        let sl = self.engine.slice(t)?;
        let y = self.point();
        let e = &self.engine;
        let th = sl.theta(e, y);
        let left = Kern::explicit(Explicit::P0);
        let right = Kern::sum(Explicit::Phi, self.correction.as_ref());
        Ok(xs
            .par_iter()
            .map_init(Vec::new, |buf, &x| e.p0(&sl, x, th) + e.convolve(&ctx, left, right, x, y, buf))
            .collect())
    }

    /// `p⁰_t(x, y) = g_t^{(α,C±)}(θ_t(y) − x)` for any `x, y`.
    pub fn p0(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.engine.g.density(t, flow_theta(&self.config.drift, y, t)? - x))
    }

    /// `Φ_t(x, y)` for any `x, y`, with the tail part by adaptive quadrature.
    pub fn phi(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        self.phi_with(t, x, y, QuadSettings {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_intervals: 20000,
        })
    }

    pub fn phi_with(&self, t: f64, x: f64, y: f64, settings: QuadSettings) -> Result<f64> {
        self.check_time(t)?;
        let e = &self.engine;
        let th = flow_theta(&self.config.drift, y, t)?;
        let w = th - x;
        let db = e.drift.eval(th) - e.drift.eval(x);
        let mut v = db * e.g.eval(t, w, 1);
        if e.has_tail_part() {
            v += e.tail_convolution(t, w, settings)? - e.d_total * e.g.density(t, w);
        }
        Ok(v)
    }

    /// `Φ_t` through the per-time tables used inside convolutions.
    pub fn phi_tabulated(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        self.check_time(t)?;
        let sl = self.engine.slice(t)?;
        Ok(self.engine.phi(&sl, x, sl.theta(&self.engine, y)))
    }

    /// `Φ^{⋆k}` at the anchor and free point `z` (`k = 1` is explicit).
    pub fn phi_star(&self, k: usize, t: f64, z: f64) -> Result<f64> {
        self.check_time(t)?;
        match k {
            0 => Err(Error::invalid("k", "series terms start at k = 1")),
            1 => match self.config.anchor {
                Anchor::Start => self.phi_tabulated(t, self.point(), z),
                Anchor::End => self.phi_tabulated(t, z, self.point()),
            },
            _ => self
                .series
                .get(k - 2)
                .map(|tab| tab.eval(&self.engine.env, t, z))
                .ok_or_else(|| Error::invalid("k", "beyond the tabulated series order")),
        }
    }

    /// `Ψ = Σ_{k≤K} Φ^{⋆k}` at the anchor and free point `z`.
    pub fn psi(&self, t: f64, z: f64) -> Result<f64> {
        (1..=self.order()).map(|k| self.phi_star(k, t, z)).sum()
    }

    /// Kernel matrix with one row per time and one column per free point.
    pub fn kernel_matrix(&self, kernel: KernelKind, ts: &[f64], zs: &[f64]) -> Result<Vec<Vec<f64>>> {
        ts.iter()
            .map(|&t| match kernel {
                KernelKind::P0 => zs
                    .iter()
                    .map(|&z| match self.config.anchor {
                        Anchor::Start => self.p0(t, self.point(), z),
                        Anchor::End => self.p0(t, z, self.point()),
                    })
                    .collect(),
                KernelKind::PhiStar(k) => zs.iter().map(|&z| self.phi_star(k, t, z)).collect(),
                KernelKind::Psi => zs.iter().map(|&z| self.psi(t, z)).collect(),
                KernelKind::Density => match self.config.anchor {
                    Anchor::Start => self.forward_row(t, zs),
                    Anchor::End => self.density_column(t, zs),
                },
            })
            .collect()
    }

    /// Default reporting grid: `401` sinh-graded points capped inside the
    /// table extent.
    pub fn default_grid(&self) -> FieldGrid {
        FieldGrid {
            reach: 1e4,
            points: 401,
            max_extent: 0.9 * self.config.extent,
        }
    }

    /// Mass and empirical constant of `p_t ≤ C(g_{t+1} + g_t)(y − χ_t(x))`.
    pub fn density_bound(&self, t_list: &[f64], grid: &FieldGrid) -> Result<DensityBoundReport> {
        if self.config.anchor != Anchor::Start {
            return Err(Error::Unsupported("density rows need a state anchored at the start point".into()));
        }
        let x = self.point();
        let mut per_t = Vec::with_capacity(t_list.len());
        for &t in t_list {
            let c = self.center(t, x)?;
            let ys = grid.nodes(c, self.config.noise.spread(t));
            let p = self.forward_row(t, &ys)?;
            let sup = ys
                .iter()
                .zip(&p)
                .map(|(y, v)| v.abs() / self.engine.envelope(t, y - c))
                .fold(0.0, f64::max);
            let mass = line_integral(&ys, &p, c, self.power_tail());
            per_t.push((t, sup, mass));
        }
        Ok(DensityBoundReport {
            sup_ratio: per_t.iter().map(|r| r.1).fold(0.0, f64::max),
            per_t,
            grid: *grid,
        })
    }

    /// Sup of `|∂_t p|·t^{1/α}/(g_{t+1} + g_t)(y − χ_t(x))` over the grid and
    /// the `β` fit of `∫|∂_t p| dy`.
    pub fn check_dt_bound(&self, t_list: &[f64], grid: &FieldGrid) -> Result<DtBoundReport> {
        check_dt_bound(self, t_list, self.point(), self.config.t_final, grid)
    }

    /// `(∫ p_s(x,z) p_{t−s}(z,y) dz, p_t(x,y))` using this start-anchored
    /// state and a state anchored at the end point `y`.
    pub fn chapman_kolmogorov(&self, backward: &ParametrixState, s: f64, t: f64) -> Result<(f64, f64)> {
        if self.config.anchor != Anchor::Start || backward.config.anchor != Anchor::End {
            return Err(Error::Unsupported("needs a start-anchored and an end-anchored state".into()));
        }
        if !(s > 0.0 && s < t) {
            return Err(Error::invalid("s", "must lie in (0, t)"));
        }
        let x = self.point();
        let y = backward.point();
        let q = FeatureQuadrature::new(8, 0.5, 0.9 * self.config.extent);
        let mut nodes = Vec::new();
        let feats = [
            (flow_chi(&self.config.drift, x, s)?, self.config.noise.spread(s)),
            (flow_theta(&self.config.drift, y, t - s)?, self.config.noise.spread(t - s)),
        ];
        q.nodes(&feats, &mut nodes);
        let zs: Vec<f64> = nodes.iter().map(|n| n.0).collect();
        let left = self.forward_row(s, &zs)?;
        let right = backward.density_column(t - s, &zs)?;
        let lhs = nodes.iter().zip(left.iter().zip(&right)).map(|(n, (a, b))| n.1 * a * b).sum();
        let rhs = self.forward_row(t, &[y])?[0];
        Ok((lhs, rhs))
    }
}

/// Kernels available for export.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    P0,
    PhiStar(usize),
    Psi,
    Density,
}

/// Least-squares fit of `log(A_k k!) = log Ĉ₀ + (k−1) log Ĉ`, then `Ĉ₀`
/// raised until the envelope covers every term.
fn fit_envelope(ratios: &[f64]) -> (f64, f64) {
    let mut fact = 1.0;
    let pts: Vec<(f64, f64)> = ratios
        .iter()
        .enumerate()
        .map(|(i, a)| {
            fact *= (i + 1) as f64;
            (i as f64, a * fact)
        })
        .collect();
    let pos: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.1 > 0.0).collect();
    if pos.is_empty() {
        return (0.0, 0.0);
    }
    let c_hat = if pos.len() >= 2 {
        let xs: Vec<f64> = pos.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pos.iter().map(|p| p.1.ln()).collect();
        fit_line(&xs, &ys).map(|f| f.slope.exp()).unwrap_or(0.0)
    } else {
        0.0
    };
    let c0 = pts
        .iter()
        .map(|&(k, b)| if c_hat > 0.0 { b / c_hat.powf(k) } else if k == 0.0 { b } else { 0.0 })
        .fold(0.0, f64::max);
    (c0, c_hat)
}

impl TransitionDensity for ParametrixState {
    fn noise(&self) -> &StableParams {
        &self.config.noise
    }

    fn center(&self, t: f64, x: f64) -> Result<f64> {
        flow_chi(&self.config.drift, x, t)
    }

    /// Tempered and truncated tails decay faster than any power.
    fn power_tail(&self) -> Option<f64> {
        matches!(self.config.tail, TailSpec::PureStable).then_some(self.config.noise.alpha)
    }

    fn density_row(&self, t: f64, x: f64, ys: &[f64]) -> Result<Vec<f64>> {
        self.expect_anchor(Anchor::Start, x)?;
        self.forward_row(t, ys)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::simpson_nonuniform;
    use crate::stable::StableTable;
    use std::sync::OnceLock;

    fn noise() -> StableParams {
        StableParams::new(0.75, 1.0, 1.0).unwrap()
    }

    fn coarse(drift: DriftSpec, tail: TailSpec, t_final: f64, k_max: usize) -> ParametrixConfig {
        let mut c = ParametrixConfig::new(drift, noise(), tail, 0.5, t_final);
        c.per_decade = 4;
        c.s_nodes = 6;
        c.k_max = k_max;
        c.k_ceiling = k_max;
        c.tau_series = 1e6;
        c
    }

    fn tanh() -> DriftSpec {
        DriftSpec::Tanh { amp: 0.5, rate: 1.0 }
    }

    fn tempered() -> TailSpec {
        TailSpec::Tempered { lambda: 1.0 }
    }

    /// Shared coarse state for the tanh drift with tempered tails.
    fn shared() -> &'static ParametrixState {
        static STATE: OnceLock<ParametrixState> = OnceLock::new();
        STATE.get_or_init(|| ParametrixState::build(coarse(tanh(), tempered(), 1.0, 3)).unwrap())
    }

    struct PhiKernel<'a>(&'a ParametrixState);

    impl SpaceTimeKernel for PhiKernel<'_> {
        fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
            self.0.phi_tabulated(t, x, y).unwrap()
        }
        fn forward_feature(&self, t: f64, x: f64) -> (f64, f64) {
            (flow_chi(&self.0.config.drift, x, t).unwrap(), self.0.config.noise.spread(t))
        }
        fn backward_feature(&self, t: f64, y: f64) -> (f64, f64) {
            (flow_theta(&self.0.config.drift, y, t).unwrap(), self.0.config.noise.spread(t))
        }
    }

    #[test]
    fn pure_stable_without_drift_reduces_to_p0() {
        let st = ParametrixState::build(coarse(DriftSpec::zero(), TailSpec::PureStable, 1.0, 2)).unwrap();
        assert_eq!(st.diagnostics.tail_bound, 0.0);
        for t in [0.01, 0.3, 1.0] {
            let ys = [-3.0, 0.0, 0.5, 2.0, 40.0];
            let p = st.density_row(t, 0.5, &ys).unwrap();
            for (y, v) in ys.iter().zip(&p) {
                assert_eq!(*v, st.p0(t, 0.5, *y).unwrap());
                assert_eq!(st.phi(t, 0.5, *y).unwrap(), 0.0);
                assert_eq!(st.psi(t, *y).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn drift_free_dt_bound_matches_closed_form() {
        let st = ParametrixState::build(coarse(DriftSpec::zero(), TailSpec::PureStable, 1.0, 2)).unwrap();
        let closed = super::super::StableDriftDensity::new(&noise(), 0.0).unwrap();
        let ts = log_times(1e-3, 1.0, 4);
        let g = FieldGrid {
            reach: 1e3,
            points: 401,
            max_extent: f64::INFINITY,
        };
        let a = st.check_dt_bound(&ts, &g).unwrap();
        let b = check_dt_bound(&closed, &ts, 0.5, 1.0, &g).unwrap();
        assert!((a.sup_ratio / b.sup_ratio - 1.0).abs() < 1e-3, "{} vs {}", a.sup_ratio, b.sup_ratio);
    }

    #[test]
    fn flow_kernel_uses_backward_flow() {
        let b = DriftSpec::Linear {
            a: -1.0,
            bias: 0.0,
            bound: f64::INFINITY,
        };
        let g = StableTable::new(&noise()).unwrap();
        let k = FlowStableKernel { drift: b, table: &g };
        for (t, x, y) in [(0.7f64, 0.2, 1.3), (0.05, -1.0, 0.4)] {
            let exact = g.density(t, y * t.exp() - x);
            assert!((k.eval(t, x, y) - exact).abs() < 1e-9 * exact);
        }
    }

    /// Without drift `g ⋆ g = t·g_t` by the semigroup property.
    #[test]
    fn generic_convolution_of_stable_kernel() {
        let g = StableTable::new(&noise()).unwrap();
        let k = FlowStableKernel {
            drift: DriftSpec::zero(),
            table: &g,
        };
        for (t, y) in [(0.5, 0.3), (1.0, 2.0), (0.1, -0.05)] {
            let v = convolve_space_time(&k, &k, t, 0.0, y, &ConvolutionRule::default()).unwrap();
            let exact = t * g.density(t, y);
            assert!((v - exact).abs() < 1e-5 * exact, "t {t} y {y}: {v} vs {exact}");
        }
    }

    #[test]
    fn phi_table_matches_direct_quadrature() {
        let st = shared();
        for (t, x, y) in [(0.25, 0.0, 0.0), (0.25, 0.5, 1.6), (0.01, 0.5, -0.49), (1.0, 0.5, 3.0), (0.003, 0.0, 1.0)] {
            let a = st.phi(t, x, y).unwrap();
            let b = st.phi_tabulated(t, x, y).unwrap();
            let scale = st.engine.envelope(t, y - x);
            assert!((a - b).abs() < 1e-5 * scale.max(1.0), "t {t} x {x} y {y}: {a} vs {b}");
        }
    }

    #[test]
    fn phi_refinement_oracle() {
        let st = shared();
        let coarse = st.phi(0.25, 0.0, 0.0).unwrap();
        let fine = st
            .phi_with(0.25, 0.0, 0.0, QuadSettings {
                abs_tol: 1e-13,
                rel_tol: 1e-12,
                max_intervals: 200_000,
            })
            .unwrap();
        assert!((coarse - fine).abs() < 1e-8 * fine.abs().max(1.0));
    }

    #[test]
    fn second_series_term_matches_generic_convolution() {
        let st = shared();
        let rule = ConvolutionRule {
            s_nodes: 16,
            z_points: 16,
            z_panel: 0.25,
            reach: 60.0,
        };
        let k = PhiKernel(st);
        let sup = st.diagnostics.sup_norms[1];
        // t = T is a table time, so only spatial interpolation enters.
        for (t, y) in [(1.0, 0.5), (1.0, 1.8), (1.0, -1.0)] {
            let a = st.phi_star(2, t, y).unwrap();
            let b = convolve_space_time(&k, &k, t, 0.5, y, &rule).unwrap();
            assert!((a - b).abs() < 2e-3 * sup, "t {t} y {y}: {a} vs {b}");
        }
    }

    #[test]
    fn density_has_unit_mass() {
        let st = shared();
        let g = st.default_grid();
        for t in [0.1, 0.5] {
            let c = st.center(t, 0.5).unwrap();
            let ys = g.nodes(c, noise().spread(t));
            let p = st.density_row(t, 0.5, &ys).unwrap();
            let m = simpson_nonuniform(&ys, &p);
            assert!((m - 1.0).abs() < 1e-3, "t {t}: {m}");
        }
    }

    #[test]
    fn start_and_end_anchored_densities_agree() {
        let st = shared();
        let back = ParametrixState::build(st.config.backward(1.0)).unwrap();
        for t in [0.2, 0.6] {
            let a = st.density_row(t, 0.5, &[1.0]).unwrap()[0];
            let b = back.density_column(t, &[0.5]).unwrap()[0];
            assert!((a - b).abs() < 2e-3 * a, "t {t}: {a} vs {b}");
        }
    }

    #[test]
    fn order_is_raised_until_the_factorial_envelope_converges() {
        let mut c = coarse(tanh(), tempered(), 0.1, 2);
        c.tau_series = 1e-3;
        c.k_ceiling = 8;
        let st = ParametrixState::build(c).unwrap();
        let d = &st.diagnostics;
        assert!(st.order() > 2 && d.tail_bound <= 1e-3, "{d:?}");
        assert_eq!(d.envelope_ratios.len(), st.order());
        assert!(d.concave && d.decreasing, "{d:?}");
    }

    #[test]
    fn large_remainder_is_reported() {
        let mut c = coarse(tanh(), tempered(), 1.0, 2);
        c.per_decade = 2;
        c.du = 0.3;
        c.tau_series = 1e-2;
        assert!(matches!(ParametrixState::build(c), Err(Error::SeriesTruncation { .. })));
    }

    #[test]
    fn rejects_alpha_at_least_one() {
        let mut c = coarse(tanh(), tempered(), 1.0, 2);
        c.noise = StableParams::new(1.5, 1.0, 1.0).unwrap();
        assert!(ParametrixState::build(c).is_err());
    }

    #[test]
    fn envelope_fit_recovers_factorial_shape() {
        let (c0, c) = (2.0f64, 3.0f64);
        let ratios: Vec<f64> = (1..=4)
            .map(|k: i32| {
                let f: f64 = (1..=k).map(f64::from).product();
                c0 * c.powi(k - 1) / f
            })
            .collect();
        let (a, b) = fit_envelope(&ratios);
        assert!((a - c0).abs() < 1e-9 && (b - c).abs() < 1e-9);
    }
}
