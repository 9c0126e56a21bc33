//! Explicit kernels `p⁰`, `Φ` and the per-time tables they rely on.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::error::Result;
use crate::models::{DriftSpec, TailSpec};
use crate::numerics::{integrate, lagrange4, FeatureQuadrature, GaussLegendre, QuadSettings, SinhGrid};
use crate::stable::{StableParams, StableTable};

/// Step of the sinh variable in tail tables.
const TAIL_DU: f64 = 0.1;
/// Nodes of the per-slice flow tables.
const FLOW_NODES: usize = 1601;
const FLOW_STEPS: usize = 48;

/// Shared model data and caches for one parametrix build.
pub(crate) struct Engine {
    pub drift: DriftSpec,
    pub noise: StableParams,
    pub tail: TailSpec,
    /// `g^{(α,C±)}` of the noise.
    pub g: StableTable,
    /// Symmetric companion `g^{(α)}` used for envelopes.
    pub env: StableTable,
    /// `∫_{|u|≥1} (m(u) − m^{(α,C±)}(u)) du`.
    pub d_total: f64,
    pub extent: f64,
    pub s_rule: GaussLegendre,
    pub zq: FeatureQuadrature,
    slices: Mutex<HashMap<u64, Arc<Slice>>>,
}

/// Time-split quadrature for one output time `t`: node `s` carries the
/// slices at `s` and `t − s`.
pub(crate) struct Context {
    pub nodes: Vec<SNode>,
}

pub(crate) struct SNode {
    pub weight: f64,
    pub near: Arc<Slice>,
    pub far: Arc<Slice>,
}

impl Engine {
    pub fn new(drift: DriftSpec, noise: StableParams, tail: TailSpec, extent: f64, s_nodes: usize, z_points: usize, z_panel: f64) -> Result<Self> {
        let g = StableTable::new(&noise)?;
        let env = StableTable::new(&noise.symmetric_companion())?;
        let d_total = tail_difference_mass(&noise, &tail)?;
        Ok(Self {
            drift,
            noise,
            tail,
            g,
            env,
            d_total,
            extent,
            s_rule: GaussLegendre::new(s_nodes),
            zq: FeatureQuadrature::new(z_points, z_panel, extent),
            slices: Mutex::new(HashMap::new()),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.noise.alpha
    }

    pub fn has_tail_part(&self) -> bool {
        !matches!(self.tail, TailSpec::PureStable)
    }

    /// `(g_{τ+1} + g_τ)(w)`.
    #[inline]
    pub fn envelope(&self, tau: f64, w: f64) -> f64 {
        super::super::envelope(&self.env, tau, w)
    }

    /// Slice for time `tau`, built once and cached.
    pub fn slice(&self, tau: f64) -> Result<Arc<Slice>> {
        if let Some(s) = self.slices.lock().unwrap().get(&tau.to_bits()) {
            return Ok(s.clone());
        }
        let s = Arc::new(Slice::new(self, tau)?);
        self.slices.lock().unwrap().insert(tau.to_bits(), s.clone());
        Ok(s)
    }

    /// Build the slices for many times at once.
    pub fn warm(&self, taus: &[f64]) -> Result<()> {
        let missing: Vec<f64> = {
            let cache = self.slices.lock().unwrap();
            let mut v: Vec<f64> = taus.iter().copied().filter(|t| !cache.contains_key(&t.to_bits())).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let built = missing
            .par_iter()
            .map(|&t| Slice::new(self, t).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        let mut cache = self.slices.lock().unwrap();
        for s in built {
            cache.insert(s.tau.to_bits(), s);
        }
        Ok(())
    }

    /// Split nodes `s = (t/2)v²` on both halves of `[0, t]`.
    pub fn split_times(&self, t: f64) -> Vec<(f64, f64)> {
        self.s_rule
            .nodes
            .iter()
            .zip(&self.s_rule.weights)
            .map(|(x, w)| {
                let v = 0.5 * (x + 1.0);
                (0.5 * t * v * v, 0.5 * w * t * v)
            })
            .collect()
    }

    pub fn context(&self, t: f64) -> Result<Context> {
        let split = self.split_times(t);
        let mut taus: Vec<f64> = split.iter().flat_map(|(s, _)| [*s, t - s]).collect();
        taus.push(t);
        self.warm(&taus)?;
        let nodes = split
            .iter()
            .map(|&(s, w)| {
                Ok(SNode {
                    weight: w,
                    near: self.slice(s)?,
                    far: self.slice(t - s)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Context { nodes })
    }

    /// `p⁰_τ(a, b) = g_τ(θ_τ(b) − a)` given `θ_τ(b)`.
    #[inline]
    pub fn p0(&self, sl: &Slice, a: f64, theta_b: f64) -> f64 {
        sl.k * self.g.eval_unit((theta_b - a) * sl.k, 0)
    }

    /// `Φ_τ(a, b) = (L_a − ∂_τ) p⁰_τ(a, b)` given `θ_τ(b)`.
    #[inline]
    pub fn phi(&self, sl: &Slice, a: f64, theta_b: f64) -> f64 {
        let w = theta_b - a;
        let z = w * sl.k;
        let mut v = 0.0;
        if !self.drift.is_zero() {
            let db = self.drift.eval(theta_b) - self.drift.eval(a);
            if db != 0.0 {
                v += db * sl.k * sl.k * self.g.eval_unit(z, 1);
            }
        }
        if self.has_tail_part() {
            v += sl.tail_value(self, w) - self.d_total * sl.k * self.g.eval_unit(z, 0);
        }
        v
    }

    /// `∫_{|u|≥1} g_τ(w − u)(m − m^{(α,C±)})(u) du` by adaptive quadrature.
    pub fn tail_convolution(&self, tau: f64, w: f64, settings: QuadSettings) -> Result<f64> {
        let sigma = self.noise.spread(tau);
        let al = self.alpha();
        // Φ is of order g_τ(0) near its peak, so tolerances scale with it.
        let settings = QuadSettings {
            abs_tol: settings.abs_tol * self.g.density(tau, 0.0).max(1.0),
            ..settings
        };
        let mut total = 0.0;
        for sign in [1.0, -1.0] {
            // u = sign·r with r ≥ 1; the peak of g_τ sits at r = sign·w.
            let f = |r: f64| self.g.density(tau, w - sign * r) * self.tail.levy_difference(&self.noise, sign * r);
            let big = 1e4f64.max(100.0 * w.abs());
            let mut br = vec![1.0];
            let peak = sign * w;
            for b in [peak - 8.0 * sigma, peak, peak + 8.0 * sigma] {
                if b > 1.0 && b < big {
                    br.push(b);
                }
            }
            let mut r = 2.0;
            while r < big {
                br.push(r);
                r *= 2.0;
            }
            br.push(big);
            br.sort_by(f64::total_cmp);
            br.dedup();
            let (v, _) = integrate(f, &br, settings, "tail part of the parametrix kernel")?;
            total += v + f(big) * big / (1.0 + 2.0 * al);
        }
        Ok(total)
    }

    fn rk4(&self, z: f64, tau: f64, sign: f64, steps: usize) -> f64 {
        if self.drift.is_zero() || tau == 0.0 {
            return z;
        }
        let h = tau / steps as f64;
        let b = |v: f64| sign * self.drift.eval(v);
        let mut v = z;
        for _ in 0..steps {
            let k1 = b(v);
            let k2 = b(v + 0.5 * h * k1);
            let k3 = b(v + 0.5 * h * k2);
            let k4 = b(v + h * k3);
            v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        v
    }
}

/// `∫_{|u|≥1} (m − m^{(α,C±)})(u) du`.
fn tail_difference_mass(p: &StableParams, tail: &TailSpec) -> Result<f64> {
    if matches!(tail, TailSpec::PureStable) {
        return Ok(0.0);
    }
    let settings = QuadSettings {
        abs_tol: 1e-15,
        rel_tol: 1e-12,
        max_intervals: 4000,
    };
    let mut total = 0.0;
    for sign in [1.0, -1.0] {
        let f = |r: f64| tail.levy_difference(p, sign * r);
        let big = 1e8;
        let br: Vec<f64> = (0..=8).map(|k| 10f64.powi(k)).collect();
        let (v, _) = integrate(f, &br, settings, "tail mass difference")?;
        total += v + f(big) * big / p.alpha;
    }
    Ok(total)
}

/// Per-time data: flows, scaling and the tail convolution table.
pub(crate) struct Slice {
    pub tau: f64,
    /// `τ^{−1/α}`.
    pub k: f64,
    pub sigma: f64,
    flow_grid: SinhGrid,
    /// `χ_τ(z) − z` and `θ_τ(z) − z` on `flow_grid`.
    chi_shift: Vec<f64>,
    theta_shift: Vec<f64>,
    tail: Option<TailTable>,
}

impl Slice {
    fn new(eng: &Engine, tau: f64) -> Result<Self> {
        let flow_grid = SinhGrid::symmetric(0.0, 1.0, 8.0 * eng.extent, FLOW_NODES);
        let (chi_shift, theta_shift) = if eng.drift.is_zero() {
            (Vec::new(), Vec::new())
        } else {
            let nodes = flow_grid.nodes();
            (
                nodes.iter().map(|z| eng.rk4(*z, tau, 1.0, FLOW_STEPS) - z).collect(),
                nodes.iter().map(|z| eng.rk4(*z, tau, -1.0, FLOW_STEPS) - z).collect(),
            )
        };
        let tail = if eng.has_tail_part() {
            Some(TailTable::new(eng, tau)?)
        } else {
            None
        };
        Ok(Self {
            tau,
            k: tau.powf(-1.0 / eng.alpha()),
            sigma: eng.noise.spread(tau),
            flow_grid,
            chi_shift,
            theta_shift,
            tail,
        })
    }

    #[inline]
    fn shifted(&self, eng: &Engine, z: f64, table: &[f64], sign: f64) -> f64 {
        if table.is_empty() {
            return z;
        }
        match self.flow_grid.interpolate(table, z) {
            Some(d) => z + d,
            None => eng.rk4(z, self.tau, sign, FLOW_STEPS),
        }
    }

    /// `χ_τ(z)`.
    #[inline]
    pub fn chi(&self, eng: &Engine, z: f64) -> f64 {
        self.shifted(eng, z, &self.chi_shift, 1.0)
    }

    /// `θ_τ(z)`.
    #[inline]
    pub fn theta(&self, eng: &Engine, z: f64) -> f64 {
        self.shifted(eng, z, &self.theta_shift, -1.0)
    }

    #[inline]
    pub fn tail_value(&self, eng: &Engine, w: f64) -> f64 {
        match &self.tail {
            Some(t) => t.eval(eng, self.tau, w),
            None => 0.0,
        }
    }
}

/// `T_τ(w) = ∫_{|u|≥1} g_τ(w − u)(m − m^{(α,C±)})(u) du` on four segments
/// graded toward `w = ±1`, where the kernel bends on the scale of `g_τ`.
struct TailTable {
    sigma: f64,
    limit: f64,
    /// Segments `[1, limit]`, `[0, 1]`, `[−1, 0]`, `[−limit, −1]`.
    segs: [Segment; 4],
}

struct Segment {
    step: f64,
    values: Vec<f64>,
}

impl TailTable {
    fn new(eng: &Engine, tau: f64) -> Result<Self> {
        let sigma = eng.noise.spread(tau);
        let limit = 8.0 * eng.extent;
        let settings = QuadSettings {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_intervals: 20000,
        };
        let seg = |origin: f64, dir: f64, length: f64| -> Result<Segment> {
            let u_end = (length / sigma).asinh();
            let n = ((u_end / TAIL_DU).ceil() as usize).max(4) + 1;
            let step = u_end / (n - 1) as f64;
            let values = (0..n)
                .map(|j| {
                    let w = origin + dir * sigma * (j as f64 * step).sinh();
                    eng.tail_convolution(tau, w, settings)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Segment { step, values })
        };
        Ok(Self {
            sigma,
            limit,
            segs: [seg(1.0, 1.0, limit - 1.0)?, seg(1.0, -1.0, 1.0)?, seg(-1.0, 1.0, 1.0)?, seg(-1.0, -1.0, limit - 1.0)?],
        })
    }

    #[inline]
    fn eval(&self, eng: &Engine, tau: f64, w: f64) -> f64 {
        if w.abs() > self.limit {
            return eng.tail.levy_difference(&eng.noise, w) + eng.d_total * eng.g.density(tau, w);
        }
        let (i, d) = if w >= 1.0 {
            (0, w - 1.0)
        } else if w >= 0.0 {
            (1, 1.0 - w)
        } else if w >= -1.0 {
            (2, w + 1.0)
        } else {
            (3, -1.0 - w)
        };
        let s = &self.segs[i];
        let pos = ((d / self.sigma).asinh() / s.step).min((s.values.len() - 1) as f64);
        lagrange4(&s.values, pos)
    }
}
