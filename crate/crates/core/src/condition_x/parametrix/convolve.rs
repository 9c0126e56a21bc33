//! Space-time convolution `(f ⋆ g)_t(x,y) = ∫₀^t ∫ f_{t−s}(x,z) g_s(z,y) dz ds`.
//!
//! The time integral is split at `t/2` so that each half only meets the
//! singular end of one factor; on each half `s = (t/2)v²` with
//! Gauss–Legendre nodes in `v`. Space integrals use feature-adapted nodes
//! around the points where either factor concentrates.

use super::kernels::{Context, Engine, Slice};
use super::table::KernelTable;
use crate::error::{Error, Result};
use crate::models::{flow_chi, flow_theta, DriftSpec};
use crate::numerics::{FeatureQuadrature, GaussLegendre};
use crate::stable::StableTable;

/// Closed-form kernels of the series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Explicit {
    P0,
    Phi,
}

/// A kernel given by an explicit part, a tabulated part, or their sum.
#[derive(Clone, Copy)]
pub(crate) struct Kern<'a> {
    pub explicit: Option<Explicit>,
    pub table: Option<&'a KernelTable>,
}

impl<'a> Kern<'a> {
    pub fn explicit(e: Explicit) -> Self {
        Self {
            explicit: Some(e),
            table: None,
        }
    }

    pub fn table(t: &'a KernelTable) -> Self {
        Self {
            explicit: None,
            table: Some(t),
        }
    }

    pub fn sum(e: Explicit, t: Option<&'a KernelTable>) -> Self {
        Self {
            explicit: Some(e),
            table: t,
        }
    }
}

impl Engine {
    #[inline]
    fn explicit_at(&self, e: Explicit, sl: &Slice, a: f64, theta_b: f64) -> f64 {
        match e {
            Explicit::P0 => self.p0(sl, a, theta_b),
            Explicit::Phi => self.phi(sl, a, theta_b),
        }
    }

    /// `∫₀^t ∫ L_{t−s}(a, z) R_s(z, b) dz ds`.
    pub(crate) fn convolve(&self, ctx: &Context, left: Kern, right: Kern, a: f64, b: f64, buf: &mut Vec<(f64, f64)>) -> f64 {
        let sides = self.has_tail_part();
        let mut feats: Vec<(f64, f64)> = Vec::with_capacity(6);
        let mut total = 0.0;
        for node in &ctx.nodes {
            for (sl_l, sl_r) in [(&node.far, &node.near), (&node.near, &node.far)] {
                let th_b = sl_r.theta(self, b);
                feats.clear();
                feats.push((sl_l.chi(self, a), sl_l.sigma));
                feats.push((th_b, sl_r.sigma));
                if sides {
                    feats.push((sl_l.chi(self, a - 1.0), sl_l.sigma));
                    feats.push((sl_l.chi(self, a + 1.0), sl_l.sigma));
                    feats.push((th_b - 1.0, sl_r.sigma));
                    feats.push((th_b + 1.0, sl_r.sigma));
                }
                self.zq.nodes(&feats, buf);
                let mut acc = 0.0;
                for &(z, w) in buf.iter() {
                    let mut l = 0.0;
                    if let Some(e) = left.explicit {
                        l += self.explicit_at(e, sl_l, a, sl_l.theta(self, z));
                    }
                    if let Some(t) = left.table {
                        l += t.eval(&self.env, sl_l.tau, z);
                    }
                    if l == 0.0 {
                        continue;
                    }
                    let mut r = 0.0;
                    if let Some(e) = right.explicit {
                        r += self.explicit_at(e, sl_r, z, th_b);
                    }
                    if let Some(t) = right.table {
                        r += t.eval(&self.env, sl_r.tau, z);
                    }
                    acc += w * l * r;
                }
                total += node.weight * acc;
            }
        }
        total
    }
}

/// A kernel `k_t(x, y)` that can be space-time convolved.
pub trait SpaceTimeKernel: Sync {
    fn eval(&self, t: f64, x: f64, y: f64) -> f64;
    /// Centre and width of `z ↦ k_t(x, z)`.
    fn forward_feature(&self, t: f64, x: f64) -> (f64, f64);
    /// Centre and width of `z ↦ k_t(z, y)`.
    fn backward_feature(&self, t: f64, y: f64) -> (f64, f64);
}

/// Quadrature settings for [`convolve_space_time`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvolutionRule {
    /// Gauss–Legendre nodes per half of `[0, t]`.
    pub s_nodes: usize,
    pub z_points: usize,
    /// Panel width in the sinh variable.
    pub z_panel: f64,
    /// Distance beyond the outermost feature covered in space.
    pub reach: f64,
}

impl Default for ConvolutionRule {
    fn default() -> Self {
        Self {
            s_nodes: 16,
            z_points: 8,
            z_panel: 0.5,
            reach: 1e5,
        }
    }
}

/// `∫ f_{t₁}(x, z) g_{t₂}(z, y) dz`.
pub fn spatial_convolution(f: &dyn SpaceTimeKernel, g: &dyn SpaceTimeKernel, t1: f64, t2: f64, x: f64, y: f64, rule: &ConvolutionRule) -> f64 {
    let q = FeatureQuadrature::new(rule.z_points, rule.z_panel, rule.reach);
    let mut nodes = Vec::new();
    q.nodes(&[f.forward_feature(t1, x), g.backward_feature(t2, y)], &mut nodes);
    nodes.iter().map(|&(z, w)| w * f.eval(t1, x, z) * g.eval(t2, z, y)).sum()
}

/// `(f ⋆ g)_t(x, y)` by the split form
/// `∫₀^{t/2} f_{t−s} ∗ g_s ds + ∫₀^{t/2} f_s ∗ g_{t−s} ds`.
pub fn convolve_space_time(f: &dyn SpaceTimeKernel, g: &dyn SpaceTimeKernel, t: f64, x: f64, y: f64, rule: &ConvolutionRule) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", "time must be positive and finite"));
    }
    let gl = GaussLegendre::new(rule.s_nodes);
    let mut total = 0.0;
    for (xn, wn) in gl.nodes.iter().zip(&gl.weights) {
        let v = 0.5 * (xn + 1.0);
        let s = 0.5 * t * v * v;
        let w = 0.5 * wn * t * v;
        total += w * (spatial_convolution(f, g, t - s, s, x, y, rule) + spatial_convolution(f, g, s, t - s, x, y, rule));
    }
    Ok(total)
}

/// `g^{(α)}_t(θ_t(y) − x)`: the stable density transported by the flows of
/// a drift.
pub struct FlowStableKernel<'a> {
    pub drift: DriftSpec,
    pub table: &'a StableTable,
}

impl SpaceTimeKernel for FlowStableKernel<'_> {
    fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        let th = flow_theta(&self.drift, y, t).unwrap_or(f64::NAN);
        self.table.density(t, th - x)
    }

    fn forward_feature(&self, t: f64, x: f64) -> (f64, f64) {
        (flow_chi(&self.drift, x, t).unwrap_or(x), self.table.params().spread(t))
    }

    fn backward_feature(&self, t: f64, y: f64) -> (f64, f64) {
        (flow_theta(&self.drift, y, t).unwrap_or(y), self.table.params().spread(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition_x::line_integral;
    use crate::stable::StableParams;

    fn table() -> StableTable {
        StableTable::new(&StableParams::new(0.75, 1.0, 1.0).unwrap()).unwrap()
    }

    fn tanh() -> DriftSpec {
        DriftSpec::Tanh { amp: 0.5, rate: 1.0 }
    }

    #[test]
    fn spatial_convolution_preserves_mass() {
        let g = table();
        let k = FlowStableKernel {
            drift: DriftSpec::zero(),
            table: &g,
        };
        let rule = ConvolutionRule::default();
        let (t1, t2, x) = (0.3, 0.2, 0.4);
        let ys: Vec<f64> = crate::numerics::SinhGrid::symmetric(x, 0.5, 1e5, 801).nodes();
        let vals: Vec<f64> = ys.iter().map(|&y| spatial_convolution(&k, &k, t1, t2, x, y, &rule)).collect();
        let mass = line_integral(&ys, &vals, x, Some(0.75));
        assert!((mass - 1.0).abs() < 1e-4, "{mass}");
        let y = 1.1;
        let exact = g.density(t1 + t2, y - x);
        assert!((spatial_convolution(&k, &k, t1, t2, x, y, &rule) - exact).abs() < 1e-6 * exact);
    }

    #[test]
    fn sub_convolution_constant_is_finite() {
        let g = table();
        let k = FlowStableKernel { drift: tanh(), table: &g };
        let rule = ConvolutionRule::default();
        let mut worst = 0.0f64;
        for (t, s) in [(1.0, 0.5), (0.1, 0.02), (0.5, 0.49)] {
            for y in [-30.0, -2.0, 0.0, 0.7, 3.0, 25.0] {
                let lhs = spatial_convolution(&k, &k, t - s, s, 0.3, y, &rule);
                worst = worst.max(lhs / k.eval(t, 0.3, y));
            }
        }
        assert!(worst.is_finite() && worst < 10.0, "{worst}");
    }

    struct Composite<'a> {
        left: &'a dyn SpaceTimeKernel,
        right: &'a dyn SpaceTimeKernel,
        rule: ConvolutionRule,
    }

    impl SpaceTimeKernel for Composite<'_> {
        fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
            convolve_space_time(self.left, self.right, t, x, y, &self.rule).unwrap()
        }
        fn forward_feature(&self, t: f64, x: f64) -> (f64, f64) {
            self.left.forward_feature(t, x)
        }
        fn backward_feature(&self, t: f64, y: f64) -> (f64, f64) {
            self.right.backward_feature(t, y)
        }
    }

    /// `g_t(y·e^{at} − x)`, the flow kernel of `b(x) = −ax` in closed form.
    struct LinearFlowKernel<'a> {
        a: f64,
        table: &'a StableTable,
    }

    impl SpaceTimeKernel for LinearFlowKernel<'_> {
        fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
            self.table.density(t, y * (self.a * t).exp() - x)
        }
        fn forward_feature(&self, t: f64, x: f64) -> (f64, f64) {
            (x * (-self.a * t).exp(), self.table.params().spread(t))
        }
        fn backward_feature(&self, t: f64, y: f64) -> (f64, f64) {
            (y * (self.a * t).exp(), self.table.params().spread(t))
        }
    }

    #[test]
    fn convolution_is_associative() {
        let g = table();
        let k = LinearFlowKernel { a: 0.5, table: &g };
        let rule = ConvolutionRule {
            s_nodes: 8,
            z_points: 4,
            z_panel: 1.0,
            reach: 200.0,
        };
        let kk = Composite {
            left: &k,
            right: &k,
            rule,
        };
        for (t, y) in [(0.6, 0.8), (1.0, -0.5)] {
            let a = convolve_space_time(&kk, &k, t, 0.2, y, &rule).unwrap();
            let b = convolve_space_time(&k, &kk, t, 0.2, y, &rule).unwrap();
            assert!((a - b).abs() < 2e-3 * a.abs(), "t {t} y {y}: {a} vs {b}");
        }
    }
}
