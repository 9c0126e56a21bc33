//! Kernels tabulated on a log time grid with per-time sinh grids in the
//! free spatial variable.
//!
//! Values are stored as ratios to `τ^power·(g_{τ+1} + g_τ)(z − c_τ)`, which
//! keeps them of order one across peaks, tails and small times. Lookups use
//! cubic Lagrange interpolation in the sinh variable and in `log τ`.

use crate::numerics::lagrange4;
use crate::stable::StableTable;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub label: String,
    /// Ascending, log-spaced.
    pub taus: Vec<f64>,
    /// Grid centre `c_τ` per time.
    pub centers: Vec<f64>,
    /// Grid scale per time.
    pub scales: Vec<f64>,
    ln_scales: Vec<f64>,
    /// Step of the sinh variable, shared by all times.
    pub du: f64,
    /// Node `j` of time `i` is `c_i + scale_i·sinh((j − half_i)·du)`.
    pub half: Vec<usize>,
    pub power: i32,
    /// Half-width of the tabulated range around each centre.
    pub extent: f64,
    pub ratios: Vec<Vec<f64>>,
}

impl KernelTable {
    pub(crate) fn empty(label: &str, taus: &[f64], centers: Vec<f64>, scales: Vec<f64>, du: f64, extent: f64, power: i32) -> Self {
        let half = scales
            .iter()
            .map(|s| ((extent / s).asinh() / du).ceil() as usize)
            .collect::<Vec<_>>();
        let ratios = half.iter().map(|h| vec![0.0; 2 * h + 1]).collect();
        Self {
            label: label.to_string(),
            taus: taus.to_vec(),
            centers,
            ln_scales: scales.iter().map(|s| s.ln()).collect(),
            scales,
            du,
            half,
            power,
            extent,
            ratios,
        }
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        let u = (j as f64 - self.half[i] as f64) * self.du;
        self.centers[i] + self.scales[i] * u.sinh()
    }

    pub fn nodes(&self, i: usize) -> Vec<f64> {
        (0..self.ratios[i].len()).map(|j| self.node(i, j)).collect()
    }

    /// Number of stored values.
    pub fn cells(&self) -> usize {
        self.ratios.iter().map(Vec::len).sum()
    }

    #[inline]
    pub(crate) fn normalizer(&self, env: &StableTable, tau: f64, w: f64) -> f64 {
        tau.powi(self.power) * super::super::envelope(env, tau, w)
    }

    /// Kernel values at time index `i`.
    pub fn values(&self, env: &StableTable, i: usize) -> Vec<f64> {
        let tau = self.taus[i];
        (0..self.ratios[i].len())
            .map(|j| self.ratios[i][j] * self.normalizer(env, tau, self.node(i, j) - self.centers[i]))
            .collect()
    }

    pub(crate) fn set(&mut self, env: &StableTable, i: usize, values: &[f64]) {
        let tau = self.taus[i];
        for (j, v) in values.iter().enumerate() {
            let n = self.normalizer(env, tau, self.node(i, j) - self.centers[i]);
            self.ratios[i][j] = if n > 0.0 { v / n } else { 0.0 };
        }
    }

    /// Add `other` (same grids) into this table.
    pub(crate) fn accumulate(&mut self, other: &KernelTable) {
        for (i, tau) in self.taus.iter().enumerate() {
            let f = tau.powi(other.power - self.power);
            for (a, b) in self.ratios[i].iter_mut().zip(&other.ratios[i]) {
                *a += f * b;
            }
        }
    }

    #[inline]
    fn log_pos(&self, tau: f64) -> f64 {
        let n = self.taus.len();
        if n < 2 {
            return 0.0;
        }
        let l0 = self.taus[0].ln();
        (tau.ln() - l0) / ((self.taus[n - 1].ln() - l0) / (n - 1) as f64)
    }

    /// Interpolated value at `(τ, z)`: zero before the first time and
    /// beyond the spatial extent.
    pub fn eval(&self, env: &StableTable, tau: f64, z: f64) -> f64 {
        let n = self.taus.len();
        if n == 0 || tau < self.taus[0] {
            return 0.0;
        }
        let pos = self.log_pos(tau).min(n as f64 - 0.5);
        let center = lagrange4(&self.centers, pos);
        let scale = lagrange4(&self.ln_scales, pos).exp();
        if (z - center).abs() > self.extent {
            return 0.0;
        }
        let u = ((z - center) / scale).asinh();
        let i = (pos.floor() as usize).min(n.saturating_sub(2));
        let (lo, width) = if n < 4 {
            (0, n)
        } else {
            (i.saturating_sub(1).min(n - 4), 4)
        };
        let mut ring = [0.0; 4];
        for (k, slot) in ring.iter_mut().enumerate().take(width) {
            let idx = lo + k;
            let h = self.half[idx] as f64;
            let p = u / self.du + h;
            // Neighbouring levels reach slightly different ranges of u.
            *slot = lagrange4(&self.ratios[idx], p.clamp(0.0, 2.0 * h));
        }
        let r = lagrange4(&ring[..width], pos - lo as f64);
        r * self.normalizer(env, tau, z - center)
    }
}
