//! Quadrature, interpolation and regression helpers shared by the density,
//! rate and parametrix code.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values that can be integrated by the adaptive Gauss–Kronrod rule.
pub trait QuadValue: Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn magnitude(self) -> f64;
}

impl QuadValue for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<T: QuadValue, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> (T, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron = kron + s * WGK[j];
        if j % 2 == 1 {
            gauss = gauss + s * WG[j / 2];
        }
    }
    let kron = kron * h;
    let gauss = gauss * h;
    (kron, (kron - gauss).magnitude())
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Segment<T> {}
impl<T> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Settings for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_intervals: 20_000,
        }
    }
}

/// Adaptive Gauss–Kronrod (7/15) integration over the given breakpoints.
///
/// `breaks` must be ascending with at least two entries; every interval is
/// seeded as its own segment, which is how callers hand the integrator prior
/// knowledge about oscillation or kinks.
pub fn integrate<T, F>(mut f: F, breaks: &[f64], settings: QuadSettings, what: &'static str) -> Result<(T, f64)>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    debug_assert!(breaks.len() >= 2);
    let mut heap = BinaryHeap::with_capacity(breaks.len() * 2);
    let mut total = T::default();
    let mut err = 0.0;
    for w in breaks.windows(2) {
        let (v, e) = gk15(&mut f, w[0], w[1]);
        total = total + v;
        err += e;
        heap.push(Segment {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    while err > settings.abs_tol.max(settings.rel_tol * total.magnitude()) {
        if heap.len() >= settings.max_intervals {
            return Err(Error::Quadrature {
                what,
                error: err,
                intervals: heap.len(),
            });
        }
        let seg = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Interval cannot be split further in floating point.
            return Err(Error::Quadrature {
                what,
                error: err,
                intervals: heap.len(),
            });
        }
        let (v1, e1) = gk15(&mut f, seg.a, mid);
        let (v2, e2) = gk15(&mut f, mid, seg.b);
        total = total - seg.value + v1 + v2;
        err += e1 + e2 - seg.error;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
    }
    // Re-sum to shed the drift accumulated by incremental updates.
    let mut sum = T::default();
    let mut e = 0.0;
    for s in heap.iter() {
        sum = sum + s.value;
        e += s.error;
    }
    Ok((sum, e))
}

/// Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrate a smooth function over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(c + h * x);
        }
        s * h
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Neumaier-compensated running sum. Summation order is the caller's, so
/// results are reproducible as long as the order is.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = CompensatedSum::default();
    for x in it {
        s.add(x);
    }
    s.value()
}

/// Sample mean and unbiased variance with compensated accumulation.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0);
    (mean, var)
}

/// Composite Simpson rule on a non-uniform grid; a trailing odd interval
/// gets the trapezoid rule.
pub fn simpson_nonuniform(x: &[f64], f: &[f64]) -> f64 {
    let n = x.len().min(f.len());
    if n < 2 {
        return 0.0;
    }
    let mut acc = CompensatedSum::default();
    let mut i = 0;
    while i + 2 < n {
        let (h0, h1) = (x[i + 1] - x[i], x[i + 2] - x[i + 1]);
        let s = h0 + h1;
        acc.add(s / 6.0 * ((2.0 - h1 / h0) * f[i] + s * s / (h0 * h1) * f[i + 1] + (2.0 - h0 / h1) * f[i + 2]));
        i += 2;
    }
    if i + 1 < n {
        acc.add(0.5 * (x[i + 1] - x[i]) * (f[i] + f[i + 1]));
    }
    acc.value()
}

/// Ordinary least squares for `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (0 for an exact fit or two points).
    pub slope_se: f64,
    pub points: usize,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "line fit needs at least two paired points, got {}",
            xs.len().min(ys.len())
        )));
    }
    let n = xs.len() as f64;
    let mx = compensated_sum(xs.iter().copied()) / n;
    let my = compensated_sum(ys.iter().copied()) / n;
    let sxx = compensated_sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    let sxy = compensated_sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    if sxx == 0.0 {
        return Err(Error::InsufficientData("line fit with identical abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if xs.len() > 2 {
        let rss = compensated_sum(xs.iter().zip(ys).map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        }));
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_se,
        points: xs.len(),
    })
}

/// Power-law tail model `f(r) ≈ Σ_k A_k r^{-e_k}` for `r` beyond the last
/// sampled point, fitted by least squares on the outermost decade of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTail {
    pub exponents: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub start: f64,
}

impl PowerTail {
    /// `r` are positive distances (ascending), `f` the sampled values.
    /// Exponents must all exceed 1 so the tail is integrable.
    pub fn fit(r: &[f64], f: &[f64], exponents: &[f64]) -> Self {
        let start = *r.last().unwrap_or(&0.0);
        let mut pts: Vec<(f64, f64)> = r
            .iter()
            .zip(f)
            .filter(|(&ri, _)| ri >= 0.1 * start && ri > 0.0)
            .map(|(&ri, &fi)| (ri, fi))
            .collect();
        if pts.is_empty() || start <= 0.0 {
            return Self {
                exponents: exponents.to_vec(),
                coefficients: vec![0.0; exponents.len()],
                start,
            };
        }
        // Use as many terms as the sample can support, then fall back to a
        // single-term fit when the normal equations are ill-conditioned.
        let k = exponents.len().min(pts.len());
        if k >= 2 {
            if let Some(c) = lstsq_power(&pts, &exponents[..k]) {
                let mut coefficients = c;
                coefficients.resize(exponents.len(), 0.0);
                return Self {
                    exponents: exponents.to_vec(),
                    coefficients,
                    start,
                };
            }
        }
        pts.truncate(pts.len());
        let c = lstsq_power(&pts, &exponents[..1]).unwrap_or_else(|| vec![0.0]);
        let mut coefficients = c;
        coefficients.resize(exponents.len(), 0.0);
        Self {
            exponents: exponents.to_vec(),
            coefficients,
            start,
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.exponents
            .iter()
            .zip(&self.coefficients)
            .map(|(e, a)| a * r.powf(-e))
            .sum()
    }

    /// ∫_start^∞ of the fitted tail.
    pub fn integral(&self) -> f64 {
        if self.start <= 0.0 {
            return 0.0;
        }
        self.exponents
            .iter()
            .zip(&self.coefficients)
            .map(|(e, a)| a * self.start.powf(1.0 - e) / (e - 1.0))
            .sum()
    }
}

fn lstsq_power(pts: &[(f64, f64)], exps: &[f64]) -> Option<Vec<f64>> {
    let k = exps.len();
    // Scale basis functions by their value at the reference radius so the
    // normal equations are well conditioned.
    let r0 = pts.last()?.0;
    let mut ata = vec![vec![0.0; k]; k];
    let mut atb = vec![0.0; k];
    for &(r, f) in pts {
        let basis: Vec<f64> = exps.iter().map(|e| (r / r0).powf(-e)).collect();
        for i in 0..k {
            atb[i] += basis[i] * f;
            for j in 0..k {
                ata[i][j] += basis[i] * basis[j];
            }
        }
    }
    let sol = solve_dense(ata, atb)?;
    let out: Vec<f64> = sol.iter().zip(exps).map(|(c, e)| c * r0.powf(*e)).collect();
    if out.iter().all(|c| c.is_finite()) {
        Some(out)
    } else {
        None
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-13 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= factor * a[col][c];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for c in row + 1..n {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Uniform grid in `u` mapped to `z = center + scale * sinh(u)`.
///
/// Resolves a feature of width `scale` at `center` and keeps a constant
/// relative spacing far away, which suits power-law tails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinhGrid {
    pub center: f64,
    pub scale: f64,
    pub u_max: f64,
    pub n: usize,
}

impl SinhGrid {
    /// Symmetric grid with `n` (odd) nodes reaching `center ± reach`.
    pub fn symmetric(center: f64, scale: f64, reach: f64, n: usize) -> Self {
        assert!(n >= 5 && scale > 0.0 && reach > 0.0);
        Self {
            center,
            scale,
            u_max: (reach / scale).asinh(),
            n,
        }
    }

    pub fn du(&self) -> f64 {
        2.0 * self.u_max / (self.n - 1) as f64
    }

    pub fn u(&self, j: usize) -> f64 {
        -self.u_max + j as f64 * self.du()
    }

    pub fn node(&self, j: usize) -> f64 {
        self.center + self.scale * self.u(j).sinh()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    pub fn to_u(&self, z: f64) -> f64 {
        ((z - self.center) / self.scale).asinh()
    }

    /// Trapezoid weights in `u` translated to `z`: `∫ f dz ≈ Σ w_j f(z_j)`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let du = self.du();
        (0..self.n)
            .map(|j| {
                let end = if j == 0 || j == self.n - 1 { 0.5 } else { 1.0 };
                end * du * self.scale * self.u(j).cosh()
            })
            .collect()
    }

    /// Cubic Lagrange interpolation in `u` of values given on the nodes.
    /// Returns `None` outside the grid.
    pub fn interpolate(&self, values: &[f64], z: f64) -> Option<f64> {
        let u = self.to_u(z);
        let du = self.du();
        let pos = (u + self.u_max) / du;
        if !(pos >= 0.0 && pos <= (self.n - 1) as f64) {
            return None;
        }
        Some(lagrange4(values, pos))
    }
}

/// Four-point Lagrange interpolation at fractional index `pos` of an
/// equally spaced sample.
#[inline]
pub fn lagrange4(values: &[f64], pos: f64) -> f64 {
    let n = values.len();
    if n == 1 {
        return values[0];
    }
    let i = (pos.floor() as usize).min(n - 2);
    if n < 4 {
        let t = pos - i as f64;
        return values[i] * (1.0 - t) + values[i + 1] * t;
    }
    let i0 = i.saturating_sub(1).min(n - 4);
    let t = pos - i0 as f64;
    let (y0, y1, y2, y3) = (values[i0], values[i0 + 1], values[i0 + 2], values[i0 + 3]);
    let l0 = -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0;
    let l1 = t * (t - 2.0) * (t - 3.0) / 2.0;
    let l2 = -t * (t - 1.0) * (t - 3.0) / 2.0;
    let l3 = t * (t - 1.0) * (t - 2.0) / 6.0;
    y0 * l0 + y1 * l1 + y2 * l2 + y3 * l3
}

/// Cubic Hermite interpolation on `[0, h]` from values and slopes at the ends.
#[inline]
pub fn hermite(y0: f64, d0: f64, y1: f64, d1: f64, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Quadrature nodes on the real line adapted to a set of localized features.
///
/// Each feature `(center, scale)` gets a sinh-graded mesh resolving width
/// `scale` around `center`; neighbouring features meet at their midpoint and
/// the outer rays extend `reach` beyond the extreme centers. Every graded
/// piece is integrated with Gauss–Legendre panels of width `panel` in the
/// sinh variable.
#[derive(Debug, Clone)]
pub struct FeatureQuadrature {
    gl: GaussLegendre,
    panel: f64,
    reach: f64,
}

impl FeatureQuadrature {
    pub fn new(points_per_panel: usize, panel: f64, reach: f64) -> Self {
        Self {
            gl: GaussLegendre::new(points_per_panel),
            panel,
            reach,
        }
    }

    pub fn reach(&self) -> f64 {
        self.reach
    }

    /// Append `(node, weight)` pairs for the given features to `out`.
    pub fn nodes(&self, features: &[(f64, f64)], out: &mut Vec<(f64, f64)>) {
        out.clear();
        let mut feats: Vec<(f64, f64)> = features
            .iter()
            .copied()
            .filter(|(c, s)| c.is_finite() && *s > 0.0)
            .collect();
        feats.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Merge features that sit on top of each other.
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(feats.len());
        for f in feats {
            if let Some(last) = merged.last_mut() {
                if (f.0 - last.0).abs() <= 1e-3 * last.1.min(f.1) {
                    last.1 = last.1.min(f.1);
                    continue;
                }
            }
            merged.push(f);
        }
        if merged.is_empty() {
            return;
        }
        let first = merged[0];
        self.graded(first.0, first.1, -self.reach, out);
        for w in merged.windows(2) {
            let (c0, s0) = w[0];
            let (c1, s1) = w[1];
            let mid = 0.5 * (c0 + c1);
            self.graded(c0, s0, mid - c0, out);
            self.graded(c1, s1, mid - c1, out);
        }
        let last = *merged.last().unwrap();
        self.graded(last.0, last.1, self.reach, out);
    }

    fn graded(&self, center: f64, scale: f64, length: f64, out: &mut Vec<(f64, f64)>) {
        let sign = length.signum();
        let u_end = (length.abs() / scale).asinh();
        if u_end <= 0.0 {
            return;
        }
        let panels = (u_end / self.panel).ceil().max(1.0) as usize;
        let width = u_end / panels as f64;
        for p in 0..panels {
            let a = p as f64 * width;
            let c = a + 0.5 * width;
            let h = 0.5 * width;
            for (x, w) in self.gl.nodes.iter().zip(&self.gl.weights) {
                let u = c + h * x;
                let z = center + sign * scale * u.sinh();
                out.push((z, w * h * scale * u.cosh()));
            }
        }
    }
}
