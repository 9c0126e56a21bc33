//! Density of `Z_t` and its first three spatial derivatives by Fourier
//! inversion.
//!
//! With `c = t·(a − ib)` the density derivatives are
//! `g^{(m)}(x) = (1/π) Re ∫₀^∞ (−iξ)^m exp(−cξ^α − iξx) dξ`.
//! Two routes evaluate this integral:
//!
//! * direct: integrate along the real axis (in `s = ξ^α` when `α ≤ 1`, which
//!   removes the cusp at the origin);
//! * rotated: for `α ≤ 1` and `x` in the tail, turn the contour onto
//!   `ξ = −ir`, giving `(1/π) Im ∫₀^∞ (−r)^m exp(−c e^{−iπα/2} r^α − rx) dr`,
//!   which has no oscillation in `x` and keeps relative accuracy far out.
//!
//! Negative `x` is handled by reflection: `−Z` has the conjugate exponent.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use statrs::function::gamma::gamma;

use super::StableParams;
use crate::error::{Error, Result};
use crate::numerics::{integrate, QuadSettings, QuadValue};

/// Orders 0..=3 integrated together.
#[derive(Debug, Clone, Copy, Default)]
struct Q4([Complex64; 4]);

impl Add for Q4 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Q4(std::array::from_fn(|i| self.0[i] + o.0[i]))
    }
}

impl Sub for Q4 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Q4(std::array::from_fn(|i| self.0[i] - o.0[i]))
    }
}

impl Mul<f64> for Q4 {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Q4(self.0.map(|v| v * k))
    }
}

impl QuadValue for Q4 {
    fn magnitude(self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

const SETTINGS: QuadSettings = QuadSettings {
    abs_tol: 1e-14,
    rel_tol: 1e-11,
    max_intervals: 60_000,
};

/// Largest tolerated growth `e^{κ}` of the rotated integrand before the
/// direct route is preferred.
const MAX_ROTATED_GROWTH: f64 = 6.0;

/// `g_t^{(m)}(x)` for `m ∈ {0, 1, 2}`.
pub fn stable_density(p: &StableParams, t: f64, x: f64, order: u8) -> Result<f64> {
    if order > 2 {
        return Err(Error::invalid("order", format!("{order} is not one of 0, 1, 2")));
    }
    Ok(stable_density_all(p, t, x)?[order as usize])
}

/// `[g_t, g_t', g_t'', g_t''']` at `x`.
pub fn stable_density_all(p: &StableParams, t: f64, x: f64) -> Result<[f64; 4]> {
    p.validate()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", format!("{t} must be positive and finite")));
    }
    if !x.is_finite() {
        return Err(Error::invalid("x", "must be finite"));
    }
    let (a, b) = p.exponent_coefficients();
    let c = Complex64::new(a, -b) * t;
    Ok(orders(c, p.alpha, x)?)
}

/// Density derivatives of the law with `E e^{iξZ} = exp(−c ξ^α)` for `ξ > 0`.
pub(crate) fn orders(c: Complex64, alpha: f64, x: f64) -> Result<[f64; 4]> {
    let modulus = c.norm();
    let sigma = modulus.powf(1.0 / alpha);
    let c1 = c / modulus;
    let z = x / sigma;
    let (c1, z, sign) = if z < 0.0 { (c1.conj(), -z, -1.0) } else { (c1, z, 1.0) };
    let g = if alpha <= 1.0 && z >= 1.0 {
        match rotated(c1, alpha, z)? {
            Some(v) => v,
            None => direct(c1, alpha, z)?,
        }
    } else if alpha > 1.0 && z >= 2.0 {
        tilted(c1, alpha, z)?
    } else {
        direct(c1, alpha, z)?
    };
    let mut out = [0.0; 4];
    let mut factor = 1.0 / sigma;
    let mut s = 1.0;
    for m in 0..4 {
        out[m] = s * g[m] * factor;
        factor /= sigma;
        s *= sign;
    }
    Ok(out)
}

/// Powers `(−iξ)^m`, `m = 0..3`.
#[inline]
fn neg_i_powers(xi: f64) -> [Complex64; 4] {
    [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, -xi),
        Complex64::new(-xi * xi, 0.0),
        Complex64::new(0.0, xi * xi * xi),
    ]
}

fn direct(c1: Complex64, alpha: f64, z: f64) -> Result<[f64; 4]> {
    let re = c1.re;
    // Frequency cutoff: the integrand (with ξ³ and the Jacobian) is below e^{-50}.
    let lead = 3.0 + (1.0 / alpha).max(1.0);
    let mut xi_max = (50.0 / re).powf(1.0 / alpha);
    for _ in 0..30 {
        xi_max = ((50.0 + lead * xi_max.max(1.0).ln()) / re).powf(1.0 / alpha);
    }
    let in_s = alpha <= 1.0;
    let to_var = |xi: f64| if in_s { xi.powf(alpha) } else { xi };
    let v_max = to_var(xi_max);

    let mut breaks: Vec<f64> = (0..=32).map(|k| v_max * k as f64 / 32.0).collect();
    // One break per half period of e^{−iξz}, and per half period of the
    // skewness phase `Im(c1)ξ^α`.
    let osc = (z * xi_max / PI).min(6000.0) as usize;
    for k in 1..osc {
        breaks.push(to_var(k as f64 * PI / z));
    }
    let im_phase = c1.im.abs() * xi_max.powf(alpha);
    let osc_im = (im_phase / PI).min(6000.0) as usize;
    for k in 1..osc_im {
        let xi = (k as f64 * PI / c1.im.abs()).powf(1.0 / alpha);
        breaks.push(to_var(xi));
    }
    finalize_breaks(&mut breaks, v_max);
    // Each order is normalized by `∫ ξ^m e^{−Re(c1)ξ^α} dξ` so one tolerance
    // fits all four components.
    let weight: [f64; 4] = std::array::from_fn(|m| {
        let k = (m as f64 + 1.0) / alpha;
        alpha * re.powf(k) / gamma(k)
    });

    let integrand = |v: f64| -> Q4 {
        let (xi, jac) = if in_s {
            if v == 0.0 {
                return Q4::default();
            }
            let xi = v.powf(1.0 / alpha);
            (xi, xi / (alpha * v))
        } else {
            (v, 1.0)
        };
        let e = (-c1 * xi.powf(alpha) - Complex64::new(0.0, xi * z)).exp() * jac;
        let pw = neg_i_powers(xi);
        Q4(std::array::from_fn(|m| pw[m] * e * weight[m]))
    };
    let (val, _) = integrate(integrand, &breaks, SETTINGS, "stable density inversion")?;
    Ok(std::array::from_fn(|m| val.0[m].re / (PI * weight[m])))
}

/// Rotated-contour evaluation for `z ≥ 1`; `None` when the integrand would
/// grow by more than `e^{MAX_ROTATED_GROWTH}` before decaying.
fn rotated(c1: Complex64, alpha: f64, z: f64) -> Result<Option<[f64; 4]>> {
    let cr = c1 * Complex64::from_polar(1.0, -0.5 * PI * alpha);
    let kappa = -cr.re;
    // In s = r^α the exponent is −Re(c')s − z s^{1/α}; its maximum is at s*.
    let mut s_peak = 0.0;
    if kappa > 0.0 {
        if alpha == 1.0 {
            if kappa >= z {
                return Ok(None);
            }
        } else {
            s_peak = (alpha * kappa / z).powf(alpha / (1.0 - alpha));
            if kappa * s_peak * (1.0 - alpha) > MAX_ROTATED_GROWTH {
                return Ok(None);
            }
        }
    }
    let s0 = z.powf(-alpha);
    let expo = |s: f64| -cr.re * s - z * s.powf(1.0 / alpha);
    let poly = 4.0 / alpha;
    let mut s_max = s0.max(s_peak);
    while expo(s_max) + poly * (s_max / s0).max(1.0).ln() > -50.0 {
        s_max *= 1.5;
    }

    let mut breaks: Vec<f64> = (0..=32).map(|k| s_max * k as f64 / 32.0).collect();
    let mut g = s0 * 1e-3;
    while g < s_max {
        breaks.push(g);
        g *= 2.0;
    }
    let osc = (cr.im.abs() * s_max / PI).min(6000.0) as usize;
    for k in 1..osc {
        breaks.push(k as f64 * PI / cr.im.abs());
    }
    finalize_breaks(&mut breaks, s_max);
    // Natural size of order m is `∫ r^m e^{−zr} dr = m!/z^{m+1}`; the true
    // value is smaller still, so tolerances become relative.
    let weight: [f64; 4] = [z, z * z, 0.5 * z.powi(3), z.powi(4) / 6.0];

    let integrand = |s: f64| -> Q4 {
        if s == 0.0 {
            return Q4::default();
        }
        let r = s.powf(1.0 / alpha);
        let jac = r / (alpha * s);
        let e = (-cr * s - z * r).exp() * jac;
        Q4([e * weight[0], e * (-r * weight[1]), e * (r * r * weight[2]), e * (-r * r * r * weight[3])])
    };
    let (val, _) = integrate(integrand, &breaks, SETTINGS, "stable density inversion (rotated)")?;
    Ok(Some(std::array::from_fn(|m| val.0[m].im / (PI * weight[m]))))
}

/// Contour `ξ = r e^{−iθ}` for `α > 1`, `z > 0`: both `e^{−c ξ^α}` and
/// `e^{−iξz}` decay along it, so the integrand is damped rather than purely
/// oscillatory.
fn tilted(c1: Complex64, alpha: f64, z: f64) -> Result<[f64; 4]> {
    let theta = (0.5 * (0.5 * PI + c1.arg()) / alpha).min(0.25 * PI);
    let rot = Complex64::from_polar(1.0, -theta);
    let ca = c1 * Complex64::from_polar(1.0, -alpha * theta);
    let damp = z * theta.sin();
    let freq = z * theta.cos();
    let expo = |r: f64| -ca.re * r.powf(alpha) - damp * r + 4.0 * r.max(1.0).ln();
    let mut r_max = 1.0 / damp;
    while expo(r_max) > -50.0 {
        r_max *= 1.5;
    }
    let mut breaks: Vec<f64> = (0..=32).map(|k| r_max * k as f64 / 32.0).collect();
    let osc = (freq * r_max / PI).min(6000.0) as usize;
    for k in 1..osc {
        breaks.push(k as f64 * PI / freq);
    }
    finalize_breaks(&mut breaks, r_max);
    // Natural size of order m is about `m!/damp^{m+1}`.
    let weight: [f64; 4] = [damp, damp.powi(2), 0.5 * damp.powi(3), damp.powi(4) / 6.0];
    let integrand = |r: f64| -> Q4 {
        let xi = rot * r;
        let e = (-ca * r.powf(alpha) - Complex64::new(0.0, z) * xi).exp() * rot;
        let mi = Complex64::new(0.0, -1.0) * xi;
        let pw = [Complex64::new(1.0, 0.0), mi, mi * mi, mi * mi * mi];
        Q4(std::array::from_fn(|m| pw[m] * e * weight[m]))
    };
    let (val, _) = integrate(integrand, &breaks, SETTINGS, "stable density inversion (tilted)")?;
    Ok(std::array::from_fn(|m| val.0[m].re / (PI * weight[m])))
}

fn finalize_breaks(breaks: &mut Vec<f64>, upper: f64) {
    breaks.retain(|b| *b >= 0.0 && *b <= upper);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * upper);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cauchy(x: f64) -> f64 {
        1.0 / (PI * (1.0 + x * x))
    }

    #[test]
    fn cauchy_center() {
        let p = StableParams::canonical(1.0).unwrap();
        assert!((stable_density(&p, 1.0, 0.0, 0).unwrap() - 1.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn cauchy_everywhere_and_derivatives() {
        let p = StableParams::canonical(1.0).unwrap();
        for x in [-300.0, -5.0, -1.0, -0.3, 0.0, 0.7, 1.0, 2.5, 40.0, 1e4] {
            let g = stable_density_all(&p, 1.0, x).unwrap();
            assert_relative_eq!(g[0], cauchy(x), max_relative = 1e-9);
            let d1 = -2.0 * x / (PI * (1.0 + x * x).powi(2));
            assert!((g[1] - d1).abs() <= 1e-9 * d1.abs().max(1e-6), "x={x} {} {}", g[1], d1);
            let d2 = (6.0 * x * x - 2.0) / (PI * (1.0 + x * x).powi(3));
            assert!((g[2] - d2).abs() <= 1e-9 * d2.abs().max(1e-6), "x={x}");
        }
    }

    #[test]
    fn gaussian_endpoint() {
        // ψ = ξ², so Z_t ~ N(0, 2t).
        let p = StableParams::canonical(2.0).unwrap();
        for (t, x) in [(1.0f64, 0.0f64), (1.0, 1.3), (0.5, -2.0), (3.0, 4.0)] {
            let v = 2.0 * t;
            let exact = (-x * x / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
            let g = stable_density_all(&p, t, x).unwrap();
            assert!((g[0] - exact).abs() < 1e-12);
            assert!((g[1] + x / v * exact).abs() < 1e-12);
            assert!((g[2] - (x * x / (v * v) - 1.0 / v) * exact).abs() < 1e-12);
        }
    }

    #[test]
    fn odd_derivative_vanishes_for_symmetric_law() {
        let p = StableParams::new(0.6, 1.0, 1.0).unwrap();
        for t in [0.1, 1.0, 7.0] {
            assert!(stable_density(&p, t, 0.0, 1).unwrap().abs() < 1e-10);
        }
    }

    /// Routes agree where both apply.
    #[test]
    fn direct_and_rotated_agree() {
        for (alpha, cp, cm) in [(0.5, 1.0, 1.0), (0.75, 1.0, 0.3), (0.4, 0.2, 1.0), (1.0, 1.0, 1.0)] {
            let p = StableParams::new(alpha, cp, cm).unwrap();
            let (a, b) = p.exponent_coefficients();
            let c = Complex64::new(a, -b);
            let modulus = c.norm();
            let c1 = c / modulus;
            for z in [1.0, 2.0, 5.0] {
                if let Some(r) = rotated(c1, alpha, z).unwrap() {
                    let d = direct(c1, alpha, z).unwrap();
                    for m in 0..4 {
                        // Tolerance relative to the order's natural size, which
                        // bounds the cancellation in either route.
                        let k = (m as f64 + 1.0) / alpha;
                        let scale = gamma(k) / (alpha * c1.re.powf(k) * PI);
                        assert!((r[m] - d[m]).abs() < 1e-10 * scale, "alpha={alpha} z={z} m={m}: {} vs {}", r[m], d[m]);
                    }
                }
            }
        }
    }

    #[test]
    fn direct_and_tilted_agree() {
        for (alpha, cp, cm) in [(1.5, 1.0, 1.0), (1.2, 1.0, 0.2), (1.8, 0.3, 1.0)] {
            let p = StableParams::new(alpha, cp, cm).unwrap();
            let (a, b) = p.exponent_coefficients();
            let c = Complex64::new(a, -b);
            let c1 = c / c.norm();
            for z in [2.0, 3.5, 8.0] {
                let r = tilted(c1, alpha, z).unwrap();
                let d = direct(c1, alpha, z).unwrap();
                for m in 0..4 {
                    let k = (m as f64 + 1.0) / alpha;
                    let scale = gamma(k) / (alpha * c1.re.powf(k) * PI);
                    assert!((r[m] - d[m]).abs() < 1e-10 * scale, "alpha={alpha} z={z} m={m}: {} vs {}", r[m], d[m]);
                }
            }
        }
    }

    #[test]
    fn tilted_far_tail_matches_power_law() {
        let p = StableParams::new(1.5, 1.0, 0.5).unwrap();
        for x in [3e3, -3e3] {
            let g = stable_density(&p, 1.0, x, 0).unwrap();
            assert!((g / p.levy_density(x) - 1.0).abs() < 1e-3, "x={x}");
        }
    }

    /// Independent oracle: plain trapezoid inversion on a fine uniform grid,
    /// repeated at double resolution.
    #[test]
    fn trapezoid_oracle_alpha_half() {
        let p = StableParams::new(0.5, 1.0, 1.0).unwrap();
        let (a, _) = p.exponent_coefficients();
        let x = 3.0;
        let trap = |h: f64| {
            // Integrate in s = ξ^{1/2}: ξ = s², dξ = 2s ds, e^{−a s} decay.
            let n = (60.0 / a / h) as usize;
            let mut sum = 0.0;
            for k in 1..=n {
                let s = k as f64 * h;
                let xi = s * s;
                sum += (-a * s).exp() * (xi * x).cos() * 2.0 * s;
            }
            sum * h / PI
        };
        let coarse = trap(2e-4);
        let fine = trap(1e-4);
        assert!((coarse - fine).abs() < 1e-7);
        let g = stable_density(&p, 1.0, x, 0).unwrap();
        assert!((g - fine).abs() < 1e-6, "{g} vs {fine}");
    }

    #[test]
    fn scaling_relation() {
        let p = StableParams::new(0.7, 1.0, 0.4).unwrap();
        for (t, x) in [(0.01, 0.05), (4.0, -3.0), (0.3, 10.0)] {
            let lhs = stable_density(&p, t, x, 0).unwrap();
            let k = t.powf(-1.0 / 0.7);
            let rhs = k * stable_density(&p, 1.0, x * k, 0).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-8);
        }
    }

    #[test]
    fn totally_skewed_support() {
        // α < 1 and no negative jumps: supported on [0, ∞).
        let p = StableParams::new(0.5, 1.0, 0.0).unwrap();
        let v = stable_density(&p, 1.0, -0.5, 0).unwrap();
        assert!(v.abs() < 1e-12, "{v}");
        assert!(stable_density(&p, 1.0, 15.0, 0).unwrap() > 0.005);
    }

    #[test]
    fn reflection() {
        let p = StableParams::new(0.8, 1.0, 0.2).unwrap();
        let q = p.mirrored();
        for x in [0.3, 2.0, 9.0] {
            let a = stable_density_all(&p, 1.0, x).unwrap();
            let b = stable_density_all(&q, 1.0, -x).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-12);
            assert!((a[1] + b[1]).abs() < 1e-12);
            assert!((a[2] - b[2]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_order_and_time() {
        let p = StableParams::canonical(1.0).unwrap();
        assert!(stable_density(&p, 1.0, 0.0, 3).is_err());
        assert!(stable_density(&p, 0.0, 0.0, 0).is_err());
    }
}
