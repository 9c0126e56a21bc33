//! Drift coefficients and their deterministic flows `χ_t` (forward) and
//! `θ_t` (time-reversed).

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A user-supplied drift with declared regularity constants.
#[derive(Clone)]
pub struct CustomDrift {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub lipschitz: f64,
    pub sup_norm: f64,
}

impl fmt::Debug for CustomDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDrift")
            .field("name", &self.name)
            .field("lipschitz", &self.lipschitz)
            .field("sup_norm", &self.sup_norm)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum DriftSpec {
    /// `b(x) = clamp(a·x + bias, −bound, bound)`; `bound = ∞` disables clipping.
    Linear { a: f64, bias: f64, bound: f64 },
    /// `b(x) = amp·tanh(rate·x)`.
    Tanh { amp: f64, rate: f64 },
    Custom(CustomDrift),
}

impl DriftSpec {
    pub fn zero() -> Self {
        DriftSpec::Linear {
            a: 0.0,
            bias: 0.0,
            bound: f64::INFINITY,
        }
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static, lipschitz: f64, sup_norm: f64) -> Self {
        DriftSpec::Custom(CustomDrift {
            name: name.into(),
            f: Arc::new(f),
            lipschitz,
            sup_norm,
        })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            DriftSpec::Linear { a, bias, bound } => (a * x + bias).clamp(-bound, *bound),
            DriftSpec::Tanh { amp, rate } => amp * (rate * x).tanh(),
            DriftSpec::Custom(c) => (c.f)(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            DriftSpec::Linear { a, bias, .. } => *a == 0.0 && *bias == 0.0,
            DriftSpec::Tanh { amp, rate } => *amp == 0.0 || *rate == 0.0,
            DriftSpec::Custom(_) => false,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            DriftSpec::Linear { a, .. } => a.abs(),
            DriftSpec::Tanh { amp, rate } => (amp * rate).abs(),
            DriftSpec::Custom(c) => c.lipschitz,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            DriftSpec::Linear { a, bias, bound } => {
                if *a == 0.0 {
                    bias.abs().min(*bound)
                } else {
                    *bound
                }
            }
            DriftSpec::Tanh { amp, .. } => amp.abs(),
            DriftSpec::Custom(c) => c.sup_norm,
        }
    }

    /// Checks the declared constants on a sample grid (finite values, sup
    /// norm and difference quotients within 1% of the declared bounds).
    pub fn validate(&self, require_bounded: bool) -> Result<()> {
        match self {
            DriftSpec::Linear { a, bias, bound } => {
                if !a.is_finite() || !bias.is_finite() || bound.is_nan() || *bound <= 0.0 {
                    return Err(Error::invalid("drift", "linear drift needs finite a, bias and a positive bound"));
                }
            }
            DriftSpec::Tanh { amp, rate } => {
                if !amp.is_finite() || !rate.is_finite() {
                    return Err(Error::invalid("drift", "tanh drift needs finite amp and rate"));
                }
            }
            DriftSpec::Custom(c) => {
                if !(c.lipschitz >= 0.0 && c.lipschitz.is_finite() && c.sup_norm >= 0.0) {
                    return Err(Error::invalid("drift", "custom drift needs finite declared constants"));
                }
            }
        }
        if require_bounded && !self.sup_norm().is_finite() {
            return Err(Error::invalid("drift", "must be bounded (set a finite clipping bound)"));
        }
        let (sup, lip) = (self.sup_norm(), self.lipschitz());
        let xs: Vec<f64> = (-400..=400).map(|k| k as f64 * 0.05).collect();
        let mut prev: Option<(f64, f64)> = None;
        for &x in &xs {
            let v = self.eval(x);
            if !v.is_finite() {
                return Err(Error::invalid("drift", format!("not finite at x = {x}")));
            }
            if sup.is_finite() && v.abs() > sup * 1.01 + 1e-12 {
                return Err(Error::invalid("drift", format!("|b({x})| = {} exceeds the declared sup norm {sup}", v.abs())));
            }
            if let Some((px, pv)) = prev {
                let q = (v - pv).abs() / (x - px);
                if q > lip * 1.01 + 1e-9 {
                    return Err(Error::invalid("drift", format!("difference quotient {q} near x = {x} exceeds the declared Lipschitz constant {lip}")));
                }
            }
            prev = Some((x, v));
        }
        Ok(())
    }
}

const FLOW_TOL: f64 = 1e-13;

/// Solve `dz/ds = sign·b(z)`, `z(0) = x`, up to `s = t` by classical RK4
/// with step doubling.
fn flow(b: &DriftSpec, x: f64, t: f64, sign: f64) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", format!("{t} must be finite and nonnegative")));
    }
    if t == 0.0 || b.is_zero() {
        return Ok(x);
    }
    let f = |z: f64| sign * b.eval(z);
    let rk4 = |z: f64, h: f64| {
        let k1 = f(z);
        let k2 = f(z + 0.5 * h * k1);
        let k3 = f(z + 0.5 * h * k2);
        let k4 = f(z + h * k3);
        z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let mut s = 0.0;
    let mut z = x;
    let lip = b.lipschitz().max(1e-3);
    let mut h = (0.1 / lip).min(t);
    let mut steps = 0usize;
    while s < t {
        if s + h > t {
            h = t - s;
        }
        let full = rk4(z, h);
        let half = rk4(rk4(z, 0.5 * h), 0.5 * h);
        let err = (half - full).abs() / 15.0;
        let tol = FLOW_TOL * (1.0 + half.abs());
        if err <= tol || h < 1e-12 * t.max(1.0) {
            s += h;
            z = half + (half - full) / 15.0;
            let grow = if err > 0.0 { 0.9 * (tol / err).powf(0.2) } else { 4.0 };
            h *= grow.clamp(0.2, 4.0);
        } else {
            h *= (0.9 * (tol / err).powf(0.2)).clamp(0.1, 0.9);
        }
        steps += 1;
        if steps > 1_000_000 {
            return Err(Error::invalid("t", "flow integration exceeded its step budget"));
        }
    }
    Ok(z)
}

/// `χ_t(x)`: `dχ/dt = b(χ)`, `χ_0 = x`.
pub fn flow_chi(b: &DriftSpec, x: f64, t: f64) -> Result<f64> {
    flow(b, x, t, 1.0)
}

/// `θ_t(y)`: `dθ/dt = −b(θ)`, `θ_0 = y`.
pub fn flow_theta(b: &DriftSpec, y: f64, t: f64) -> Result<f64> {
    flow(b, y, t, -1.0)
}

/// Empirical constants `c ≤ |χ_t(x) − y| / |θ_t(y) − x| ≤ C` over a grid,
/// skipping pairs whose denominator is below `1e-9`.
pub fn flow_equivalence(b: &DriftSpec, ts: &[f64], xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &t in ts {
        for &x in xs {
            let chi = flow_chi(b, x, t)?;
            for &y in ys {
                let th = flow_theta(b, y, t)?;
                let den = (th - x).abs();
                if den < 1e-9 {
                    continue;
                }
                let r = (chi - y).abs() / den;
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
    }
    if !lo.is_finite() {
        return Err(Error::InsufficientData("no grid pair with separated flow values".into()));
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn neg_identity() -> DriftSpec {
        DriftSpec::Linear {
            a: -1.0,
            bias: 0.0,
            bound: f64::INFINITY,
        }
    }

    #[test]
    fn linear_closed_forms() {
        let b = neg_identity();
        for (x, t) in [(1.0f64, 1.0f64), (-3.0, 0.25), (2.0, 5.0)] {
            assert_relative_eq!(flow_chi(&b, x, t).unwrap(), x * (-t).exp(), max_relative = 1e-9);
            assert_relative_eq!(flow_theta(&b, x, t).unwrap(), x * t.exp(), max_relative = 1e-9);
        }
    }

    #[test]
    fn zero_drift_is_identity() {
        assert_eq!(flow_chi(&DriftSpec::zero(), 1.7, 3.0).unwrap(), 1.7);
    }

    /// Refinement oracle: an independent fixed-step RK4 with 10^5 steps.
    #[test]
    fn tanh_against_fine_fixed_step() {
        let b = DriftSpec::Tanh { amp: 1.0, rate: 1.0 };
        let n = 100_000;
        let h = 1.0 / n as f64;
        let mut z: f64 = 1.0;
        for _ in 0..n {
            let k1 = z.tanh();
            let k2 = (z + 0.5 * h * k1).tanh();
            let k3 = (z + 0.5 * h * k2).tanh();
            let k4 = (z + h * k3).tanh();
            z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert_relative_eq!(flow_chi(&b, 1.0, 1.0).unwrap(), z, max_relative = 1e-10);
        // Exact: sinh(χ) = sinh(x)·e^t.
        assert_relative_eq!(z, (1f64.sinh() * 1f64.exp()).asinh(), max_relative = 1e-12);
    }

    #[test]
    fn flow_equivalence_constants_are_positive_and_finite() {
        let b = DriftSpec::Tanh { amp: 0.5, rate: 1.0 };
        let grid: Vec<f64> = (-10..=10).map(|k| k as f64 * 0.7).collect();
        let (c, cc) = flow_equivalence(&b, &[0.1, 0.5, 1.0], &grid, &grid).unwrap();
        assert!(c > 0.0 && cc < f64::INFINITY && c <= cc);
        // For a Lipschitz drift both constants lie within e^{±Lt}.
        assert!(c >= (-0.5f64).exp() - 1e-9 && cc <= 0.5f64.exp() + 1e-9, "{c} {cc}");
    }

    #[test]
    fn validation_catches_wrong_declarations() {
        let bad = DriftSpec::custom("steep", |x: f64| (3.0 * x).tanh(), 1.0, 1.0);
        assert!(bad.validate(true).is_err());
        let ok = DriftSpec::custom("tanh", |x: f64| x.tanh(), 1.0, 1.0);
        assert!(ok.validate(true).is_ok());
        assert!(neg_identity().validate(true).is_err());
    }

    proptest! {
        #[test]
        fn flows_are_inverse(y in -20.0f64..20.0, t in 0.0f64..3.0, amp in -1.0f64..1.0) {
            let b = DriftSpec::Tanh { amp, rate: 1.3 };
            let back = flow_chi(&b, flow_theta(&b, y, t).unwrap(), t).unwrap();
            prop_assert!((back - y).abs() < 1e-8);
        }
    }
}
