//! α-stable laws: parameters, characteristic exponent, exact sampling,
//! density evaluation by Fourier inversion and density-domination checks.
//!
//! Parametrization: the Lévy density is `C₊ u^{-1-α}` on `u > 0` and
//! `C₋ |u|^{-1-α}` on `u < 0`, multiplied by `scale`. For `α < 1` the
//! exponent is the uncompensated `ψ(ξ) = ∫(1 − e^{iξu}) μ(du)`; for
//! `1 < α < 2` the compensated form is used (zero mean). Both evaluate to
//!
//! ```text
//! ψ(ξ) = |ξ|^α (a − i·sgn(ξ)·b),
//! a = scale·Γ(1−α)/α·(C₊+C₋)·cos(πα/2),  b = scale·Γ(1−α)/α·(C₊−C₋)·sin(πα/2).
//! ```
//!
//! `α = 1` is admitted only symmetric (`a = scale·π/2·(C₊+C₋)`), and `α = 2`
//! is the Gaussian endpoint with `ψ(ξ) = scale·ξ²` (the `C±` are ignored).
//! [`StableParams::canonical`] picks `C±` so that `ψ(ξ) = |ξ|^α`.

mod density;
mod domination;
mod sample;
mod table;

pub use density::{stable_density, stable_density_all};
pub use domination::{check_density_domination, DominationReport};
pub use sample::{sample_stable, StableSampler};
pub use table::StableTable;

use std::f64::consts::PI;

use num_complex::Complex64;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Parameters of a (possibly skewed) α-stable law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    pub alpha: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub scale: f64,
}

impl StableParams {
    pub fn new(alpha: f64, c_plus: f64, c_minus: f64) -> Result<Self> {
        let p = Self {
            alpha,
            c_plus,
            c_minus,
            scale: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Symmetric law with `ψ(ξ) = |ξ|^α`.
    pub fn canonical(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::invalid("alpha", format!("{alpha} is outside (0, 2]")));
        }
        let c = canonical_weight(alpha);
        Self::new(alpha, c, c)
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        self.scale = scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.alpha;
        if !(a > 0.0 && a <= 2.0) {
            return Err(Error::invalid("alpha", format!("{a} is outside (0, 2]")));
        }
        if !(self.c_plus >= 0.0 && self.c_plus.is_finite()) {
            return Err(Error::invalid("c_plus", "must be finite and nonnegative"));
        }
        if !(self.c_minus >= 0.0 && self.c_minus.is_finite()) {
            return Err(Error::invalid("c_minus", "must be finite and nonnegative"));
        }
        if a < 2.0 && self.c_plus + self.c_minus <= 0.0 {
            return Err(Error::invalid("c_plus", "c_plus + c_minus must be positive for alpha < 2"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid("scale", "must be finite and positive"));
        }
        if a == 1.0 && self.c_plus != self.c_minus {
            return Err(Error::invalid(
                "alpha",
                "alpha = 1 is supported only for symmetric weights (the skewed exponent diverges)",
            ));
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        self.alpha == 2.0 || self.c_plus == self.c_minus
    }

    /// Skewness `(C₊ − C₋)/(C₊ + C₋)`.
    pub fn skewness(&self) -> f64 {
        if self.alpha == 2.0 {
            0.0
        } else {
            (self.c_plus - self.c_minus) / (self.c_plus + self.c_minus)
        }
    }

    /// Symmetric law with the same total jump weight; used as the dominating
    /// reference `g^(α)` when checking skewed densities.
    pub fn symmetric_companion(&self) -> Self {
        let c = 0.5 * (self.c_plus + self.c_minus);
        Self {
            c_plus: c,
            c_minus: c,
            ..*self
        }
    }

    /// Law of `−Z`.
    pub fn mirrored(&self) -> Self {
        Self {
            c_plus: self.c_minus,
            c_minus: self.c_plus,
            ..*self
        }
    }

    /// `(a, b)` with `ψ(ξ) = |ξ|^α (a − i·sgn(ξ)·b)`.
    pub fn exponent_coefficients(&self) -> (f64, f64) {
        let al = self.alpha;
        if al == 2.0 {
            return (self.scale, 0.0);
        }
        if al == 1.0 {
            return (self.scale * 0.5 * PI * (self.c_plus + self.c_minus), 0.0);
        }
        let k = gamma(1.0 - al) / al * self.scale;
        let half = 0.5 * PI * al;
        (
            k * (self.c_plus + self.c_minus) * half.cos(),
            k * (self.c_plus - self.c_minus) * half.sin(),
        )
    }

    /// Spread of `Z_t`: `|t·(a − ib)|^{1/α}`.
    pub fn spread(&self, t: f64) -> f64 {
        let (a, b) = self.exponent_coefficients();
        (t * a.hypot(b)).powf(1.0 / self.alpha)
    }

    /// Lévy density `m^(α,C±)(u)` (zero for the Gaussian endpoint).
    pub fn levy_density(&self, u: f64) -> f64 {
        if self.alpha == 2.0 || u == 0.0 {
            return 0.0;
        }
        let c = if u > 0.0 { self.c_plus } else { self.c_minus };
        self.scale * c * u.abs().powf(-1.0 - self.alpha)
    }
}

/// `C` for which the symmetric weights `C₊ = C₋ = C` give `ψ(ξ) = |ξ|^α`.
pub fn canonical_weight(alpha: f64) -> f64 {
    if alpha == 2.0 {
        0.0
    } else if alpha == 1.0 {
        1.0 / PI
    } else {
        alpha / (2.0 * gamma(1.0 - alpha) * (0.5 * PI * alpha).cos())
    }
}

/// Characteristic exponent `ψ(ξ)` with `E e^{iξZ_t} = e^{−tψ(ξ)}`.
pub fn char_exponent(p: &StableParams, xi: f64) -> Complex64 {
    if xi == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let (a, b) = p.exponent_coefficients();
    let m = xi.abs().powf(p.alpha);
    Complex64::new(a * m, -xi.signum() * b * m)
}
