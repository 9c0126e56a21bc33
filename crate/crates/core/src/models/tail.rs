//! Jump measures of locally stable noise and their increment samplers.
//!
//! On `|u| < 1` the Lévy density is the stable one; on `|u| ≥ 1` it is the
//! stable density multiplied by a tail factor.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::stable::{StableParams, StableSampler};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailSpec {
    PureStable,
    /// Factor `e^{−λ(|u|−1)}` on `|u| ≥ 1`.
    Tempered { lambda: f64 },
    /// No jumps of size `≥ 1`.
    Truncated,
}

impl TailSpec {
    pub fn validate(&self) -> Result<()> {
        if let TailSpec::Tempered { lambda } = self {
            if !(*lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::invalid("lambda", "tempering rate must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Multiplier of the stable density at `|u| ≥ 1`; always in `[0, 1]`, so
    /// `m(u) ≤ 1·m^{(α,C±)}(u)` there.
    #[inline]
    pub fn factor(&self, abs_u: f64) -> f64 {
        match self {
            TailSpec::PureStable => 1.0,
            TailSpec::Tempered { lambda } => (-lambda * (abs_u - 1.0)).exp(),
            TailSpec::Truncated => 0.0,
        }
    }

    /// Constant `c_tail` with `m(u) ≤ c_tail·|u|^{−1−α}` on `|u| ≥ 1`,
    /// relative to the stable weights.
    pub fn c_tail(&self) -> f64 {
        match self {
            TailSpec::Truncated => 0.0,
            _ => 1.0,
        }
    }

    /// Lévy density `m(u)` of the noise.
    pub fn levy_density(&self, p: &StableParams, u: f64) -> f64 {
        let base = p.levy_density(u);
        if u.abs() >= 1.0 {
            base * self.factor(u.abs())
        } else {
            base
        }
    }

    /// `m(u) − m^{(α,C±)}(u)`; zero on `|u| < 1`.
    #[inline]
    pub fn levy_difference(&self, p: &StableParams, u: f64) -> f64 {
        if u.abs() < 1.0 {
            0.0
        } else {
            p.levy_density(u) * (self.factor(u.abs()) - 1.0)
        }
    }
}

/// Number of explicit small jumps per increment before the remainder is
/// replaced by its Gaussian moment match.
const SERIES_TERMS: usize = 14;

/// Sampler of noise increments over a time step.
#[derive(Debug, Clone)]
pub(crate) struct NoiseSampler {
    p: StableParams,
    tail: TailSpec,
    exact: Option<StableSampler>,
    /// Intensity of stable jumps with `|u| ≥ 1`: `scale·(C₊+C₋)/α`.
    kappa: f64,
    prob_plus: f64,
}

impl NoiseSampler {
    pub fn new(p: &StableParams, tail: TailSpec) -> Result<Self> {
        tail.validate()?;
        let exact = match tail {
            TailSpec::PureStable => Some(StableSampler::new(p)?),
            _ => {
                if p.alpha >= 1.0 {
                    return Err(Error::invalid("alpha", "tempered and truncated tails require alpha < 1"));
                }
                None
            }
        };
        let total = p.c_plus + p.c_minus;
        Ok(Self {
            p: *p,
            tail,
            exact,
            kappa: p.scale * total / p.alpha,
            prob_plus: if total > 0.0 { p.c_plus / total } else { 0.5 },
        })
    }

    #[inline]
    fn sign(&self, rng: &mut RngStream) -> f64 {
        if rng.uniform_open() < self.prob_plus {
            1.0
        } else {
            -1.0
        }
    }

    /// Increment of the noise over a step of length `dt`.
    pub fn increment(&self, dt: f64, rng: &mut RngStream) -> f64 {
        if let Some(s) = &self.exact {
            return s.sample(dt, rng);
        }
        self.small_jumps(dt, rng) + self.large_jumps(dt, rng)
    }

    /// Jumps with `|u| < 1`: the largest ones from the ordered series
    /// `u_i = (κ dt / Γ_i)^{1/α}` with `Γ_i > κ dt`, the rest by a Gaussian
    /// with matching mean and variance.
    fn small_jumps(&self, dt: f64, rng: &mut RngStream) -> f64 {
        let al = self.p.alpha;
        let kd = self.kappa * dt;
        let mut gamma = kd;
        let mut sum = 0.0;
        for _ in 0..SERIES_TERMS {
            gamma += rng.exp1();
            sum += self.sign(rng) * (kd / gamma).powf(1.0 / al);
        }
        let eps = (kd / gamma).powf(1.0 / al);
        let s = self.p.scale * dt;
        let mean = s * (self.p.c_plus - self.p.c_minus) * eps.powf(1.0 - al) / (1.0 - al);
        let var = s * (self.p.c_plus + self.p.c_minus) * eps.powf(2.0 - al) / (2.0 - al);
        sum + mean + var.sqrt() * rng.normal()
    }

    /// Jumps with `|u| ≥ 1`: stable Pareto jumps at rate `κ`, thinned by the
    /// tail factor.
    fn large_jumps(&self, dt: f64, rng: &mut RngStream) -> f64 {
        if self.tail == TailSpec::Truncated {
            return 0.0;
        }
        let k = rng.poisson(self.kappa * dt);
        let mut sum = 0.0;
        for _ in 0..k {
            let size = rng.uniform_open().powf(-1.0 / self.p.alpha);
            let sign = self.sign(rng);
            if rng.uniform_open() < self.tail.factor(size) {
                sum += sign * size;
            }
        }
        sum
    }
}
