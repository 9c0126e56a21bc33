//! Exact stable variates by the Chambers–Mallows–Stuck transform of a
//! uniform angle and a standard exponential.

use std::f64::consts::{FRAC_PI_2, PI};

use super::StableParams;
use crate::error::Result;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy)]
enum Kind {
    /// Standard deviation at `t = 1`.
    Gaussian(f64),
    /// Cauchy scale at `t = 1`.
    Cauchy(f64),
    /// Symmetric `α = 1/2`, closed-form transform.
    Half,
    General { shift: f64, amp: f64 },
}

/// Precomputed sampler for `Z_t` of a fixed law; `t` is supplied per draw.
#[derive(Debug, Clone, Copy)]
pub struct StableSampler {
    alpha: f64,
    /// Spread at `t = 1`: `σ^α = a`.
    sigma1: f64,
    kind: Kind,
}

impl StableSampler {
    pub fn new(p: &StableParams) -> Result<Self> {
        p.validate()?;
        let alpha = p.alpha;
        let (a, _) = p.exponent_coefficients();
        let sigma1 = a.powf(1.0 / alpha);
        let kind = if alpha == 2.0 {
            Kind::Gaussian((2.0 * a).sqrt())
        } else if alpha == 1.0 {
            Kind::Cauchy(a)
        } else if alpha == 0.5 && p.is_symmetric() {
            Kind::Half
        } else {
            let tan = (FRAC_PI_2 * alpha).tan();
            let beta = p.skewness();
            Kind::General {
                shift: (beta * tan).atan() / alpha,
                amp: (1.0 + beta * beta * tan * tan).powf(0.5 / alpha),
            }
        };
        Ok(Self { alpha, sigma1, kind })
    }

    /// One draw of `Z_t`.
    #[inline]
    pub fn sample(&self, t: f64, rng: &mut RngStream) -> f64 {
        match self.kind {
            Kind::Gaussian(sd) => sd * t.sqrt() * rng.normal(),
            Kind::Cauchy(scale) => scale * t * (PI * (rng.uniform_open() - 0.5)).tan(),
            Kind::Half => {
                let v = PI * (rng.uniform_open() - 0.5);
                let w = rng.exp1();
                let cv = v.cos();
                self.sigma1 * t * t * v.sin() / (2.0 * cv * cv * w)
            }
            Kind::General { shift, amp } => {
                let al = self.alpha;
                let v = PI * (rng.uniform_open() - 0.5);
                let w = rng.exp1();
                let arg = al * (v + shift);
                let x = amp * arg.sin() / v.cos().powf(1.0 / al) * ((v - arg).cos() / w).powf((1.0 - al) / al);
                self.sigma1 * t.powf(1.0 / al) * x
            }
        }
    }
}

/// One draw of `Z_t` for the law `p`.
pub fn sample_stable(p: &StableParams, t: f64, rng: &mut RngStream) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(crate::error::Error::invalid("t", format!("{t} must be positive and finite")));
    }
    Ok(StableSampler::new(p)?.sample(t, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Cauchy, ContinuousCDF};

    fn draws(p: &StableParams, t: f64, n: usize, seed: u64) -> Vec<f64> {
        let s = StableSampler::new(p).unwrap();
        let mut rng = RngStream::new(seed, 0);
        (0..n).map(|_| s.sample(t, &mut rng)).collect()
    }

    #[test]
    fn gaussian_variance() {
        let p = StableParams::canonical(2.0).unwrap();
        let n = 1_000_000;
        let xs = draws(&p, 1.0, n, 1);
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        // Var = 2, SE of the second moment = sqrt(2·var²/n).
        let se = (2.0 * 4.0 / n as f64).sqrt();
        assert!((var - 2.0).abs() < 3.0 * se, "var={var}");
    }

    #[test]
    fn cauchy_ks() {
        let p = StableParams::canonical(1.0).unwrap();
        let n = 100_000;
        let mut xs = draws(&p, 1.0, n, 2);
        xs.sort_by(f64::total_cmp);
        let cdf = Cauchy::new(0.0, 1.0).unwrap();
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let f = cdf.cdf(*x);
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.63 / (n as f64).sqrt(), "KS={d}");
    }

    #[test]
    fn self_similar_quantiles() {
        let p = StableParams::canonical(0.5).unwrap();
        let n = 200_000;
        let mut a = draws(&p, 16.0, n, 3);
        let mut b: Vec<f64> = draws(&p, 1.0, n, 4).into_iter().map(|x| 256.0 * x).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for q in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let i = (q * n as f64) as usize;
            let (qa, qb) = (a[i], b[i]);
            // Quantile CI via order statistics: compare against neighbours.
            let w = (3.0 * (q * (1.0 - q) * n as f64).sqrt()) as usize;
            let lo = b[i - w].min(a[i - w]);
            let hi = b[i + w].max(a[i + w]);
            assert!(qa >= lo && qa <= hi && qb >= lo && qb <= hi, "q={q}: {qa} vs {qb}");
        }
    }

    #[test]
    fn skewed_sign_balance() {
        // Totally skewed α < 1 is positive.
        let p = StableParams::new(0.6, 1.0, 0.0).unwrap();
        assert!(draws(&p, 1.0, 10_000, 5).iter().all(|x| *x > 0.0));
    }
}
