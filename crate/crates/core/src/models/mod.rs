//! Markov process models sampled on uniform time grids.
//!
//! Lévy models (Brownian motion, stable, stable with drift) have exact
//! independent increments. The locally stable SDE `dX = b(X)dt + dZ` is
//! advanced by an Euler scheme with `euler_substeps` internal steps per
//! grid cell; only the grid states are exposed.

mod drift;
mod tail;

pub use drift::{flow_chi, flow_equivalence, flow_theta, CustomDrift, DriftSpec};
pub use tail::TailSpec;
pub(crate) use tail::NoiseSampler;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::stable::{StableParams, StableSampler};

/// Default number of Euler sub-steps per exposed grid cell.
pub const DEFAULT_EULER_SUBSTEPS: usize = 8;

#[derive(Debug, Clone)]
pub enum ProcessModel {
    /// `X_t = x0 + W(2·diffusion·t)`: increments are `N(0, 2·diffusion·dt)`,
    /// matching the `α = 2` stable law `exp(−diffusion·ξ²)`.
    BrownianMotion { diffusion: f64 },
    StableProcess(StableParams),
    /// `X_t = x0 + c·t + Z_t`.
    StableWithDrift { p: StableParams, c: f64 },
    LocallyStableSde {
        drift: DriftSpec,
        p: StableParams,
        tail: TailSpec,
        euler_substeps: usize,
    },
}

impl ProcessModel {
    pub fn locally_stable(drift: DriftSpec, p: StableParams, tail: TailSpec) -> Self {
        ProcessModel::LocallyStableSde {
            drift,
            p,
            tail,
            euler_substeps: DEFAULT_EULER_SUBSTEPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ProcessModel::BrownianMotion { diffusion } => {
                if !(*diffusion > 0.0 && diffusion.is_finite()) {
                    return Err(Error::invalid("diffusion", "must be positive and finite"));
                }
            }
            ProcessModel::StableProcess(p) => p.validate()?,
            ProcessModel::StableWithDrift { p, c } => {
                p.validate()?;
                if !c.is_finite() {
                    return Err(Error::invalid("c", "drift must be finite"));
                }
            }
            ProcessModel::LocallyStableSde {
                drift,
                p,
                tail,
                euler_substeps,
            } => {
                p.validate()?;
                if !(p.alpha < 1.0) {
                    return Err(Error::invalid("alpha", "the locally stable SDE requires alpha in (0, 1)"));
                }
                drift.validate(true)?;
                tail.validate()?;
                if *euler_substeps == 0 {
                    return Err(Error::invalid("euler_substeps", "must be at least 1"));
                }
            }
        }
        Ok(())
    }

    /// Stability index of the noise (2 for Brownian motion).
    pub fn alpha(&self) -> f64 {
        match self {
            ProcessModel::BrownianMotion { .. } => 2.0,
            ProcessModel::StableProcess(p) | ProcessModel::StableWithDrift { p, .. } | ProcessModel::LocallyStableSde { p, .. } => p.alpha,
        }
    }

    /// Largest `λ` with `E e^{λX_T} < ∞` (`∞` when every moment exists, `0`
    /// when none does). Only positive jumps matter; a bounded drift and
    /// the small-jump part never break exponential integrability.
    pub fn exponential_moment_limit(&self) -> f64 {
        match self {
            ProcessModel::BrownianMotion { .. } => f64::INFINITY,
            ProcessModel::StableProcess(_) | ProcessModel::StableWithDrift { .. } => 0.0,
            ProcessModel::LocallyStableSde { p, tail, .. } => match tail {
                _ if p.c_plus == 0.0 => f64::INFINITY,
                TailSpec::PureStable => 0.0,
                // Tail e^{−λ_t(u−1)}u^{−1−α}: e^{λu} stays integrable up to λ = λ_t.
                TailSpec::Tempered { lambda } => *lambda,
                TailSpec::Truncated => f64::INFINITY,
            },
        }
    }
}

/// One trajectory on the uniform grid `kT/n`, `k = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    pub t_final: f64,
    pub n_steps: usize,
    pub x0: f64,
    pub states: Vec<f64>,
}

impl PathGrid {
    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    /// Restriction to the coarse grid with `n_coarse` cells.
    pub fn thin(&self, n_coarse: usize) -> Result<PathGrid> {
        if n_coarse == 0 || self.n_steps % n_coarse != 0 {
            return Err(Error::Divisibility {
                fine: self.n_steps,
                coarse: n_coarse,
            });
        }
        let stride = self.n_steps / n_coarse;
        Ok(PathGrid {
            t_final: self.t_final,
            n_steps: n_coarse,
            x0: self.x0,
            states: self.states.iter().step_by(stride).copied().collect(),
        })
    }
}

#[derive(Debug, Clone)]
enum Stepper {
    Gaussian { sd_rate: f64 },
    Stable { sampler: StableSampler, c: f64 },
    Sde { drift: DriftSpec, noise: NoiseSampler, substeps: usize },
}

/// Reusable simulator for one model; construction validates the model and
/// precomputes sampler constants.
#[derive(Debug, Clone)]
pub struct PathSimulator {
    stepper: Stepper,
}

impl PathSimulator {
    pub fn new(model: &ProcessModel) -> Result<Self> {
        model.validate()?;
        let stepper = match model {
            ProcessModel::BrownianMotion { diffusion } => Stepper::Gaussian {
                sd_rate: (2.0 * diffusion).sqrt(),
            },
            ProcessModel::StableProcess(p) => Stepper::Stable {
                sampler: StableSampler::new(p)?,
                c: 0.0,
            },
            ProcessModel::StableWithDrift { p, c } => Stepper::Stable {
                sampler: StableSampler::new(p)?,
                c: *c,
            },
            ProcessModel::LocallyStableSde {
                drift,
                p,
                tail,
                euler_substeps,
            } => Stepper::Sde {
                drift: drift.clone(),
                noise: NoiseSampler::new(p, *tail)?,
                substeps: *euler_substeps,
            },
        };
        Ok(Self { stepper })
    }

    /// Fill `out` (length `n + 1`) with the grid states of one path.
    pub fn fill(&self, x0: f64, t_final: f64, rng: &mut RngStream, out: &mut [f64]) -> Result<()> {
        if out.len() < 2 {
            return Err(Error::invalid("n", "at least one step is required"));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::invalid("T", format!("{t_final} must be positive and finite")));
        }
        let n = out.len() - 1;
        let dt = t_final / n as f64;
        out[0] = x0;
        let mut x = x0;
        match &self.stepper {
            Stepper::Gaussian { sd_rate } => {
                let sd = sd_rate * dt.sqrt();
                for o in out[1..].iter_mut() {
                    x += sd * rng.normal();
                    *o = x;
                }
            }
            Stepper::Stable { sampler, c } => {
                for o in out[1..].iter_mut() {
                    x += c * dt + sampler.sample(dt, rng);
                    *o = x;
                }
            }
            Stepper::Sde { drift, noise, substeps } => {
                let h = dt / *substeps as f64;
                for o in out[1..].iter_mut() {
                    for _ in 0..*substeps {
                        x += drift.eval(x) * h + noise.increment(h, rng);
                    }
                    *o = x;
                }
            }
        }
        Ok(())
    }
}

/// Simulate one path of `model` on the grid `kT/n`.
pub fn simulate_grid(model: &ProcessModel, x0: f64, t_final: f64, n: usize, rng: &mut RngStream) -> Result<PathGrid> {
    if n == 0 {
        return Err(Error::invalid("n", "at least one step is required"));
    }
    let sim = PathSimulator::new(model)?;
    let mut states = vec![0.0; n + 1];
    sim.fill(x0, t_final, rng, &mut states)?;
    Ok(PathGrid {
        t_final,
        n_steps: n,
        x0,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Cauchy, ContinuousCDF};

    #[test]
    fn rejects_degenerate_grids() {
        let m = ProcessModel::BrownianMotion { diffusion: 1.0 };
        let mut r = RngStream::new(0, 0);
        assert!(simulate_grid(&m, 0.0, 1.0, 0, &mut r).is_err());
        assert!(simulate_grid(&m, 0.0, 0.0, 4, &mut r).is_err());
        assert!(simulate_grid(&m, 0.0, -1.0, 4, &mut r).is_err());
    }

    #[test]
    fn brownian_terminal_variance() {
        let m = ProcessModel::BrownianMotion { diffusion: 1.0 };
        let sim = PathSimulator::new(&m).unwrap();
        let paths = 100_000;
        let mut buf = vec![0.0; 17];
        let mut s2 = 0.0;
        let mut s4 = 0.0;
        for i in 0..paths {
            let mut r = RngStream::for_path(5, i);
            sim.fill(0.0, 1.0, &mut r, &mut buf).unwrap();
            let x = buf[16];
            s2 += x * x;
            s4 += x * x * x * x;
        }
        let var = s2 / paths as f64;
        let se = ((s4 / paths as f64 - var * var) / paths as f64).sqrt();
        assert!((var - 2.0).abs() < 3.0 * se, "var={var} se={se}");
    }

    #[test]
    fn single_cauchy_step() {
        let p = StableParams::canonical(1.0).unwrap();
        let m = ProcessModel::StableWithDrift { p, c: 0.0 };
        let n = 50_000;
        let t: f64 = 2.0;
        let mut xs: Vec<f64> = (0..n)
            .map(|i| {
                let mut r = RngStream::for_path(9, i);
                simulate_grid(&m, 0.0, t, 1, &mut r).unwrap().states[1]
            })
            .collect();
        xs.sort_by(f64::total_cmp);
        let cdf = Cauchy::new(0.0, t).unwrap();
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, x)| (cdf.cdf(*x) - (i as f64 + 0.5) / n as f64).abs())
            .fold(0.0, f64::max);
        assert!(d < 1.63 / (n as f64).sqrt(), "KS {d}");
    }

    #[test]
    fn driftless_pure_sde_matches_stable_process() {
        let p = StableParams::new(0.7, 1.0, 1.0).unwrap();
        let sde = ProcessModel::locally_stable(DriftSpec::zero(), p, TailSpec::PureStable);
        let lev = ProcessModel::StableProcess(p);
        let n = 20_000;
        let draw = |m: &ProcessModel, seed: u64| {
            let sim = PathSimulator::new(m).unwrap();
            let mut buf = vec![0.0; 5];
            let mut v: Vec<f64> = (0..n)
                .map(|i| {
                    let mut r = RngStream::for_path(seed, i);
                    sim.fill(0.0, 1.0, &mut r, &mut buf).unwrap();
                    buf[4]
                })
                .collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let d = tail::tests::ks_two_sample(&draw(&sde, 1), &draw(&lev, 2));
        assert!(d < 1.63 * (2.0 / n as f64).sqrt(), "KS {d}");
    }

    #[test]
    fn increments_are_uncorrelated() {
        let m = ProcessModel::BrownianMotion { diffusion: 0.5 };
        let mut r = RngStream::new(4, 0);
        let path = simulate_grid(&m, 0.0, 1.0, 100_000, &mut r).unwrap();
        let inc: Vec<f64> = path.states.windows(2).map(|w| w[1] - w[0]).collect();
        let n = inc.len() - 1;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for k in 0..n {
            sxy += inc[k] * inc[k + 1];
            sxx += inc[k] * inc[k];
        }
        let rho = sxy / sxx;
        assert!(rho.abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn reproducible_and_thinning() {
        let m = ProcessModel::locally_stable(
            DriftSpec::Tanh { amp: 0.5, rate: 1.0 },
            StableParams::new(0.75, 1.0, 1.0).unwrap(),
            TailSpec::Tempered { lambda: 1.0 },
        );
        let a = simulate_grid(&m, 0.3, 1.0, 16, &mut RngStream::for_path(1, 7)).unwrap();
        let b = simulate_grid(&m, 0.3, 1.0, 16, &mut RngStream::for_path(1, 7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.states[0], 0.3);
        let c = a.thin(4).unwrap();
        assert_eq!(c.states, vec![a.states[0], a.states[4], a.states[8], a.states[12], a.states[16]]);
        assert!(a.thin(5).is_err());
    }

    #[test]
    fn exponential_moment_limits() {
        let p = StableParams::new(0.75, 1.0, 1.0).unwrap();
        assert_eq!(ProcessModel::BrownianMotion { diffusion: 1.0 }.exponential_moment_limit(), f64::INFINITY);
        assert_eq!(ProcessModel::StableWithDrift { p, c: 1.0 }.exponential_moment_limit(), 0.0);
        let sde = |tail| ProcessModel::locally_stable(DriftSpec::zero(), p, tail);
        assert_eq!(sde(TailSpec::Tempered { lambda: 3.0 }).exponential_moment_limit(), 3.0);
        assert_eq!(sde(TailSpec::Truncated).exponential_moment_limit(), f64::INFINITY);
        assert_eq!(sde(TailSpec::PureStable).exponential_moment_limit(), 0.0);
        let neg = StableParams::new(0.75, 0.0, 1.0).unwrap();
        let m = ProcessModel::locally_stable(DriftSpec::zero(), neg, TailSpec::PureStable);
        assert_eq!(m.exponential_moment_limit(), f64::INFINITY);
    }

    #[test]
    fn sde_validation() {
        let p = StableParams::new(1.5, 1.0, 1.0).unwrap();
        let m = ProcessModel::locally_stable(DriftSpec::zero(), p, TailSpec::PureStable);
        assert!(m.validate().is_err());
    }
}
