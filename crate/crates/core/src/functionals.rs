//! Integral functionals `I_T(h) = ∫₀ᵀ h(X_t) dt` and their left-endpoint
//! Riemann sums `I_{T,n}(h) = (T/n) Σ_{k<n} h(X_{kT/n})`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::models::{PathGrid, PathSimulator, ProcessModel};
use crate::numerics::CompensatedSum;
use crate::rng::RngStream;

/// A bounded function of the state.
#[derive(Clone)]
pub enum FunctionalSpec {
    /// `𝕀{x ≤ level}`; `level = +∞` gives `h ≡ 1`.
    IndicatorBelow { level: f64 },
    /// `𝕀{lo ≤ x ≤ hi}`.
    IndicatorInterval { lo: f64, hi: f64 },
    /// `ρ·𝕀{x ≤ level}`.
    ScaledIndicator { rho: f64, level: f64 },
    BoundedSmooth {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        sup_norm: f64,
    },
}

impl fmt::Debug for FunctionalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionalSpec::IndicatorBelow { level } => write!(f, "IndicatorBelow({level})"),
            FunctionalSpec::IndicatorInterval { lo, hi } => write!(f, "IndicatorInterval({lo}, {hi})"),
            FunctionalSpec::ScaledIndicator { rho, level } => write!(f, "ScaledIndicator({rho}, {level})"),
            FunctionalSpec::BoundedSmooth { name, sup_norm, .. } => write!(f, "BoundedSmooth({name}, sup {sup_norm})"),
        }
    }
}

impl FunctionalSpec {
    pub fn one() -> Self {
        FunctionalSpec::IndicatorBelow { level: f64::INFINITY }
    }

    pub fn smooth(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static, sup_norm: f64) -> Self {
        FunctionalSpec::BoundedSmooth {
            name: name.into(),
            f: Arc::new(f),
            sup_norm,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            FunctionalSpec::IndicatorBelow { level } => (x <= *level) as u8 as f64,
            FunctionalSpec::IndicatorInterval { lo, hi } => (x >= *lo && x <= *hi) as u8 as f64,
            FunctionalSpec::ScaledIndicator { rho, level } => {
                if x <= *level {
                    *rho
                } else {
                    0.0
                }
            }
            FunctionalSpec::BoundedSmooth { f, .. } => f(x),
        }
    }

    /// `‖h‖ = sup |h|` (declared for `BoundedSmooth`).
    pub fn sup_norm(&self) -> f64 {
        match self {
            FunctionalSpec::IndicatorBelow { level } => {
                if *level == f64::NEG_INFINITY {
                    0.0
                } else {
                    1.0
                }
            }
            FunctionalSpec::IndicatorInterval { lo, hi } => {
                if lo <= hi {
                    1.0
                } else {
                    0.0
                }
            }
            FunctionalSpec::ScaledIndicator { rho, .. } => rho.abs(),
            FunctionalSpec::BoundedSmooth { sup_norm, .. } => *sup_norm,
        }
    }

    /// True when `h` is the same constant everywhere (so every error
    /// vanishes exactly).
    pub fn is_constant(&self) -> bool {
        match self {
            FunctionalSpec::IndicatorBelow { level } => level.is_infinite(),
            FunctionalSpec::IndicatorInterval { lo, hi } => (lo.is_infinite() && hi.is_infinite() && lo < hi) || lo > hi,
            FunctionalSpec::ScaledIndicator { rho, level } => *rho == 0.0 || level.is_infinite(),
            FunctionalSpec::BoundedSmooth { .. } => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            FunctionalSpec::IndicatorBelow { level } => !level.is_nan(),
            FunctionalSpec::IndicatorInterval { lo, hi } => !lo.is_nan() && !hi.is_nan(),
            FunctionalSpec::ScaledIndicator { rho, level } => *rho >= 0.0 && rho.is_finite() && !level.is_nan(),
            FunctionalSpec::BoundedSmooth { sup_norm, .. } => *sup_norm >= 0.0 && sup_norm.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("h", format!("{self:?} is not a valid bounded function")))
        }
    }
}

/// `(T/n)·Σ_{k<n} v[k·stride]` over precomputed values `v = h(X)` on the
/// fine grid.
pub(crate) fn strided_sum(values: &[f64], stride: usize, t_final: f64) -> f64 {
    let mut s = CompensatedSum::default();
    let mut count = 0usize;
    for v in values.iter().step_by(stride) {
        s.add(*v);
        count += 1;
    }
    t_final / count as f64 * s.value()
}

/// `I_{T,n}(h)` on the path's own grid; the final node is excluded.
pub fn riemann_functional(path: &PathGrid, h: &FunctionalSpec) -> f64 {
    let n = path.n_steps;
    let vals: Vec<f64> = path.states[..n].iter().map(|x| h.eval(*x)).collect();
    strided_sum(&vals, 1, path.t_final)
}

/// Reference value `I_{T,n_ref}(h)` of one simulated fine path, returned with
/// the path itself. `coarse` lists the grids the path will be compared with.
pub fn reference_functional(
    model: &ProcessModel,
    x0: f64,
    t_final: f64,
    h: &FunctionalSpec,
    n_ref: usize,
    coarse: &[usize],
    rng: &mut RngStream,
) -> Result<(f64, PathGrid)> {
    for &n in coarse {
        if n == 0 || n_ref % n != 0 {
            return Err(Error::Divisibility { fine: n_ref, coarse: n });
        }
    }
    let path = crate::models::simulate_grid(model, x0, t_final, n_ref, rng)?;
    Ok((riemann_functional(&path, h), path))
}

/// `J = I_{T,n_ref}(h) − I_{T,n}(h)` with both sums taken on the same fine
/// path.
pub fn path_error(fine: &PathGrid, h: &FunctionalSpec, n_coarse: usize) -> Result<f64> {
    if n_coarse == 0 || fine.n_steps % n_coarse != 0 {
        return Err(Error::Divisibility {
            fine: fine.n_steps,
            coarse: n_coarse,
        });
    }
    let n = fine.n_steps;
    let vals: Vec<f64> = fine.states[..n].iter().map(|x| h.eval(*x)).collect();
    Ok(strided_sum(&vals, 1, fine.t_final) - strided_sum(&vals, n / n_coarse, fine.t_final))
}

/// Reusable per-path buffers for coupled evaluation of many coarse grids.
#[derive(Debug, Clone)]
pub(crate) struct CoupledPath {
    pub states: Vec<f64>,
    pub hvals: Vec<f64>,
}

impl CoupledPath {
    pub fn new(n_ref: usize) -> Self {
        Self {
            states: vec![0.0; n_ref + 1],
            hvals: vec![0.0; n_ref],
        }
    }

    /// Simulate, then tabulate `h` on the fine grid (final node excluded).
    pub fn run(&mut self, sim: &PathSimulator, x0: f64, t_final: f64, h: &FunctionalSpec, rng: &mut RngStream) -> Result<()> {
        sim.fill(x0, t_final, rng, &mut self.states)?;
        let n = self.hvals.len();
        for (v, x) in self.hvals.iter_mut().zip(&self.states[..n]) {
            *v = h.eval(*x);
        }
        Ok(())
    }

    pub fn terminal(&self) -> f64 {
        *self.states.last().expect("non-empty path")
    }

    /// `I_{T,n}(h)` for a grid `n` dividing the fine resolution.
    pub fn functional(&self, n: usize, t_final: f64) -> f64 {
        strided_sum(&self.hvals, self.hvals.len() / n, t_final)
    }
}
