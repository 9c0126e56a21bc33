//! Monte Carlo pricing of the down-and-out call occupation-time option
//! `e^{−rT} E[exp(−ρ·time{S ≤ L}) (S_T − K)_+]` with `S_t = s0·e^{X_t}`, and
//! its discrete-monitoring error budgets.
//!
//! One coupled run simulates every path once on the fine grid `n_ref`; the
//! reference price and every coarse price are read off the same path.

use crate::error::{Error, Result};
use crate::models::{PathSimulator, ProcessModel};
use crate::numerics::CompensatedSum;
use crate::parallel::run_paths;
use crate::rate_lab::{const_c, rate_d, DEFAULT_REF_MULTIPLIER, Z95};
use crate::rng::RngStream;

/// Paths per accumulation block; bounds memory at any path count.
const BLOCK: usize = 1 << 16;

/// Relative CI above which a moment estimate is flagged as heavy-tailed.
pub const HEAVY_TAIL_CI: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionSpec {
    pub s0: f64,
    pub strike: f64,
    pub barrier: f64,
    pub rho: f64,
    pub rate: f64,
    pub maturity: f64,
    /// `λ > 1` with `E S_T^λ < ∞`.
    pub lambda_moment: f64,
}

impl OptionSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.s0) {
            return Err(Error::invalid("s0", "must be positive and finite"));
        }
        if !(self.strike >= 0.0 && self.strike.is_finite()) {
            return Err(Error::invalid("strike", "must be finite and nonnegative"));
        }
        if !(self.barrier > 0.0) {
            return Err(Error::invalid("barrier", "must be positive"));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid("rho", "must be finite and nonnegative"));
        }
        if !self.rate.is_finite() {
            return Err(Error::invalid("rate", "must be finite"));
        }
        if !positive(self.maturity) {
            return Err(Error::invalid("maturity", "must be positive and finite"));
        }
        check_lambda(self.lambda_moment)
    }

    /// Level of `X` matching `S ≤ L`.
    pub fn log_barrier(&self) -> f64 {
        (self.barrier / self.s0).ln()
    }

    pub fn discount(&self) -> f64 {
        (-self.rate * self.maturity).exp()
    }

    /// Undiscounted payoff given `count` of `n` monitoring dates below the
    /// barrier and the terminal log-return `x_t`.
    #[inline]
    fn payoff(&self, count: usize, n: usize, x_t: f64) -> f64 {
        let call = (self.s0 * x_t.exp() - self.strike).max(0.0);
        if call == 0.0 {
            return 0.0;
        }
        (-self.rho * self.maturity * count as f64 / n as f64).exp() * call
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 1.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda_moment", format!("{lambda} must exceed 1")));
    }
    Ok(())
}

/// Rejects models for which `E S_T^λ` is infinite.
pub fn check_moment_model(model: &ProcessModel, lambda: f64) -> Result<()> {
    check_lambda(lambda)?;
    let limit = model.exponential_moment_limit();
    if lambda > limit {
        return Err(Error::Unsupported(if limit == 0.0 {
            "E exp(λX_T) is infinite for every λ > 0 (heavy positive jumps); price with Brownian motion or a tempered/truncated SDE".into()
        } else {
            format!("E exp(λX_T) is finite only for λ ≤ {limit}; lower lambda_moment")
        }));
    }
    Ok(())
}

/// Monte Carlo mean with a 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceEstimate {
    pub price: f64,
    pub ci: f64,
}

impl PriceEstimate {
    pub fn standard_error(&self) -> f64 {
        self.ci / Z95
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    /// `G(λ) = E S_T^λ`.
    pub g: f64,
    pub ci: f64,
    /// CI above [`HEAVY_TAIL_CI`] of the estimate.
    pub heavy_tail: bool,
}

#[derive(Default, Clone)]
struct Moments {
    sum: CompensatedSum,
    sq: CompensatedSum,
}

impl Moments {
    fn add(&mut self, v: f64) {
        self.sum.add(v);
        self.sq.add(v * v);
    }

    fn estimate(&self, m: usize, scale: f64) -> PriceEstimate {
        let mf = m as f64;
        let mean = self.sum.value() / mf;
        let var = if m > 1 {
            ((self.sq.value() - mf * mean * mean) / (mf - 1.0)).max(0.0)
        } else {
            0.0
        };
        PriceEstimate {
            price: scale * mean,
            ci: scale.abs() * Z95 * (var / mf).sqrt(),
        }
    }
}

/// Inputs of a coupled pricing run.
#[derive(Debug, Clone)]
pub struct PricingConfig {
    pub option: OptionSpec,
    pub model: ProcessModel,
    pub n_list: Vec<usize>,
    /// Fine grid; defaults to 64 times the largest coarse `n`.
    pub n_ref: Option<usize>,
    pub m_paths: usize,
    pub seed: u64,
    /// Worker threads (`0` = all cores); never changes results.
    pub workers: usize,
}

impl PricingConfig {
    pub fn new(option: OptionSpec, model: ProcessModel, n_list: Vec<usize>) -> Self {
        Self {
            option,
            model,
            n_list,
            n_ref: None,
            m_paths: 100_000,
            seed: 0,
            workers: 0,
        }
    }

    pub fn n_ref(&self) -> usize {
        self.n_ref
            .unwrap_or_else(|| DEFAULT_REF_MULTIPLIER * self.n_list.iter().copied().max().unwrap_or(1))
    }

    pub fn validate(&self) -> Result<()> {
        self.option.validate()?;
        self.model.validate()?;
        check_moment_model(&self.model, self.option.lambda_moment)?;
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("n_list", "must be strictly ascending"));
        }
        if self.n_list.first().is_some_and(|&n| n < 2) {
            return Err(Error::invalid("n_list", "entries must be at least 2"));
        }
        if self.m_paths < 2 {
            return Err(Error::invalid("m_paths", "needs at least 2 paths"));
        }
        let n_ref = self.n_ref();
        if n_ref < 2 {
            return Err(Error::invalid("n_ref", "must be at least 2"));
        }
        for &n in &self.n_list {
            if n_ref % n != 0 {
                return Err(Error::Divisibility { fine: n_ref, coarse: n });
            }
        }
        Ok(())
    }
}

/// Prices of one coupled run.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingRun {
    pub n_list: Vec<usize>,
    pub n_ref: usize,
    /// `C_n(T)` per coarse grid.
    pub discrete: Vec<PriceEstimate>,
    /// `C(T)` proxied on the fine grid.
    pub reference: PriceEstimate,
    /// Coupled `C_n(T) − C(T)` per coarse grid.
    pub gaps: Vec<PriceEstimate>,
    pub moment: MomentEstimate,
}

struct PathPayoffs {
    coarse: Vec<f64>,
    reference: f64,
    terminal: f64,
}

/// Simulate `m_paths` fine paths and price every grid on them.
pub fn price_coupled(cfg: &PricingConfig) -> Result<PricingRun> {
    cfg.validate()?;
    let opt = &cfg.option;
    let n_ref = cfg.n_ref();
    let level = opt.log_barrier();
    let sim = PathSimulator::new(&cfg.model)?;
    let k = cfg.n_list.len();
    let mut coarse = vec![Moments::default(); k];
    let mut gaps = vec![Moments::default(); k];
    let mut reference = Moments::default();
    let mut moment = Moments::default();
    let mut start = 0;
    while start < cfg.m_paths {
        let len = BLOCK.min(cfg.m_paths - start);
        let block = run_paths(
            len,
            cfg.workers,
            || (vec![0.0; n_ref + 1], vec![false; n_ref]),
            |(states, below), i| {
                let mut rng = RngStream::for_path(cfg.seed, start as u64 + i);
                sim.fill(0.0, opt.maturity, &mut rng, states)?;
                for (b, x) in below.iter_mut().zip(states.iter()) {
                    *b = *x <= level;
                }
                let x_t = states[n_ref];
                let count = |n: usize| below.iter().step_by(n_ref / n).filter(|b| **b).count();
                Ok(PathPayoffs {
                    coarse: cfg.n_list.iter().map(|&n| opt.payoff(count(n), n, x_t)).collect(),
                    reference: opt.payoff(count(n_ref), n_ref, x_t),
                    terminal: x_t,
                })
            },
        )?;
        for p in &block {
            reference.add(p.reference);
            for (j, c) in p.coarse.iter().enumerate() {
                coarse[j].add(*c);
                gaps[j].add(c - p.reference);
            }
            moment.add((opt.lambda_moment * (opt.s0.ln() + p.terminal)).exp());
        }
        start += len;
    }
    let m = cfg.m_paths;
    let d = opt.discount();
    let g = moment.estimate(m, 1.0);
    Ok(PricingRun {
        n_list: cfg.n_list.clone(),
        n_ref,
        discrete: coarse.iter().map(|s| s.estimate(m, d)).collect(),
        reference: reference.estimate(m, d),
        gaps: gaps.iter().map(|s| s.estimate(m, d)).collect(),
        moment: MomentEstimate {
            g: g.price,
            ci: g.ci,
            heavy_tail: !(g.ci <= HEAVY_TAIL_CI * g.price),
        },
    })
}

/// `C_n(T)` from paths simulated on the grid `kT/n` itself.
pub fn price_discrete(opt: &OptionSpec, model: &ProcessModel, n: usize, m_paths: usize, seed: u64) -> Result<PriceEstimate> {
    if n < 2 {
        return Err(Error::invalid("n", "must be at least 2"));
    }
    let mut cfg = PricingConfig::new(*opt, model.clone(), vec![n]);
    cfg.n_ref = Some(n);
    cfg.m_paths = m_paths;
    cfg.seed = seed;
    Ok(price_coupled(&cfg)?.discrete[0])
}

/// `C(T)` proxied by the `n_ref`-point sum.
pub fn price_reference(opt: &OptionSpec, model: &ProcessModel, n_ref: usize, m_paths: usize, seed: u64) -> Result<PriceEstimate> {
    let mut cfg = PricingConfig::new(*opt, model.clone(), Vec::new());
    cfg.n_ref = Some(n_ref);
    cfg.m_paths = m_paths;
    cfg.seed = seed;
    Ok(price_coupled(&cfg)?.reference)
}

/// `D̃_{T,β}(n)`: `n^{−(1−1/λ)} ln n` for `β = 1`, else
/// `max(1, T^{1−β}/(β−1))·n^{−(1−1/λ)/β}`.
pub fn d_tilde(beta: f64, lambda: f64, t_final: f64, n: usize) -> Result<f64> {
    check_lambda(lambda)?;
    // Shares validation and the `β > 1` prefactor with `D_{T,β}`.
    rate_d(beta, t_final, n)?;
    let nf = n as f64;
    let e = 1.0 - 1.0 / lambda;
    Ok(if beta == 1.0 {
        nf.powf(-e) * nf.ln()
    } else {
        (t_final.powf(1.0 - beta) / (beta - 1.0)).max(1.0) * nf.powf(-e / beta)
    })
}

/// Strong-rate budget `e^{−rT} ρ G^{1/λ} C_{T,λ/(λ−1)} D_{T,β}(n)^{1/2}`.
pub fn bound_direct(opt: &OptionSpec, beta: f64, b: f64, g: f64, n: usize) -> Result<f64> {
    let lambda = opt.lambda_moment;
    check_lambda(lambda)?;
    if !(g > 0.0 && g.is_finite()) {
        return Err(Error::invalid("G", "moment must be positive and finite"));
    }
    let t = opt.maturity;
    let c = const_c(t, lambda / (lambda - 1.0), b)?;
    Ok(opt.discount() * opt.rho * g.powf(1.0 / lambda) * c * rate_d(beta, t, n)?.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakBudget {
    pub bound: f64,
    pub d_tilde: f64,
    /// Payoff truncation level `N = n^{1/(βλ)}` behind the bound.
    pub truncation: f64,
}

/// Weak-rate budget
/// `2^{β∨2+1} max{B ρT²(1+ρT)e^{ρT}, G} e^{−rT} D̃_{T,β}(n)`.
pub fn bound_truncated(opt: &OptionSpec, beta: f64, b: f64, g: f64, n: usize) -> Result<WeakBudget> {
    let lambda = opt.lambda_moment;
    if !(g > 0.0 && g.is_finite()) {
        return Err(Error::invalid("G", "moment must be positive and finite"));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::invalid("B", "must be positive and finite"));
    }
    let dt = d_tilde(beta, lambda, opt.maturity, n)?;
    let (t, rho) = (opt.maturity, opt.rho);
    let lead = (b * rho * t * t * (1.0 + rho * t) * (rho * t).exp()).max(g);
    Ok(WeakBudget {
        bound: 2f64.powf(beta.max(2.0) + 1.0) * lead * opt.discount() * dt,
        d_tilde: dt,
        truncation: (n as f64).powf(1.0 / (beta * lambda)),
    })
}

/// One row of the price table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceRow {
    pub n: usize,
    pub price: f64,
    pub ci: f64,
    pub ref_price: f64,
    pub ref_ci: f64,
    /// Coupled `C_n − C`.
    pub gap: f64,
    pub gap_ci: f64,
    pub bound_direct: f64,
    pub bound_truncated: f64,
}

#[derive(Debug, Clone)]
pub struct PriceTable {
    pub rows: Vec<PriceRow>,
    pub moment: MomentEstimate,
    pub beta: f64,
    pub b: f64,
    pub notes: Vec<String>,
}

/// Coupled prices with both budgets, `G(λ)` estimated on the same paths.
pub fn price_table(cfg: &PricingConfig, beta: f64, b: f64) -> Result<PriceTable> {
    let run = price_coupled(cfg)?;
    let mut notes = Vec::new();
    if run.moment.heavy_tail {
        notes.push(format!(
            "G(lambda) = {} has CI {} above {}% of the estimate; bounds are unreliable",
            run.moment.g,
            run.moment.ci,
            HEAVY_TAIL_CI * 100.0
        ));
    }
    let mut rows = Vec::with_capacity(run.n_list.len());
    for (j, &n) in run.n_list.iter().enumerate() {
        rows.push(PriceRow {
            n,
            price: run.discrete[j].price,
            ci: run.discrete[j].ci,
            ref_price: run.reference.price,
            ref_ci: run.reference.ci,
            gap: run.gaps[j].price,
            gap_ci: run.gaps[j].ci,
            bound_direct: bound_direct(&cfg.option, beta, b, run.moment.g, n)?,
            bound_truncated: bound_truncated(&cfg.option, beta, b, run.moment.g, n)?.bound,
        });
    }
    Ok(PriceTable {
        rows,
        moment: run.moment,
        beta,
        b,
        notes,
    })
}
