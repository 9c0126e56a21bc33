//! Strong and weak discretization errors of Riemann sums: Monte Carlo
//! estimation, theoretical rate and constant formulas, and log-log fits.
//!
//! Every estimator runs on one coupled sample: each fine path is simulated
//! once at `n_ref` cells and all coarse sums are read off its sub-grids.

use std::fmt;
use std::sync::Arc;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::functionals::{CoupledPath, FunctionalSpec};
use crate::models::{PathSimulator, ProcessModel};
use crate::numerics::{compensated_sum, fit_line, mean_var};
use crate::parallel::run_paths;
use crate::rng::RngStream;

/// Normal quantile for two-sided 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Default fine-grid multiplier over the largest coarse `n`.
pub const DEFAULT_REF_MULTIPLIER: usize = 64;

/// `D_{T,β}(n)`: `ln n / n` for `β = 1`, else
/// `max(1, T^{1−β}/(β−1))·n^{−1/β}`.
pub fn rate_d(beta: f64, t_final: f64, n: usize) -> Result<f64> {
    if !(beta >= 1.0 && beta.is_finite()) {
        return Err(Error::invalid("beta", format!("{beta} must be at least 1")));
    }
    if n < 2 {
        return Err(Error::invalid("n", format!("{n} must be at least 2")));
    }
    if !(t_final > 0.0) {
        return Err(Error::invalid("T", "must be positive"));
    }
    let nf = n as f64;
    Ok(if beta == 1.0 {
        nf.ln() / nf
    } else {
        (t_final.powf(1.0 - beta) / (beta - 1.0)).max(1.0) * nf.powf(-1.0 / beta)
    })
}

/// `C_{T,p}`: `(14p(p−1)B)^{1/2}·T` for `p ≥ 2`, `(28B)^{1/2}·T` for `p < 2`.
pub fn const_c(t_final: f64, p: f64, b: f64) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::invalid("p", format!("{p} must be positive")));
    }
    if !(b > 0.0 && t_final > 0.0) {
        return Err(Error::invalid("B", "B and T must be positive"));
    }
    Ok(if p >= 2.0 {
        (14.0 * p * (p - 1.0) * b).sqrt() * t_final
    } else {
        (28.0 * b).sqrt() * t_final
    })
}

/// Weak-error bound `2^{β∨2} k² B T^{k+1} ‖h‖^k ‖f‖ D_{T,β}(n)`.
pub fn weak_bound(beta: f64, k: u32, b: f64, t_final: f64, h_norm: f64, f_norm: f64, n: usize) -> Result<f64> {
    let d = rate_d(beta, t_final, n)?;
    Ok(2f64.powf(beta.max(2.0)) * (k * k) as f64 * b * t_final.powi(k as i32 + 1) * h_norm.powi(k as i32) * f_norm * d)
}

/// First-moment bound `5 B T ‖h‖ D_{T,β}(n)`.
pub fn mean_bound(beta: f64, b: f64, t_final: f64, h_norm: f64, n: usize) -> Result<f64> {
    Ok(5.0 * b * t_final * h_norm * rate_d(beta, t_final, n)?)
}

/// Constant `2^{β∨2} D_φ B (T²‖h‖/R)(1 + T‖h‖/R)(1 − T‖h‖/R)^{−3}` for an
/// analytic `φ` with `|φ^{(m)}(0)/m!| ≤ D_φ R^{−m}`.
pub fn analytic_constant(beta: f64, d_phi: f64, r_phi: f64, b: f64, t_final: f64, h_norm: f64) -> Result<f64> {
    let q = t_final * h_norm / r_phi;
    if !(q < 1.0) {
        return Err(Error::invalid("r_phi", format!("T·‖h‖ = {} must be below R_φ = {r_phi}", t_final * h_norm)));
    }
    Ok(2f64.powf(beta.max(2.0)) * d_phi * b * (t_final * t_final * h_norm / r_phi) * (1.0 + q) * (1.0 - q).powi(-3))
}

/// Least-squares fit of `log error` against `log n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% interval for the slope from the regression standard error.
    pub slope_ci: (f64, f64),
    pub points: usize,
}

/// Fit `(n, error)` rows on log scales; rows with nonpositive error are
/// dropped and counted in the second return value.
pub fn fit_rate(rows: &[(usize, f64)]) -> Result<(RateFit, usize)> {
    let kept: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(_, e)| *e > 0.0 && e.is_finite())
        .map(|(n, e)| ((*n as f64).ln(), e.ln()))
        .collect();
    let dropped = rows.len() - kept.len();
    if kept.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "rate fit needs at least 3 rows with positive error, got {}",
            kept.len()
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = kept.into_iter().unzip();
    let fit = fit_line(&xs, &ys)?;
    let dof = (fit.points - 2) as f64;
    let tq = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::InsufficientData(e.to_string()))?
        .inverse_cdf(0.975);
    let half = tq * fit.slope_se;
    Ok((
        RateFit {
            slope: fit.slope,
            intercept: fit.intercept,
            slope_ci: (fit.slope - half, fit.slope + half),
            points: fit.points,
        },
        dropped,
    ))
}

/// Inputs of a rate experiment.
#[derive(Debug, Clone)]
pub struct RateConfig {
    pub model: ProcessModel,
    pub h: FunctionalSpec,
    pub x0: f64,
    pub t_final: f64,
    pub n_list: Vec<usize>,
    pub p_strong: f64,
    pub k_weak: u32,
    pub f_weak: FunctionalSpec,
    pub m_paths: usize,
    pub seed: u64,
    pub beta: f64,
    pub b_guess: f64,
    pub ref_multiplier: usize,
    /// Explicit fine resolution; overrides `ref_multiplier`.
    pub n_ref: Option<usize>,
    /// Worker threads (`0` = all cores); never changes results.
    pub workers: usize,
}

impl RateConfig {
    /// Defaults: `p = 2`, `k = 1`, `f ≡ 1`, `β = 1`, `B = 1`, `M = 10⁵`,
    /// reference multiplier 64.
    pub fn new(model: ProcessModel, h: FunctionalSpec, x0: f64, t_final: f64, n_list: Vec<usize>) -> Self {
        Self {
            model,
            h,
            x0,
            t_final,
            n_list,
            p_strong: 2.0,
            k_weak: 1,
            f_weak: FunctionalSpec::one(),
            m_paths: 100_000,
            seed: 0,
            beta: 1.0,
            b_guess: 1.0,
            ref_multiplier: DEFAULT_REF_MULTIPLIER,
            n_ref: None,
            workers: 0,
        }
    }

    pub fn n_ref(&self) -> usize {
        self.n_ref
            .unwrap_or_else(|| self.ref_multiplier * self.n_list.iter().copied().max().unwrap_or(1))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.h.validate()?;
        self.f_weak.validate()?;
        if self.n_list.is_empty() {
            return Err(Error::invalid("n_list", "must not be empty"));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("n_list", "must be strictly ascending"));
        }
        if self.n_list[0] < 2 {
            return Err(Error::invalid("n_list", "entries must be at least 2"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::invalid("T", "must be positive and finite"));
        }
        if !(self.p_strong > 0.0) {
            return Err(Error::invalid("p_strong", "must be positive"));
        }
        if self.k_weak == 0 {
            return Err(Error::invalid("k_weak", "must be at least 1"));
        }
        if self.m_paths < 2 {
            return Err(Error::invalid("m_paths", "needs at least 2 paths"));
        }
        if !(self.beta >= 1.0) {
            return Err(Error::invalid("beta", format!("{} must be at least 1", self.beta)));
        }
        if !(self.b_guess > 0.0) {
            return Err(Error::invalid("b_guess", "must be positive"));
        }
        if self.ref_multiplier == 0 {
            return Err(Error::invalid("ref_multiplier", "must be at least 1"));
        }
        let n_ref = self.n_ref();
        for &n in &self.n_list {
            if n_ref % n != 0 {
                return Err(Error::Divisibility { fine: n_ref, coarse: n });
            }
        }
        Ok(())
    }
}

/// Per-path functionals of one coupled run.
#[derive(Debug, Clone)]
pub struct CoupledSample {
    pub n_list: Vec<usize>,
    pub n_ref: usize,
    pub t_final: f64,
    /// `I_{T,n_ref}(h)` per path.
    pub reference: Vec<f64>,
    /// `coarse[j][i] = I_{T,n_j}(h)` on path `i`.
    pub coarse: Vec<Vec<f64>>,
    /// `X_T` per path.
    pub terminal: Vec<f64>,
}

struct PathRecord {
    reference: f64,
    coarse: Vec<f64>,
    terminal: f64,
}

/// Simulate `m_paths` fine paths and evaluate every coarse sum on each.
pub fn simulate_coupled(cfg: &RateConfig) -> Result<CoupledSample> {
    cfg.validate()?;
    let n_ref = cfg.n_ref();
    let sim = PathSimulator::new(&cfg.model)?;
    let records = run_paths(
        cfg.m_paths,
        cfg.workers,
        || CoupledPath::new(n_ref),
        |buf, i| {
            let mut rng = RngStream::for_path(cfg.seed, i);
            buf.run(&sim, cfg.x0, cfg.t_final, &cfg.h, &mut rng)?;
            Ok(PathRecord {
                reference: buf.functional(n_ref, cfg.t_final),
                coarse: cfg.n_list.iter().map(|&n| buf.functional(n, cfg.t_final)).collect(),
                terminal: buf.terminal(),
            })
        },
    )?;
    let mut coarse = vec![Vec::with_capacity(records.len()); cfg.n_list.len()];
    for r in &records {
        for (j, v) in r.coarse.iter().enumerate() {
            coarse[j].push(*v);
        }
    }
    Ok(CoupledSample {
        n_list: cfg.n_list.clone(),
        n_ref,
        t_final: cfg.t_final,
        reference: records.iter().map(|r| r.reference).collect(),
        coarse,
        terminal: records.iter().map(|r| r.terminal).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Strong,
    Weak,
    Analytic,
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Strong => "strong",
            ErrorKind::Weak => "weak",
            ErrorKind::Analytic => "analytic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub n: usize,
    /// Strong: `(E|J|^p)^{1/p}`. Weak and analytic: signed mean difference.
    pub error: f64,
    pub ci_halfwidth: f64,
    pub theory_bound: f64,
}

impl RateRow {
    /// The estimate stands out of its own noise (`|error| > 3·CI`).
    pub fn has_signal(&self) -> bool {
        self.error.abs() > 3.0 * self.ci_halfwidth
    }
}

#[derive(Debug, Clone)]
pub struct RateReport {
    pub kind: ErrorKind,
    pub rows: Vec<RateRow>,
    /// `None` when fewer than three usable rows remain.
    pub fit: Option<RateFit>,
    /// Every row satisfies `|error| ≤ theory_bound`.
    pub bound_satisfied: bool,
    /// `n` values left out of the fit (zero error or no signal).
    pub excluded: Vec<usize>,
    pub notes: Vec<String>,
}

impl RateReport {
    fn finish(kind: ErrorKind, rows: Vec<RateRow>, only_signal: bool) -> Self {
        let mut notes = Vec::new();
        let mut excluded = Vec::new();
        let mut pts = Vec::new();
        for r in &rows {
            if r.error == 0.0 || (only_signal && !r.has_signal()) {
                excluded.push(r.n);
            } else {
                pts.push((r.n, r.error.abs()));
            }
            if kind == ErrorKind::Strong && r.error > 0.0 && r.ci_halfwidth > 0.5 * r.error {
                notes.push(format!("n={}: CI exceeds 50% of the estimate", r.n));
            }
        }
        let fit = match fit_rate(&pts) {
            Ok((f, _)) => Some(f),
            Err(_) => {
                notes.push("slope undefined: fewer than 3 usable rows".into());
                None
            }
        };
        if !excluded.is_empty() {
            notes.push(format!("rows excluded from the fit: {excluded:?}"));
        }
        let bound_satisfied = rows.iter().all(|r| r.error.abs() <= r.theory_bound);
        RateReport {
            kind,
            rows,
            fit,
            bound_satisfied,
            excluded,
            notes,
        }
    }
}

/// Strong `L_p` errors from a coupled sample.
pub fn strong_report(sample: &CoupledSample, cfg: &RateConfig) -> Result<RateReport> {
    let p = cfg.p_strong;
    let c = const_c(cfg.t_final, p, cfg.b_guess)?;
    let h_norm = cfg.h.sup_norm();
    let m = sample.reference.len() as f64;
    let mut rows = Vec::with_capacity(sample.n_list.len());
    for (j, &n) in sample.n_list.iter().enumerate() {
        let powers: Vec<f64> = sample
            .reference
            .iter()
            .zip(&sample.coarse[j])
            .map(|(r, c)| (r - c).abs().powf(p))
            .collect();
        let (mu, var) = mean_var(&powers);
        let (error, ci) = if mu > 0.0 {
            let e = mu.powf(1.0 / p);
            (e, Z95 * e / (p * mu) * (var / m).sqrt())
        } else {
            (0.0, 0.0)
        };
        rows.push(RateRow {
            n,
            error,
            ci_halfwidth: ci,
            theory_bound: c * h_norm * rate_d(cfg.beta, cfg.t_final, n)?.sqrt(),
        });
    }
    Ok(RateReport::finish(ErrorKind::Strong, rows, false))
}

/// `(E|J|^q)^{1/q}` for an arbitrary `q` on the same sample (Jensen checks).
pub fn strong_norm(sample: &CoupledSample, j: usize, q: f64) -> f64 {
    let s = compensated_sum(sample.reference.iter().zip(&sample.coarse[j]).map(|(r, c)| (r - c).abs().powf(q)));
    (s / sample.reference.len() as f64).powf(1.0 / q)
}

fn mean_rows<F>(sample: &CoupledSample, mut per_path: F, bound: impl Fn(usize) -> Result<f64>) -> Result<Vec<RateRow>>
where
    F: FnMut(usize, usize) -> f64,
{
    let m = sample.reference.len();
    let mut rows = Vec::with_capacity(sample.n_list.len());
    for (j, &n) in sample.n_list.iter().enumerate() {
        let diffs: Vec<f64> = (0..m).map(|i| per_path(j, i)).collect();
        let (mean, var) = mean_var(&diffs);
        rows.push(RateRow {
            n,
            error: mean,
            ci_halfwidth: Z95 * (var / m as f64).sqrt(),
            theory_bound: bound(n)?,
        });
    }
    Ok(rows)
}

/// Weak errors `E[(I_ref)^k f(X_T)] − E[(I_n)^k f(X_T)]` from a coupled
/// sample; only rows with signal above 3 CI enter the fit.
pub fn weak_report(sample: &CoupledSample, cfg: &RateConfig) -> Result<RateReport> {
    let k = cfg.k_weak as i32;
    let f: Vec<f64> = sample.terminal.iter().map(|x| cfg.f_weak.eval(*x)).collect();
    let (h_norm, f_norm) = (cfg.h.sup_norm(), cfg.f_weak.sup_norm());
    let rows = mean_rows(
        sample,
        |j, i| (sample.reference[i].powi(k) - sample.coarse[j][i].powi(k)) * f[i],
        |n| weak_bound(cfg.beta, cfg.k_weak, cfg.b_guess, cfg.t_final, h_norm, f_norm, n),
    )?;
    Ok(RateReport::finish(ErrorKind::Weak, rows, true))
}

pub fn strong_error(cfg: &RateConfig) -> Result<RateReport> {
    strong_report(&simulate_coupled(cfg)?, cfg)
}

pub fn weak_error(cfg: &RateConfig) -> Result<RateReport> {
    weak_report(&simulate_coupled(cfg)?, cfg)
}

/// Analytic test function `φ` with `|φ^{(m)}(0)/m!| ≤ D_φ R_φ^{−m}`.
#[derive(Clone)]
pub struct AnalyticSpec {
    pub name: String,
    pub phi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub d_phi: f64,
    pub r_phi: f64,
}

impl fmt::Debug for AnalyticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AnalyticSpec({}, D={}, R={})", self.name, self.d_phi, self.r_phi)
    }
}

impl AnalyticSpec {
    /// `φ(z) = e^{−z}`: Taylor coefficients `1/m!` satisfy the hypothesis
    /// with `D = 1` for every `R ≥ 1`.
    pub fn exp_neg(r_phi: f64) -> Self {
        Self {
            name: "exp(-z)".into(),
            phi: Arc::new(|z: f64| (-z).exp()),
            d_phi: 1.0,
            r_phi,
        }
    }

    pub fn constant() -> Self {
        Self {
            name: "1".into(),
            phi: Arc::new(|_| 1.0),
            d_phi: 1.0,
            r_phi: f64::INFINITY,
        }
    }
}

/// Bound and coupled Monte Carlo estimate for
/// `E φ(I_T) f(X_T) − E φ(I_{T,n}) f(X_T)`. The returned constant is the
/// one from [`analytic_constant`].
pub fn analytic_weak_report(sample: &CoupledSample, cfg: &RateConfig, phi: &AnalyticSpec) -> Result<(RateReport, f64)> {
    let h_norm = cfg.h.sup_norm();
    let constant = analytic_constant(cfg.beta, phi.d_phi, phi.r_phi, cfg.b_guess, cfg.t_final, h_norm)?;
    let f: Vec<f64> = sample.terminal.iter().map(|x| cfg.f_weak.eval(*x)).collect();
    let f_norm = cfg.f_weak.sup_norm();
    let rows = mean_rows(
        sample,
        |j, i| ((phi.phi)(sample.reference[i]) - (phi.phi)(sample.coarse[j][i])) * f[i],
        |n| Ok(constant * f_norm * rate_d(cfg.beta, cfg.t_final, n)?),
    )?;
    Ok((RateReport::finish(ErrorKind::Analytic, rows, true), constant))
}

pub fn analytic_weak_bound(cfg: &RateConfig, phi: &AnalyticSpec) -> Result<(RateReport, f64)> {
    // Reject the hypothesis violation before paying for simulation.
    analytic_constant(cfg.beta, phi.d_phi, phi.r_phi, cfg.b_guess, cfg.t_final, cfg.h.sup_norm())?;
    analytic_weak_report(&simulate_coupled(cfg)?, cfg, phi)
}
