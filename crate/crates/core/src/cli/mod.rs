//! Experiment driver behind the `mflab` binary.
//!
//! Every subcommand reads its own `[section]` of the config file, resolves
//! defaults, rejects unknown keys, validates, and only then computes. It
//! writes a CSV (first line a schema comment, fixed columns, footer records
//! as `# key = value` comments) and `<out>.manifest` holding the resolved
//! section, which is itself a valid config. Worker count never enters any
//! output.

pub mod config;

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::condition_x::{
    check_dt_bound, dt_density, estimate_beta, log_times, DtMethod, FieldGrid, KernelKind, ParametrixConfig, ParametrixState,
    StableDriftDensity, TransitionDensity,
};
use crate::error::{Error, Result};
use crate::functionals::FunctionalSpec;
use crate::models::{DriftSpec, PathSimulator, ProcessModel, TailSpec, DEFAULT_EULER_SUBSTEPS};
use crate::occupation_option::{price_table, OptionSpec, PricingConfig};
use crate::parallel::run_paths;
use crate::rate_lab::{
    analytic_weak_report, simulate_coupled, strong_report, weak_report, AnalyticSpec, RateConfig, RateReport, DEFAULT_REF_MULTIPLIER,
};
use crate::rng::RngStream;
use crate::stable::StableParams;

use config::{fmt_f64, Config, Section};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_ASSERT: i32 = 4;

/// Version of the CSV and manifest layouts.
pub const SCHEMA_VERSION: u32 = 1;

const SECTIONS: &[&str] = &["strong-rate", "weak-rate", "analytic-weak", "verify-x", "parametrix", "price-option", "simulate"];

#[derive(Parser, Debug)]
#[command(name = "mflab", version, about = "Riemann-sum approximation of integral functionals of Markov processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Strong L_p error of Riemann sums against a fine reference.
    StrongRate(Common),
    /// Weak error of powers of the functional times a terminal payoff.
    WeakRate(Common),
    /// Weak error of an analytic function of the functional.
    AnalyticWeak(Common),
    /// Fit of ∫|∂_t p_t(x,y)| dy ≈ B t^{-β} for closed-form densities.
    VerifyX(Common),
    /// Parametrix density of a locally stable SDE; exports kernel matrices.
    Parametrix(Common),
    /// Occupation-time option prices with discretization budgets.
    PriceOption(Common),
    /// Dump raw simulated paths.
    Simulate(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Config file with one `[section]` per subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the section's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores); never changes any output.
    #[arg(long)]
    workers: Option<usize>,
    /// Output CSV path (default `<subcommand>.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with code 4 when an `assert_*` check of the section fails.
    #[arg(long = "assert")]
    assert: bool,
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::StrongRate(c) => ("strong-rate", c),
            Command::WeakRate(c) => ("weak-rate", c),
            Command::AnalyticWeak(c) => ("analytic-weak", c),
            Command::VerifyX(c) => ("verify-x", c),
            Command::Parametrix(c) => ("parametrix", c),
            Command::PriceOption(c) => ("price-option", c),
            Command::Simulate(c) => ("simulate", c),
        }
    }
}

/// Process exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::InvalidParameter { .. } | Error::Divisibility { .. } | Error::Unsupported(_) => EXIT_CONFIG,
        Error::Quadrature { .. } | Error::FiniteDifference { .. } | Error::SeriesTruncation { .. } | Error::InsufficientData(_) => {
            EXIT_NUMERICAL
        }
        Error::Io(_) => EXIT_RUNTIME,
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (name, common) = cli.command.parts();
    match execute(name, common) {
        Ok(checks) => {
            let mut ok = true;
            for c in &checks {
                eprintln!("check {}: {} ({})", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
                ok &= c.passed;
            }
            if common.assert && !ok {
                EXIT_ASSERT
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("mflab {name}: {e}");
            exit_code(&e)
        }
    }
}

/// Outcome of an `assert_*` key.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// CSV with a schema comment, a header, rows and footer records.
#[derive(Debug, Clone)]
pub struct Table {
    pub subcommand: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub footer: Vec<(String, String)>,
}

impl Table {
    fn new(subcommand: &'static str, columns: &[&'static str]) -> Self {
        Self {
            subcommand,
            columns: columns.to_vec(),
            rows: Vec::new(),
            footer: Vec::new(),
        }
    }

    fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    fn foot(&mut self, key: &str, value: impl Into<String>) {
        self.footer.push((key.into(), value.into()));
    }

    pub fn render(&self) -> String {
        let mut s = format!("# mflab {} csv schema {}\n", self.subcommand, SCHEMA_VERSION);
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        for (k, v) in &self.footer {
            let _ = writeln!(s, "# {k} = {v}");
        }
        s
    }
}

fn f(v: f64) -> String {
    fmt_f64(v)
}

fn execute(name: &'static str, common: &Common) -> Result<Vec<Check>> {
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config {
            key: p.display().to_string(),
            message: format!("cannot read config: {e}"),
        })?,
        None => String::new(),
    };
    let cfg = Config::parse(&text, SECTIONS)?;
    let mut sec = cfg.section(name);
    if let Some(s) = common.seed {
        sec.set("seed", s.to_string());
    }
    if let Some(o) = &common.out {
        sec.set("out", o.display().to_string());
    }
    let default_out = format!("{name}.csv");
    let out = PathBuf::from(sec.get::<String>("out", default_out)?);
    let workers = common.workers.unwrap_or(0);
    let job = Job::parse(name, &mut sec)?;
    let resolved = sec.finish()?;
    job.validate()?;
    let (table, checks) = job.run(workers)?;
    std::fs::write(&out, table.render())?;
    let mut manifest = format!(
        "# mflab manifest schema {SCHEMA_VERSION}\n# version = {}\n# subcommand = {name}\n[{name}]\n",
        env!("CARGO_PKG_VERSION")
    );
    for (k, v) in resolved {
        let _ = writeln!(manifest, "{k} = {v}");
    }
    let mut mpath = out.into_os_string();
    mpath.push(".manifest");
    std::fs::write(PathBuf::from(mpath), manifest)?;
    Ok(checks)
}

fn parse_model(sec: &mut Section, default: &str) -> Result<ProcessModel> {
    let kind = sec.get_str("model", default, &["brownian", "stable", "stable_drift", "sde"])?;
    if kind == "brownian" {
        return Ok(ProcessModel::BrownianMotion {
            diffusion: sec.get_f64("diffusion", 1.0)?,
        });
    }
    let default_alpha = if kind == "sde" { 0.75 } else { 0.5 };
    let alpha = sec.get_f64("alpha", default_alpha)?;
    let weights = (sec.get_opt_f64("c_plus")?, sec.get_opt_f64("c_minus")?);
    let scale = sec.get_f64("scale", 1.0)?;
    let p = match weights {
        (None, None) => StableParams::canonical(alpha),
        (cp, cm) => StableParams::new(alpha, cp.unwrap_or(0.0), cm.unwrap_or(0.0)),
    }
    .and_then(|p| p.with_scale(scale))?;
    Ok(match kind.as_str() {
        "stable" => ProcessModel::StableProcess(p),
        "stable_drift" => ProcessModel::StableWithDrift {
            p,
            c: sec.get_f64("c", 1.0)?,
        },
        _ => {
            let drift = match sec.get_str("drift", "tanh", &["zero", "linear", "tanh"])?.as_str() {
                "zero" => DriftSpec::zero(),
                "linear" => DriftSpec::Linear {
                    a: sec.get_f64("drift_a", -1.0)?,
                    bias: sec.get_f64("drift_bias", 0.0)?,
                    bound: sec.get_f64("drift_bound", 1.0)?,
                },
                _ => DriftSpec::Tanh {
                    amp: sec.get_f64("drift_amp", 0.5)?,
                    rate: sec.get_f64("drift_rate", 1.0)?,
                },
            };
            let tail = match sec.get_str("tail", "tempered", &["pure", "tempered", "truncated"])?.as_str() {
                "pure" => TailSpec::PureStable,
                "truncated" => TailSpec::Truncated,
                _ => TailSpec::Tempered {
                    lambda: sec.get_f64("tail_lambda", 1.0)?,
                },
            };
            ProcessModel::LocallyStableSde {
                drift,
                p,
                tail,
                euler_substeps: sec.get("euler_substeps", DEFAULT_EULER_SUBSTEPS)?,
            }
        }
    })
}

/// Functional under key prefix `prefix` (`h` or `f`).
fn parse_functional(sec: &mut Section, prefix: &str, default: &str) -> Result<FunctionalSpec> {
    let kind = sec.get_str(prefix, default, &["one", "indicator_below", "indicator_interval", "scaled_indicator", "sin", "cos"])?;
    let key = |s: &str| format!("{prefix}_{s}");
    Ok(match kind.as_str() {
        "one" => FunctionalSpec::one(),
        "indicator_below" => FunctionalSpec::IndicatorBelow {
            level: sec.get_f64(&key("level"), 0.0)?,
        },
        "indicator_interval" => FunctionalSpec::IndicatorInterval {
            lo: sec.get_f64(&key("lo"), -1.0)?,
            hi: sec.get_f64(&key("hi"), 1.0)?,
        },
        "scaled_indicator" => FunctionalSpec::ScaledIndicator {
            rho: sec.get_f64(&key("rho"), 1.0)?,
            level: sec.get_f64(&key("level"), 0.0)?,
        },
        "sin" => FunctionalSpec::smooth("sin", f64::sin, 1.0),
        _ => FunctionalSpec::smooth("cos", f64::cos, 1.0),
    })
}

fn window(sec: &mut Section, key: &str) -> Result<Option<(f64, f64)>> {
    if sec.peek(key).is_none() {
        return Ok(None);
    }
    let v = sec.get_f64_list(key, &[])?;
    match v.as_slice() {
        [lo, hi] if lo <= hi => Ok(Some((*lo, *hi))),
        _ => Err(sec.err(key, "expects `lo, hi` with lo ≤ hi")),
    }
}

fn within(v: f64, w: (f64, f64)) -> bool {
    v >= w.0 && v <= w.1
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RateKind {
    Strong,
    Weak,
    Analytic,
}

struct RateAsserts {
    slope: Option<(f64, f64)>,
    ratio_max: Option<f64>,
    decreasing: bool,
    bound: bool,
}

struct VerifyJob {
    model: ProcessModel,
    x: f64,
    t_final: f64,
    t_list: Vec<f64>,
    grid: FieldGrid,
    check_bound: bool,
    fd_check: bool,
    assert_beta: Option<(f64, f64)>,
    assert_fd_tol: Option<f64>,
}

struct ParametrixJob {
    config: ParametrixConfig,
    kernels: Vec<KernelKind>,
    kernel_names: Vec<String>,
    t_list: Vec<f64>,
    zs: Vec<f64>,
    mass_times: Vec<f64>,
    dt_times: usize,
    assert_mass_tol: Option<f64>,
    assert_beta: Option<(f64, f64)>,
}

struct PriceJob {
    cfg: PricingConfig,
    beta: f64,
    b: f64,
    assert_gap_decreasing: bool,
    assert_within_bounds: bool,
}

struct SimulateJob {
    model: ProcessModel,
    x0: f64,
    t_final: f64,
    n: usize,
    m_paths: usize,
    seed: u64,
}

enum Job {
    Rate {
        kind: RateKind,
        cfg: Box<RateConfig>,
        phi: Option<AnalyticSpec>,
        asserts: RateAsserts,
    },
    Verify(Box<VerifyJob>),
    Parametrix(Box<ParametrixJob>),
    Price(Box<PriceJob>),
    Simulate(SimulateJob),
}

impl Job {
    fn parse(name: &str, sec: &mut Section) -> Result<Self> {
        let seed = sec.get::<u64>("seed", 0)?;
        match name {
            "strong-rate" | "weak-rate" | "analytic-weak" => {
                let kind = match name {
                    "strong-rate" => RateKind::Strong,
                    "weak-rate" => RateKind::Weak,
                    _ => RateKind::Analytic,
                };
                let model = parse_model(sec, "brownian")?;
                let h = parse_functional(sec, "h", "indicator_below")?;
                let x0 = sec.get_f64("x0", 0.0)?;
                let t = sec.get_f64("T", 1.0)?;
                let n_list = sec.get_list::<usize>("n_list", &[8, 16, 32, 64, 128, 256, 512, 1024])?;
                let mut cfg = RateConfig::new(model, h, x0, t, n_list);
                cfg.seed = seed;
                if kind == RateKind::Strong {
                    cfg.p_strong = sec.get_f64("p", 2.0)?;
                } else {
                    if kind == RateKind::Weak {
                        cfg.k_weak = sec.get::<u32>("k", 1)?;
                    }
                    cfg.f_weak = parse_functional(sec, "f", "one")?;
                }
                cfg.m_paths = sec.get::<usize>("m_paths", 100_000)?;
                cfg.beta = sec.get_f64("beta", 1.0)?;
                cfg.b_guess = sec.get_f64("b_guess", 1.0)?;
                cfg.ref_multiplier = sec.get::<usize>("ref_multiplier", DEFAULT_REF_MULTIPLIER)?;
                cfg.n_ref = sec.get_opt::<usize>("n_ref")?;
                let phi = if kind == RateKind::Analytic {
                    Some(match sec.get_str("phi", "exp_neg", &["exp_neg", "one"])?.as_str() {
                        "one" => AnalyticSpec::constant(),
                        _ => AnalyticSpec::exp_neg(sec.get_f64("r_phi", 2.0)?),
                    })
                } else {
                    None
                };
                let asserts = RateAsserts {
                    slope: window(sec, "assert_slope")?,
                    ratio_max: sec.get_opt_f64("assert_ratio_max")?,
                    decreasing: sec.get("assert_decreasing", false)?,
                    bound: sec.get("assert_bound", false)?,
                };
                Ok(Job::Rate {
                    kind,
                    cfg: Box::new(cfg),
                    phi,
                    asserts,
                })
            }
            "verify-x" => {
                let model = parse_model(sec, "stable_drift")?;
                let x = sec.get_f64("x", 0.0)?;
                let t_final = sec.get_f64("T", 1.0)?;
                let t_min = sec.get_f64("t_min", 1e-3)?;
                let t_count = sec.get::<usize>("t_count", 13)?;
                let d = FieldGrid::default();
                let grid = FieldGrid {
                    reach: sec.get_f64("grid_reach", d.reach)?,
                    points: sec.get::<usize>("grid_points", d.points)?,
                    max_extent: d.max_extent,
                };
                if !(t_min > 0.0 && t_min < t_final) {
                    return Err(sec.err("t_min", "must lie in (0, T)"));
                }
                Ok(Job::Verify(Box::new(VerifyJob {
                    model,
                    x,
                    t_final,
                    t_list: log_times(t_min, t_final, t_count),
                    grid,
                    check_bound: sec.get("check_bound", true)?,
                    fd_check: sec.get("fd_check", true)?,
                    assert_beta: window(sec, "assert_beta")?,
                    assert_fd_tol: sec.get_opt_f64("assert_fd_tol")?,
                })))
            }
            "parametrix" => {
                let model = parse_model(sec, "sde")?;
                let x = sec.get_f64("x", 0.5)?;
                let t_final = sec.get_f64("T", 1.0)?;
                let mut c = ParametrixConfig::from_model(&model, x, t_final)?;
                c.k_max = sec.get("k_max", c.k_max)?;
                c.k_ceiling = sec.get("k_ceiling", 16usize.max(c.k_max))?;
                c.tau_series = sec.get_f64("tau_series", c.tau_series)?;
                c.warmup_ratio = sec.get_f64("warmup_ratio", c.warmup_ratio)?;
                c.per_decade = sec.get("per_decade", c.per_decade)?;
                c.du = sec.get_f64("du", c.du)?;
                c.extent = sec.get_f64("extent", c.extent)?;
                c.s_nodes = sec.get("s_nodes", c.s_nodes)?;
                c.z_points = sec.get("z_points", c.z_points)?;
                c.z_panel = sec.get_f64("z_panel", c.z_panel)?;
                let names = sec.get_list::<String>("kernels", &["p0".into(), "phi1".into(), "psi".into(), "density".into()])?;
                let mut kernels = Vec::with_capacity(names.len());
                for n in &names {
                    kernels.push(match n.as_str() {
                        "p0" => KernelKind::P0,
                        "psi" => KernelKind::Psi,
                        "density" => KernelKind::Density,
                        other => match other.strip_prefix("phi").and_then(|k| k.parse::<usize>().ok()) {
                            Some(k) if k >= 1 => KernelKind::PhiStar(k),
                            _ => return Err(sec.err("kernels", format!("unknown kernel `{other}` (p0, phiK, psi, density)"))),
                        },
                    });
                }
                let t_list = sec.get_f64_list("t_list", &[0.1, 0.5, 1.0])?;
                let z_min = sec.get_f64("z_min", -5.0)?;
                let z_max = sec.get_f64("z_max", 5.0)?;
                let z_count = sec.get::<usize>("z_count", 101)?;
                if !(z_min < z_max) || z_count < 2 {
                    return Err(sec.err("z_count", "needs z_min < z_max and at least 2 points"));
                }
                let zs = (0..z_count)
                    .map(|i| z_min + (z_max - z_min) * i as f64 / (z_count - 1) as f64)
                    .collect();
                let mass_times = sec.get_f64_list("mass_times", &[0.1, 0.5, 1.0])?;
                let dt_times = sec.get::<usize>("dt_times", 0)?;
                for &t in t_list.iter().chain(&mass_times) {
                    if !(t >= c.t_min() && t <= t_final) {
                        return Err(sec.err("t_list", format!("time {t} outside [{}, {t_final}]", c.t_min())));
                    }
                }
                Ok(Job::Parametrix(Box::new(ParametrixJob {
                    config: c,
                    kernels,
                    kernel_names: names,
                    t_list,
                    zs,
                    mass_times,
                    dt_times,
                    assert_mass_tol: sec.get_opt_f64("assert_mass_tol")?,
                    assert_beta: window(sec, "assert_beta")?,
                })))
            }
            "price-option" => {
                let model = parse_model(sec, "brownian")?;
                let option = OptionSpec {
                    s0: sec.get_f64("s0", 1.0)?,
                    strike: sec.get_f64("strike", 1.0)?,
                    barrier: sec.get_f64("barrier", 0.9)?,
                    rho: sec.get_f64("rho", 1.0)?,
                    rate: sec.get_f64("rate", 0.05)?,
                    maturity: sec.get_f64("T", 1.0)?,
                    lambda_moment: sec.get_f64("lambda", 2.0)?,
                };
                let n_list = sec.get_list::<usize>("n_list", &[8, 16, 32, 64, 128])?;
                let mut cfg = PricingConfig::new(option, model, n_list);
                cfg.n_ref = sec.get_opt::<usize>("n_ref")?;
                cfg.m_paths = sec.get::<usize>("m_paths", 100_000)?;
                cfg.seed = seed;
                Ok(Job::Price(Box::new(PriceJob {
                    cfg,
                    beta: sec.get_f64("beta", 1.0)?,
                    b: sec.get_f64("b", 1.0)?,
                    assert_gap_decreasing: sec.get("assert_gap_decreasing", false)?,
                    assert_within_bounds: sec.get("assert_within_bounds", false)?,
                })))
            }
            _ => Ok(Job::Simulate(SimulateJob {
                model: parse_model(sec, "brownian")?,
                x0: sec.get_f64("x0", 0.0)?,
                t_final: sec.get_f64("T", 1.0)?,
                n: sec.get("n", 16usize)?,
                m_paths: sec.get("m_paths", 10usize)?,
                seed,
            })),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Job::Rate { cfg, phi, .. } => {
                cfg.validate()?;
                if let Some(phi) = phi {
                    crate::rate_lab::analytic_constant(cfg.beta, phi.d_phi, phi.r_phi, cfg.b_guess, cfg.t_final, cfg.h.sup_norm())?;
                }
                Ok(())
            }
            Job::Verify(v) => {
                StableDriftDensity::from_model(&v.model)?;
                if v.t_list.len() < 3 {
                    return Err(Error::invalid("t_count", "needs at least 3 times"));
                }
                Ok(())
            }
            Job::Parametrix(p) => p.config.validate(),
            Job::Price(p) => {
                p.cfg.validate()?;
                if !(p.beta >= 1.0) {
                    return Err(Error::invalid("beta", format!("{} must be at least 1", p.beta)));
                }
                if !(p.b > 0.0) {
                    return Err(Error::invalid("b", "must be positive"));
                }
                Ok(())
            }
            Job::Simulate(s) => {
                s.model.validate()?;
                if s.n == 0 || s.m_paths == 0 {
                    return Err(Error::invalid("n", "n and m_paths must be positive"));
                }
                if !(s.t_final > 0.0 && s.t_final.is_finite()) {
                    return Err(Error::invalid("T", "must be positive and finite"));
                }
                Ok(())
            }
        }
    }

    fn run(self, workers: usize) -> Result<(Table, Vec<Check>)> {
        match self {
            Job::Rate { kind, mut cfg, phi, asserts } => {
                cfg.workers = workers;
                run_rate(kind, &cfg, phi.as_ref(), &asserts)
            }
            Job::Verify(v) => run_verify(&v),
            Job::Parametrix(p) => run_parametrix(&p),
            Job::Price(mut p) => {
                p.cfg.workers = workers;
                run_price(&p)
            }
            Job::Simulate(s) => run_simulate(&s, workers),
        }
    }
}

fn rate_table(name: &'static str, report: &RateReport, n_ref: usize) -> Table {
    let mut t = Table::new(name, &["n", "error", "ci", "theory_bound"]);
    for r in &report.rows {
        t.row(vec![r.n.to_string(), f(r.error), f(r.ci_halfwidth), f(r.theory_bound)]);
    }
    t.foot("kind", report.kind.to_string());
    t.foot("n_ref", n_ref.to_string());
    match &report.fit {
        Some(fit) => {
            t.foot("slope", f(fit.slope));
            t.foot("slope_ci", format!("{} {}", f(fit.slope_ci.0), f(fit.slope_ci.1)));
            t.foot("intercept", f(fit.intercept));
            t.foot("fit_points", fit.points.to_string());
        }
        None => t.foot("slope", "undefined"),
    }
    t.foot("bound_satisfied", report.bound_satisfied.to_string());
    t.foot(
        "excluded",
        report.excluded.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" "),
    );
    for n in &report.notes {
        t.foot("note", n.clone());
    }
    t
}

fn run_rate(kind: RateKind, cfg: &RateConfig, phi: Option<&AnalyticSpec>, a: &RateAsserts) -> Result<(Table, Vec<Check>)> {
    let sample = simulate_coupled(cfg)?;
    let (name, report, constant) = match kind {
        RateKind::Strong => ("strong-rate", strong_report(&sample, cfg)?, None),
        RateKind::Weak => ("weak-rate", weak_report(&sample, cfg)?, None),
        RateKind::Analytic => {
            let (r, c) = analytic_weak_report(&sample, cfg, phi.expect("analytic spec"))?;
            ("analytic-weak", r, Some(c))
        }
    };
    let mut table = rate_table(name, &report, sample.n_ref);
    if let Some(c) = constant {
        table.foot("constant", f(c));
    }
    let mut checks = Vec::new();
    if let Some(w) = a.slope {
        let s = report.fit.map(|f| f.slope).unwrap_or(f64::NAN);
        checks.push(Check::new("slope", within(s, w), format!("slope {} in [{}, {}]", f(s), f(w.0), f(w.1))));
    }
    let used: Vec<_> = report.rows.iter().filter(|r| !report.excluded.contains(&r.n)).collect();
    if let Some(m) = a.ratio_max {
        let ratios: Vec<f64> = used.iter().map(|r| r.error.abs() / r.theory_bound).collect();
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = hi / lo;
        checks.push(Check::new(
            "bound_shape_ratio",
            ratios.len() >= 2 && spread <= m,
            format!("max/min of error/theory_bound = {} (limit {})", f(spread), f(m)),
        ));
    }
    if a.decreasing {
        let dec = report.rows.windows(2).all(|w| w[1].error.abs() < w[0].error.abs());
        checks.push(Check::new("decreasing", dec, "errors strictly decreasing in n".into()));
    }
    if a.bound {
        checks.push(Check::new("bound", report.bound_satisfied, "every row below the theory bound".into()));
    }
    Ok((table, checks))
}

fn run_verify(v: &VerifyJob) -> Result<(Table, Vec<Check>)> {
    let model = StableDriftDensity::from_model(&v.model)?;
    let mut table = Table::new("verify-x", &["t", "N_t"]);
    let (beta, sup) = if v.check_bound {
        let r = check_dt_bound(&model, &v.t_list, v.x, v.t_final, &v.grid)?;
        (r.beta, Some(r.sup_ratio))
    } else {
        (estimate_beta(&model, &v.t_list, v.x, v.t_final, &v.grid)?, None)
    };
    for (t, n) in &beta.samples {
        table.row(vec![f(*t), f(*n)]);
    }
    table.foot("beta_hat", f(beta.beta_hat));
    table.foot("b_hat", f(beta.b_hat));
    table.foot("slope_se", f(beta.fit.slope_se));
    table.foot("fit_points", beta.fit.points.to_string());
    if let Some(s) = sup {
        table.foot("sup_ratio", f(s));
    }
    let mut checks = Vec::new();
    if v.fd_check {
        let mut worst: f64 = 0.0;
        for &t in &v.t_list {
            let ys = v.grid.nodes(model.center(t, v.x)?, model.noise().spread(t));
            let an = dt_density(&model, t, v.x, &ys, DtMethod::Analytic)?;
            let fd = dt_density(&model, t, v.x, &ys, DtMethod::FiniteDifference)?;
            let scale = an.dp_dt_values.iter().map(|d| d.abs()).fold(0.0, f64::max);
            let diff = an
                .dp_dt_values
                .iter()
                .zip(&fd.dp_dt_values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(diff / scale);
        }
        table.foot("fd_rel_err", f(worst));
        if let Some(tol) = v.assert_fd_tol {
            checks.push(Check::new("fd_vs_analytic", worst <= tol, format!("{} ≤ {}", f(worst), f(tol))));
        }
    }
    if let Some(w) = v.assert_beta {
        checks.push(Check::new(
            "beta_hat",
            within(beta.beta_hat, w),
            format!("{} in [{}, {}]", f(beta.beta_hat), f(w.0), f(w.1)),
        ));
    }
    Ok((table, checks))
}

fn run_parametrix(p: &ParametrixJob) -> Result<(Table, Vec<Check>)> {
    let state = ParametrixState::build(p.config.clone())?;
    let mut table = Table::new("parametrix", &["kernel", "t", "z", "value"]);
    for (kind, name) in p.kernels.iter().zip(&p.kernel_names) {
        let m = state.kernel_matrix(*kind, &p.t_list, &p.zs)?;
        for (t, row) in p.t_list.iter().zip(&m) {
            for (z, v) in p.zs.iter().zip(row) {
                table.row(vec![name.clone(), f(*t), f(*z), f(*v)]);
            }
        }
    }
    let d = &state.diagnostics;
    table.foot("order", state.order().to_string());
    table.foot("tail_bound", f(d.tail_bound));
    table.foot("c0_hat", f(d.c0_hat));
    table.foot("c_hat", f(d.c_hat));
    table.foot("concave", d.concave.to_string());
    table.foot("decreasing", d.decreasing.to_string());
    let mut checks = Vec::new();
    if !p.mass_times.is_empty() {
        let rep = state.density_bound(&p.mass_times, &state.default_grid())?;
        table.foot("density_sup_ratio", f(rep.sup_ratio));
        let mut worst: f64 = 0.0;
        for (t, _, mass) in &rep.per_t {
            table.foot("mass", format!("{} {}", f(*t), f(*mass)));
            worst = worst.max((mass - 1.0).abs());
        }
        if let Some(tol) = p.assert_mass_tol {
            checks.push(Check::new("mass", worst <= tol, format!("max |mass − 1| = {} ≤ {}", f(worst), f(tol))));
        }
    }
    if p.dt_times >= 3 {
        let ts = log_times(p.config.t_min(), p.config.t_final, p.dt_times);
        let rep = state.check_dt_bound(&ts, &state.default_grid())?;
        table.foot("beta_hat", f(rep.beta.beta_hat));
        table.foot("b_hat", f(rep.beta.b_hat));
        table.foot("dt_sup_ratio", f(rep.sup_ratio));
        if let Some(w) = p.assert_beta {
            checks.push(Check::new(
                "beta_hat",
                within(rep.beta.beta_hat, w),
                format!("{} in [{}, {}]", f(rep.beta.beta_hat), f(w.0), f(w.1)),
            ));
        }
    } else if p.assert_beta.is_some() {
        return Err(Error::Config {
            key: "parametrix.assert_beta".into(),
            message: "needs dt_times ≥ 3".into(),
        });
    }
    Ok((table, checks))
}

fn run_price(p: &PriceJob) -> Result<(Table, Vec<Check>)> {
    let t = price_table(&p.cfg, p.beta, p.b)?;
    let mut table = Table::new("price-option", &["n", "price", "ci", "ref_price", "ref_ci", "gap", "bound_direct", "bound_truncated"]);
    for r in &t.rows {
        table.row(vec![
            r.n.to_string(),
            f(r.price),
            f(r.ci),
            f(r.ref_price),
            f(r.ref_ci),
            f(r.gap),
            f(r.bound_direct),
            f(r.bound_truncated),
        ]);
    }
    table.foot("n_ref", p.cfg.n_ref().to_string());
    table.foot("gap_ci", t.rows.iter().map(|r| f(r.gap_ci)).collect::<Vec<_>>().join(" "));
    table.foot("G", f(t.moment.g));
    table.foot("G_ci", f(t.moment.ci));
    table.foot("heavy_tail", t.moment.heavy_tail.to_string());
    for n in &t.notes {
        table.foot("note", n.clone());
    }
    let mut checks = Vec::new();
    if p.assert_gap_decreasing {
        let dec = t.rows.windows(2).all(|w| w[1].gap.abs() < w[0].gap.abs());
        checks.push(Check::new("gap_decreasing", dec, "|C_n − C_ref| strictly decreasing in n".into()));
    }
    if p.assert_within_bounds {
        let ok = t
            .rows
            .iter()
            .all(|r| r.gap.abs() - r.gap_ci <= r.bound_direct && r.gap.abs() - r.gap_ci <= r.bound_truncated);
        checks.push(Check::new("within_bounds", ok, "|gap| within both budgets up to its CI".into()));
    }
    Ok((table, checks))
}

fn run_simulate(s: &SimulateJob, workers: usize) -> Result<(Table, Vec<Check>)> {
    let sim = PathSimulator::new(&s.model)?;
    let paths = run_paths(s.m_paths, workers, || (), |_, i| {
        let mut states = vec![0.0; s.n + 1];
        sim.fill(s.x0, s.t_final, &mut RngStream::for_path(s.seed, i), &mut states)?;
        Ok(states)
    })?;
    let mut table = Table::new("simulate", &["path", "k", "t", "x"]);
    let dt = s.t_final / s.n as f64;
    for (i, states) in paths.iter().enumerate() {
        for (k, x) in states.iter().enumerate() {
            table.row(vec![i.to_string(), k.to_string(), f(k as f64 * dt), f(*x)]);
        }
    }
    Ok((table, Vec::new()))
}
