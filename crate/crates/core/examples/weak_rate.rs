//! Weak errors of the squared Brownian occupation time and of exp(-I_T),
//! from one coupled sample.

use markov_functionals::functionals::FunctionalSpec;
use markov_functionals::models::ProcessModel;
use markov_functionals::rate_lab::{analytic_weak_report, simulate_coupled, weak_report, AnalyticSpec, RateConfig, RateReport};
use markov_functionals::Result;

fn show(label: &str, r: &RateReport) {
    println!("{label}");
    for row in &r.rows {
        println!("  n = {:4}  error = {:+.3e} ± {:.1e}", row.n, row.error, row.ci_halfwidth);
    }
    match r.fit {
        Some(f) => println!("  slope = {:.3}", f.slope),
        None => println!("  slope undefined"),
    }
    if !r.excluded.is_empty() {
        println!("  excluded (below 3 CI): {:?}", r.excluded);
    }
}

fn main() -> Result<()> {
    let mut cfg = RateConfig::new(
        ProcessModel::BrownianMotion { diffusion: 1.0 },
        FunctionalSpec::IndicatorBelow { level: 0.0 },
        0.0,
        1.0,
        vec![8, 16, 32, 64, 128],
    );
    cfg.m_paths = 50_000;
    cfg.k_weak = 2;
    let sample = simulate_coupled(&cfg)?;
    show("E I^2 (k = 2, f = 1)", &weak_report(&sample, &cfg)?);
    let (r, constant) = analytic_weak_report(&sample, &cfg, &AnalyticSpec::exp_neg(2.0))?;
    show(&format!("E exp(-I) (bound constant {constant:.3})"), &r);
    Ok(())
}
