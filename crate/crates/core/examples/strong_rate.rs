//! Strong L2 error of Riemann sums for the Brownian occupation time, with
//! the fitted log-log slope.

use markov_functionals::functionals::FunctionalSpec;
use markov_functionals::models::ProcessModel;
use markov_functionals::rate_lab::{strong_error, RateConfig};
use markov_functionals::Result;

fn main() -> Result<()> {
    let mut cfg = RateConfig::new(
        ProcessModel::BrownianMotion { diffusion: 1.0 },
        FunctionalSpec::IndicatorBelow { level: 0.0 },
        0.0,
        1.0,
        vec![8, 16, 32, 64, 128],
    );
    cfg.m_paths = 20_000;
    cfg.seed = 1;
    let report = strong_error(&cfg)?;
    for r in &report.rows {
        println!("n = {:4}  error = {:.5} ± {:.5}  bound(B=1) = {:.4}", r.n, r.error, r.ci_halfwidth, r.theory_bound);
    }
    if let Some(f) = report.fit {
        println!("slope = {:.3}  95% CI [{:.3}, {:.3}]", f.slope, f.slope_ci.0, f.slope_ci.1);
    }
    Ok(())
}
