//! Down-and-out occupation-time call under Brownian log-returns: coupled
//! discrete and reference prices with both discretization budgets.

use markov_functionals::models::ProcessModel;
use markov_functionals::occupation_option::{price_table, OptionSpec, PricingConfig};
use markov_functionals::Result;

fn main() -> Result<()> {
    let option = OptionSpec {
        s0: 1.0,
        strike: 1.0,
        barrier: 0.9,
        rho: 1.0,
        rate: 0.05,
        maturity: 1.0,
        lambda_moment: 3.0,
    };
    let mut cfg = PricingConfig::new(option, ProcessModel::BrownianMotion { diffusion: 0.5 }, vec![4, 16, 64, 256]);
    cfg.m_paths = 50_000;
    cfg.seed = 5;
    let t = price_table(&cfg, 1.0, 1.0)?;
    println!("G(3) = {:.4} ± {:.4}", t.moment.g, t.moment.ci);
    for r in &t.rows {
        println!(
            "n = {:4}  C_n = {:.5}  C_ref = {:.5}  gap = {:+.5} ± {:.5}  direct = {:.3}  truncated = {:.3}",
            r.n, r.price, r.ref_price, r.gap, r.gap_ci, r.bound_direct, r.bound_truncated
        );
    }
    Ok(())
}
