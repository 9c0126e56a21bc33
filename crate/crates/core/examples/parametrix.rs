//! Parametrix transition density of dX = 0.5 tanh(X) dt + dZ with tempered
//! 0.75-stable noise, on coarse grids: series order, mass, and a row of p.

use markov_functionals::condition_x::{KernelKind, ParametrixConfig, ParametrixState};
use markov_functionals::models::{DriftSpec, TailSpec};
use markov_functionals::stable::StableParams;
use markov_functionals::Result;

fn main() -> Result<()> {
    let mut cfg = ParametrixConfig::new(
        DriftSpec::Tanh { amp: 0.5, rate: 1.0 },
        StableParams::new(0.75, 1.0, 1.0)?,
        TailSpec::Tempered { lambda: 1.0 },
        0.5,
        0.2,
    );
    // Coarse settings so the example runs in about a minute.
    cfg.per_decade = 4;
    cfg.s_nodes = 6;
    cfg.k_max = 3;
    cfg.k_ceiling = 10;
    let state = ParametrixState::build(cfg)?;
    let d = &state.diagnostics;
    println!("order K = {}, remainder bound {:.2e}, C0 ~ {:.2}, C ~ {:.2}", state.order(), d.tail_bound, d.c0_hat, d.c_hat);
    let rep = state.density_bound(&[0.05, 0.2], &state.default_grid())?;
    for (t, sup, mass) in &rep.per_t {
        println!("t = {t}: mass = {mass:.6}, sup p/(g_(t+1)+g_t) = {sup:.3}");
    }
    let zs: Vec<f64> = (-4..=4).map(|i| 0.5 + i as f64 * 0.5).collect();
    let p = state.kernel_matrix(KernelKind::Density, &[0.2], &zs)?;
    let p0 = state.kernel_matrix(KernelKind::P0, &[0.2], &zs)?;
    for ((z, a), b) in zs.iter().zip(&p[0]).zip(&p0[0]) {
        println!("y = {z:+.1}: p = {a:.5}  p0 = {b:.5}");
    }
    Ok(())
}
