//! Simulate a locally stable SDE on a grid and print one path.

use markov_functionals::models::{simulate_grid, DriftSpec, ProcessModel, TailSpec};
use markov_functionals::stable::StableParams;
use markov_functionals::{Result, RngStream};

fn main() -> Result<()> {
    let model = ProcessModel::locally_stable(
        DriftSpec::Tanh { amp: 0.5, rate: 1.0 },
        StableParams::new(0.75, 1.0, 1.0)?,
        TailSpec::Tempered { lambda: 1.0 },
    );
    let path = simulate_grid(&model, 0.0, 1.0, 16, &mut RngStream::for_path(42, 0))?;
    for (k, x) in path.states.iter().enumerate() {
        println!("t = {:.4}  x = {x:+.6}", k as f64 * path.dt());
    }
    let coarse = path.thin(4)?;
    println!("thinned to 4 cells: {:?}", coarse.states);
    Ok(())
}
