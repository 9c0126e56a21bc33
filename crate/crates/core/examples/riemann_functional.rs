//! Occupation time of the negative half-line by Brownian motion: reference
//! value on a fine grid and Riemann sums on its coarse sub-grids.

use markov_functionals::functionals::{path_error, reference_functional, riemann_functional, FunctionalSpec};
use markov_functionals::models::ProcessModel;
use markov_functionals::{Result, RngStream};

fn main() -> Result<()> {
    let model = ProcessModel::BrownianMotion { diffusion: 1.0 };
    let h = FunctionalSpec::IndicatorBelow { level: 0.0 };
    let (reference, fine) = reference_functional(&model, 0.0, 1.0, &h, 4096, &[8, 64, 512], &mut RngStream::for_path(7, 0))?;
    println!("I_ref = {reference:.6}");
    for n in [8, 64, 512] {
        let coarse = riemann_functional(&fine.thin(n)?, &h);
        println!("n = {n:4}: I_n = {coarse:.6}  I_ref - I_n = {:+.6}", path_error(&fine, &h, n)?);
    }
    Ok(())
}
