//! Time-derivative condition for a stable process with drift: fitted
//! exponent of ∫|∂_t p_t(x,y)| dy against the expected max(1, 1/α).

use markov_functionals::condition_x::{check_dt_bound, log_times, FieldGrid, StableDriftDensity};
use markov_functionals::stable::StableParams;
use markov_functionals::Result;

fn main() -> Result<()> {
    for alpha in [0.5, 1.5] {
        let model = StableDriftDensity::new(&StableParams::canonical(alpha)?, 1.0)?;
        let grid = FieldGrid {
            points: 801,
            ..FieldGrid::default()
        };
        let report = check_dt_bound(&model, &log_times(1e-3, 1.0, 7), 0.0, 1.0, &grid)?;
        println!(
            "alpha {alpha}: beta_hat = {:.3} (expected {:.3}), B_hat = {:.3}, sup ratio = {:.3}",
            report.beta.beta_hat,
            (1.0f64 / alpha).max(1.0),
            report.beta.b_hat,
            report.sup_ratio
        );
    }
    Ok(())
}
