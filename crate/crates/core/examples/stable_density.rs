//! Stable densities by Fourier inversion, checked against a sampler histogram
//! and the Cauchy closed form.

use markov_functionals::stable::{check_density_domination, sample_stable, stable_density, StableParams};
use markov_functionals::{Result, RngStream};

fn main() -> Result<()> {
    let cauchy = StableParams::canonical(1.0)?;
    println!("g(1)(0) = {:.12}  (1/pi = {:.12})", stable_density(&cauchy, 1.0, 0.0, 0)?, std::f64::consts::FRAC_1_PI);

    for alpha in [0.5, 1.0, 1.5] {
        let p = StableParams::canonical(alpha)?;
        let draws = 200_000;
        let (lo, hi) = (-1.0, 1.0);
        let inside = (0..draws)
            .filter(|i| {
                let x = sample_stable(&p, 1.0, &mut RngStream::for_path(1, *i as u64)).unwrap();
                (lo..=hi).contains(&x)
            })
            .count();
        // Midpoint rule on a fine grid for P(lo ≤ X ≤ hi).
        let k = 2000;
        let h = (hi - lo) / k as f64;
        let mut prob = 0.0;
        for j in 0..k {
            prob += stable_density(&p, 1.0, lo + (j as f64 + 0.5) * h, 0)? * h;
        }
        println!(
            "alpha {alpha}: P(|X_1| <= 1) sampled {:.4}, integrated {:.4}",
            inside as f64 / draws as f64,
            prob
        );
    }

    let skewed = StableParams::new(0.5, 2.0, 0.0)?;
    let grid: Vec<f64> = (-200..=200).map(|i| i as f64 * 0.25).collect();
    let rep = check_density_domination(&skewed, &grid)?;
    println!("one-sided alpha 0.5: domination passed = {}  C0 = {:.3}", rep.passed(), rep.c0);
    Ok(())
}
