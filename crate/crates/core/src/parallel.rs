//! Worker pool plumbing for Monte Carlo loops.
//!
//! Path `i` always draws from stream `(seed, i)` and results come back in
//! index order, so every reduction downstream sees the same sequence for
//! any number of workers.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Map `f` over path indices `0..m` on `workers` threads (`0` = all cores).
/// `init` builds per-worker scratch state.
pub fn run_paths<T, S, I, F>(m: usize, workers: usize, init: I, f: F) -> Result<Vec<T>>
where
    T: Send,
    I: Fn() -> S + Send + Sync,
    F: Fn(&mut S, u64) -> Result<T> + Send + Sync,
{
    let job = || {
        (0..m as u64)
            .into_par_iter()
            .map_init(&init, |s, i| f(s, i))
            .collect::<Result<Vec<T>>>()
    };
    if workers == 0 {
        return job();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Io(format!("cannot start worker pool: {e}")))?
        .install(job)
}
