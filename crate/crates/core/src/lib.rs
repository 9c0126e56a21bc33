//! Riemann-sum approximation of integral functionals of Markov processes:
//! simulation, strong and weak error measurement, verification of the
//! transition-density time-derivative condition, and occupation-time option
//! pricing with discretization-error budgets.

pub mod cli;
pub mod condition_x;
pub mod error;
pub mod functionals;
pub mod models;
pub mod numerics;
pub mod occupation_option;
pub mod parallel;
pub mod rate_lab;
pub mod rng;
pub mod stable;

pub use error::{Error, Result};
pub use rng::RngStream;
