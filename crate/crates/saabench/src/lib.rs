//! Data-driven decision methods for stochastic optimization, benchmarked
//! under a matched-pair out-of-sample protocol.
//!
//! The library implements five ways of turning an observed sample into a
//! decision — sample average approximation (SAA), bootstrap aggregation,
//! kernel smoothing, maximum likelihood, and Bayesian posterior-predictive
//! decisions — together with two test beds: a family of scalar quadratic
//! costs and a minimum-variance portfolio problem. The [`harness`] module
//! runs replicated experiments that score every method against SAA on the
//! same draws.

pub mod bayes;
pub mod cli;
pub mod distributions;
pub mod estimators;
pub mod harness;
pub mod portfolio;
pub mod quadratic;
pub mod rng;

pub use distributions::{MomentPair, Sample, TrueDistribution};
pub use quadratic::{DecisionBox, QuadraticCost};

/// CLI entry point; returns the process exit code.
pub fn run_from_env() -> i32 {
    cli::main_with(std::env::args_os())
}
