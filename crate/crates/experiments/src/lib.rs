//! Experiment harness for the proximal-gradient homotopy solvers.
//!
//! Suites:
//!
//! - `fig1`, `fig2`, `fig3`: convergence sweeps for sparse, group-sparse and
//!   low-rank recovery over three measurement counts, noiseless and noisy,
//! - `invariants`: small instances with constants read off the drawn
//!   operator, checked for support or rank leakage and bound violations,
//! - `calibrate`: fits the constants the sweeps use,
//! - `plotdata`: turns trace files into mean and band series.
//!
//! Configs are TOML files; see [`config`] for the keys.

pub mod calibrate;
pub mod config;
pub mod error;
pub mod figures;
pub mod invariants;
pub mod plot;
pub mod runner;
pub mod trace;

pub use config::{ExperimentConfig, Overrides, ProblemKind, Suite};
pub use error::ExpError;
