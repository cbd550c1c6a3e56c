//! Proximal-gradient homotopy solvers for structured linear inverse problems.
//!
//! The crate covers three signal models observed through a dense
//! sub-Gaussian measurement operator, `y = A x + w`:
//!
//! - sparse vectors, regularized with the l1 norm,
//! - group-sparse vectors, regularized with the l2,1 norm,
//! - low-rank square matrices, regularized with the nuclear norm.
//!
//! Each solver drives the regularization weight `lambda_t` along a schedule
//! tied to a geometric error bound `Delta_t`, so every iterate stays in a
//! low-complexity set and the error contracts linearly once the number of
//! measurements is large enough. The [`theory`] module estimates the
//! restricted singular values and Gaussian complexities that feed those
//! schedules.
//!
//! Monte-Carlo loops run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to plain iterators otherwise. Results are
//! identical either way: every trial draws from its own seeded stream.

pub mod error;
pub mod homotopy;
pub mod linalg;
pub mod par;
pub mod prox;
pub mod sensing;
pub mod signals;
pub mod theory;

pub use error::{Error, Result};
pub use homotopy::{
    HomotopyConfig, IterateRecord, RecoveryResult, StopReason, Structure,
};
pub use prox::ProxThreshold;
pub use sensing::{Observation, SensingMode, SensingOperator, SubGaussianFamily, SubGaussianSpec};
pub use signals::{GroupPartition, SignalKind, SignalValues, StructuredSignal};
pub use theory::{Calibration, ConeSpec, RsvEstimate, RsvMethod};
