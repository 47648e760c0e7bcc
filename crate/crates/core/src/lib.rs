//! Bayesian optimization on a Gaussian-process surrogate whose Cholesky
//! factor grows by one row per observation instead of being recomputed.
//!
//! [`optimizer::run`] drives the sequential loop and
//! [`optimizer::run_parallel`] the batch variant; [`gp::GpState`] is the
//! surrogate with its lagged kernel refits.

pub mod acquisition;
pub mod benchmarks;
pub mod cli;
pub mod gp;
pub mod kernel;
pub mod linalg;
pub mod optimizer;
pub mod oracle;
pub mod selftest;
pub mod trace;

pub use gp::{GpState, Lag};
pub use kernel::KernelParams;
pub use optimizer::{run, run_parallel, BoConfig, Bounds, Objective, RunTrace};
