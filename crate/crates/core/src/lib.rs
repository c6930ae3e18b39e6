//! Run-and-tumble chemotaxis of *E. coli* in an exponential attractant
//! gradient, from individual cells up to population-level PDEs.
//!
//! The toolkit covers four descriptions of the same physics and the math
//! needed to compare them:
//!
//! - [`params`] — signal field, receptor activity, tumbling and adaptation
//!   rates, and the dimensionless gradient strength `g` that selects the
//!   dynamical regime.
//! - [`closure`] — stationary activity distributions of up- and down-moving
//!   cells, obtained in closed form up to one quadrature, plus the drift
//!   speeds and transport coefficients they induce.
//! - [`agents`] — stochastic simulation of individual swimmers with internal
//!   methylation state (deterministic given a seed, parallel over agents).
//! - [`kinetic`] — finite-volume solver for the two-velocity transport
//!   equation in position × activity space at a chosen scale separation.
//! - [`macroscale`] — the limiting advection and advection–diffusion
//!   equations for the cell density.
//! - [`metrics`] — Wasserstein-1 and L¹ comparisons between any of the above.
//! - [`harness`] — experiment configs, CSV/JSON outputs, and the CLI driver.
//!
//! Units throughout: lengths in µm, times in s, concentrations in µM.
//! Angular/discrete velocity is one-dimensional: `dir = ±1` at speed `v0`.

// `!(x > 0.0)` rejects NaN where `x <= 0.0` would accept it; frozen
// reference constants keep every digit of their source values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision)]
#![allow(clippy::needless_range_loop)]

pub mod agents;
pub mod closure;
pub mod harness;
pub mod kinetic;
pub mod macroscale;
pub mod metrics;
pub mod params;
mod quad;

pub use params::{Environment, PhysParams, Regime};

/// Unified error type for construction, configuration, and runtime failures.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration is internally inconsistent or violates a guard.
    #[error("configuration error: {0}")]
    Config(String),
    /// The requested case is degenerate (e.g. the closure at g = 1).
    #[error("singular case: {0}")]
    Singular(String),
    /// Quadrature or iteration failed to reach the requested tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A steady-state run hit its time budget; partial statistics attached.
    #[error("steady state not reached within {elapsed:.3e} s of simulated time")]
    Timeout {
        elapsed: f64,
        partial: Box<agents::SteadyStats>,
    },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
