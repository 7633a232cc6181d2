//! Numerical laboratory for multiscale convex Hamilton–Jacobi equations in one
//! space dimension.
//!
//! The crate works with mechanical Hamiltonians
//!
//! ```text
//! H(x, y, p) = -f(x) - W(y) + p²/2,      y = x/ε ∈ 𝕋 = ℝ/ℤ,
//! ```
//!
//! and provides
//!
//! * [`problem`]: potentials, tables, exact Lagrangians, discrete Legendre
//!   transforms and a catalog of reference problems;
//! * [`effective`]: the effective Hamiltonian `H̄₁(p)` of the periodic part,
//!   with an independent discounted cell-problem cross-check;
//! * [`metric`]: minimal-action quantities between two space-time points,
//!   computed by dynamic programming over piecewise-linear curves;
//! * [`solvers`]: viscosity solutions of the Cauchy and discounted static
//!   problems, by a Lax–Oleinik dynamic program and a Lax–Friedrichs scheme;
//! * [`rates`]: ε-sweeps, exponent fits and verdicts on convergence-rate
//!   claims, together with the reference acceptance checks in [`verify`].
//!
//! Inner loops (one time slice of a dynamic program, one sweep of a cell
//! problem, independent cells of a sweep) are data-parallel. With the
//! `parallel` feature (default) they run on rayon; without it, or with
//! [`Exec::Sequential`], the same code runs on the calling thread and produces
//! bit-identical results.

pub mod cost;
pub mod dp;
pub mod effective;
pub mod export;
pub mod grid;
pub mod metric;
pub mod par;
pub mod problem;
pub mod rates;
pub mod solvers;
pub mod verify;

pub use par::Exec;

/// Version string mixed into cache keys so that solver changes invalidate
/// stale results.
pub const ARTIFACT_VERSION: &str = concat!("hjlab-", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("infeasible query: {0}")]
    Infeasible(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("speed bound saturated: {0}")]
    Saturation(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
