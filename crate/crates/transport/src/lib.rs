//! Discrete-ordinate (S_N) transport in 1-D slab geometry.
//!
//! The intensity u(x, mu) satisfies, on an interval (a, b),
//!
//! ```text
//!     mu du/dx + (sigma_t/eps) u = (sigma_t/eps - eps sigma_a) ubar + eps f,
//! ```
//!
//! where `ubar` is the angular average and `eps` in (0, 1] measures how
//! scattering-dominated the medium is. Incoming intensity is prescribed on
//! each side. The discretization is upwind discontinuous Galerkin in space
//! (modal Legendre basis per cell) over a Gauss-Legendre ordinate set, solved
//! by transport sweeps with synthetic acceleration. As eps -> 0 the
//! interior approaches a diffusion limit; the `boundary` module provides the
//! Chandrasekhar-H boundary corrector and the blended boundary condition that
//! keep convergence uniform in eps, and `analysis` hosts the error/rate
//! machinery used by the convergence studies.

pub mod analysis;
pub mod angular;
pub mod basis;
pub mod boundary;
pub mod linalg;
pub mod mesh;
pub mod operators;
pub mod solver;
pub mod transport;

/// Unified error type; every fallible operation in the crate returns it.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Problem data violates a model assumption at some evaluation point.
    #[error("domain error: {0}")]
    Domain(String),
    /// A linear solve or elimination step lost all pivots.
    #[error("numerical breakdown: {0}")]
    Breakdown(String),
    /// An iterative construction exhausted its budget.
    #[error("did not converge: {0}")]
    NonConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use angular::AngularQuadrature;
pub use mesh::Mesh1D;
pub use operators::{DgField, ProblemSpec, ScalarField, ScalarFn};
pub use solver::{solve, SolveOptions, SolveResult};
