//! Augmented primal-dual gradient flow: simulation and exponential-rate
//! certification through common Lyapunov matrices.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: small dense linear algebra (Jacobi eigensolver, Lyapunov
//!   equation via Kronecker lift, Hurwitz predicate).
//! - [`lyapunov`]: Lyapunov-set membership and the two-matrix common
//!   Lyapunov matrix construction, plus grid verification over segments.
//! - [`lpv`]: the error-dynamics matrix family `H(F, θ)` of the flow, its
//!   binary vertices and a structured common Lyapunov matrix for it.
//! - [`flow`]: the problem model, the flow vector field, a fixed-step RK4
//!   integrator, decay-rate fitting and KKT residuals.
//! - [`sdp`]: an alternating-projection LMI feasibility backend.
//! - [`certify`]: rate LMIs per region, bisection on the rate and solver
//!   independent certificate validation.
//! - [`cli`]: problem/certificate files, CSV/SVG emission and the commands
//!   behind the `pdcert` binary.
//!
//! Data-parallel loops (grid checks, vertex sweeps, sampled validation) run
//! on rayon when the `parallel` feature is enabled and fall back to plain
//! iterators otherwise; see [`exec::Execution`].

pub mod certify;
pub mod cli;
pub mod error;
pub mod exec;
pub mod flow;
pub mod lpv;
pub mod lyapunov;
pub mod numerics;
pub mod sdp;
pub mod tolerances;

pub use error::{Error, Result};
pub use exec::Execution;
pub use numerics::{DenseMatrix, SymMatrix};
pub use tolerances::Tolerances;
