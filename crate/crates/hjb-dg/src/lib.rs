//! Space-time discontinuous Galerkin solver for parabolic Hamilton-Jacobi-Bellman
//! equations with Cordes coefficients.
//!
//! The solver discretises `∂_t u - sup_α [L^α u - f^α] = 0` on the unit square with
//! an hp-version interior-penalty DG method in space and a DG time-stepping scheme,
//! marching slab by slab and resolving the pointwise supremum by policy iteration
//! (semismooth Newton). The `analysis` module carries the reference solutions,
//! scheme norms and convergence harness used by the verification experiments.

pub mod analysis;
pub mod basis;
pub mod experiments;
pub mod forms;
pub mod mesh;
pub mod problem;
pub mod quadrature;
pub mod slab;
pub mod solver;
pub mod sparse;
pub mod spaces;

mod errors;

pub use errors::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
