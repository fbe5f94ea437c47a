//! Numerical kernels for the geodesic equation in the space of volume forms,
//! in its perturbed and weighted form
//!
//! ```text
//! u_tt (Δu − b|∇u|² + a(x)) − |∇u_t|² = f
//! ```
//!
//! on `S¹_L × [0,1]` and on conformally flat tori `(T²_L, e^{2φ}δ) × [0,1]`.
//!
//! The crate is `no_std` (it needs `alloc`) and has no IO. It contains:
//!
//! * [`geometry`]: periodic space-time grids, model metrics and the
//!   second-order finite-difference operators on them;
//! * [`qalgebra`]: the pointwise algebra of `Q(r) = r₀r₁ − Σ rᵢ²` and `G = log Q`;
//! * [`pde`]: the discrete operator, its jets and the sparse linearization `dQ`;
//! * [`sparse`]: CSR storage, banded LU and ILU(0)-preconditioned GMRES;
//! * [`solver`]: admissible Newton iteration and the ε-continuation ladder;
//! * [`diagnostics`]: sup norms, Hessian eigenvalues, energy and speed drift;
//! * [`fcheck`]: admissibility of the right-hand side and the square-root gradient bound;
//! * [`oracle`]: numerical checks of the calculus identities behind the `C^{1,1}` estimate.
#![no_std]
// NaN must fail admissibility tests, so `!(x > 0.0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod diagnostics;
pub mod error;
pub mod fcheck;
pub mod geometry;
mod math;
pub mod oracle;
pub mod pde;
pub mod qalgebra;
pub mod solver;
pub mod sparse;

pub use error::{Error, NodeLocation, Result};
pub use geometry::{Field, Grid, Layered, Metric, SpatialField, Torus};
pub use pde::{ProblemData, Target};
pub use qalgebra::Jet;
pub use solver::{SolveResult, SolveStatus, SolverConfig};
