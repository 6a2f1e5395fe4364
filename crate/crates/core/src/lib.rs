//! Numerical laboratory for stochastic evolution equations with infinite delay:
//!
//! ```text
//! dU = (A U + F(t, U_t)) dt + B(t, U_t) dW_H(t),   U_0 = Φ ∈ 𝔅,
//! ```
//!
//! where `A` is the Dirichlet Laplacian on `E = L^p(0, ℓ)`, `𝔅 = L^p_g(-∞,0;E) × E`
//! is a weighted history space and `W_H` is a cylindrical Brownian motion.
//!
//! The crate is organised as follows:
//!
//! * [`weights`]: history weights `g`/`G`, history grids, segments `U_t`, the
//!   `K`/`M` functions and the tilde/hat path extensions.
//! * [`spectral`]: the spectral Dirichlet Laplacian, its analytic semigroup,
//!   fractional powers and interpolation norms.
//! * [`stochastic`]: seeded cylindrical noise, adapted step processes and the
//!   exact Ornstein–Uhlenbeck transfer.
//! * [`gamma`]: γ-radonifying norms (Monte Carlo and exact), the γ-Fubini
//!   stacking, `L²_γ` norms and γ-boundedness checks.
//! * [`solver`]: convolutions, the fixed-point operator `L_T`, the Picard solver
//!   and the exponential-Euler stepper.
//! * [`vnorms`]: the solution-space norms `V^p_{α,∞}`, `V^p_{α,p}` and the Hölder
//!   diagnostic.
//! * [`heatmem`]: the perturbed heat equation with memory.
//! * [`cli`]: run configuration and the `simulate`/`verify`/`convergence`/`gamma-bench`
//!   commands.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod cli;
pub mod error;
pub mod exec;
pub mod gamma;
pub mod heatmem;
pub mod path;
pub mod solver;
pub mod spectral;
pub mod stats;
pub mod stochastic;
pub mod vnorms;
pub mod weights;

pub use error::{Error, Result};
pub use exec::Exec;
pub use path::{MildPath, PathView, Trajectory};
pub use spectral::{Basis, DirichletLaplacian1D, SpatialGrid, SpectralField};
