//! Optimal control of a stochastic SIR epidemic through its Fokker-Planck
//! equation.
//!
//! The forward density `f(x, t)` on `Ω = [0,1]²` (coordinates `(S, I)`) is
//! advanced with a Chang-Cooper flux discretization, SSP-RK3 time stepping and
//! Strang splitting. The backward adjoint `q(x, t)` is solved with upwinding.
//! Controls `(α, v, η)` are optimized by the sequential quadratic Hamiltonian
//! iteration in [`sqh`], and [`mc_oracle`] provides an independent
//! Euler-Maruyama cross-check.

pub mod adjoint;
pub mod cli;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod fp_solver;
pub mod grid;
pub mod hamiltonian;
pub mod mc_oracle;
pub mod output;
pub mod scenario;
pub mod sqh;
mod ssp;

pub use error::{Error, Result};
