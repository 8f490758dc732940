//! Numerics for the singular Schrödinger–Maxwell system
//!
//! ```text
//! -div(a ∇u) + ψ |u|^{r-2} u = f / u^θ
//! -div(M ∇ψ)                 = |u|^r
//! ```
//!
//! with homogeneous Dirichlet data on a box. The crate is `no_std` (it needs
//! `alloc`) and contains only pure computation: exponent bookkeeping for the
//! regularity regimes, finite-difference grids and operators, the two
//! half-problem solvers, the fixed-point driver over the regularization
//! ladder, the saddle functional and the discrete audits of the a priori
//! estimates. File formats and the command line live in the `smlab` crate.

#![no_std]
// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod assembly;
pub mod coupled;
mod error;
pub mod exponents;
pub mod functional;
pub mod grid;
pub(crate) mod math;
pub mod scalar_solvers;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};
