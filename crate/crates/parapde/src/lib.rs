//! Parallel-in-time solvers for one-dimensional parabolic problems.
//!
//! The crate provides, bottom up:
//!
//! * [`poly`] — polynomial / rational-function arithmetic for stability
//!   functions;
//! * [`schemes`] — a catalog of implicit single-step integrators (backward
//!   Euler, Lobatto IIIC, Calahan) with derived stability data and property
//!   checks;
//! * [`analysis`] — contraction-factor analysis of the parareal iteration:
//!   the constants κ_α, the factor Φ(J), threshold search and the sandwich
//!   bounds used to certify Φ(J) ≤ γ;
//! * [`fem1d`] — piecewise-linear Galerkin discretization of −∂ₓₓ on (0, π)
//!   with tridiagonal solvers;
//! * [`propagators`] — backward-Euler coarse steps and implicit Runge-Kutta
//!   fine steps for linear diffusion and Allen-Cahn problems;
//! * [`parareal`] — the parareal iteration itself with per-iteration error
//!   tracking against the sequential fine solution.

// index-based loops mirror the matrix formulas; `!(x > 0)` guards reject NaN
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod fem1d;
pub mod parareal;
pub mod poly;
pub mod propagators;
pub mod schemes;
mod smallmat;
