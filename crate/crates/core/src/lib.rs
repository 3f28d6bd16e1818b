//! Solver and verification harness for a two-species phase-segregation
//! system: a chemical potential mu with mu-dependent mobility, coupled to an
//! order parameter rho governed by a differential inclusion through the
//! monotone graph of the potential's convex part.
//!
//! The crate is organized around the discrete objects:
//!
//! - [`model`] — potentials, coupling, mobility and their admissibility audit
//! - [`prox`] — the resolvent (I + tau beta)^{-1}, the only nonlinear kernel
//! - [`kirchhoff`] — the mobility antiderivative and its bi-Lipschitz checks
//! - [`grid`] — fields, Neumann diffusion operator, norms, snapshot format
//! - [`linsolve`] — tridiagonal and conjugate-gradient SPD solvers
//! - [`stepper`] — the semi-implicit splitting and run driver
//! - [`harness`] — stability-estimate experiments and invariant audits
//!
//! With the default `parallel` feature, cellwise prox solves and independent
//! study runs fan out over rayon; results are bitwise identical to the
//! sequential fallback.

// `!(x > 0.0)`-style guards also reject NaN; the `<=` rewrites clippy
// suggests would accept it. Indexed loops over several slices at once are
// the house style for the matrix kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod grid;
pub mod harness;
pub mod kirchhoff;
pub mod linsolve;
pub mod model;
pub mod prox;
pub mod stepper;

pub use error::{Error, Result};
