//! Numerical laboratory for the heat equation with a large absorption term on
//! an obstacle, `u_t = Δu - λ 1_{Ω₀} u` with Neumann walls.
//!
//! The crate builds geometries and their tubular offsets, discretizes and
//! evolves the problem, measures norms on subdomains, and compares them with
//! the closed-form decay bounds in [`bounds`].

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod discretize;
pub mod error;
pub mod evolve;
pub mod geometry;
pub mod harness;
pub mod observables;

pub use error::{LabError, Result};
