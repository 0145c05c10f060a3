//! Numerical tools for maximum principles of anisotropic nonlocal operators.
//!
//! The crate covers kernel audits, discretized Dirichlet forms on uniform
//! grids, first-eigenvalue computations and rearrangement bounds, weak and
//! strong maximum-principle checks, and constructive lattice paths used to
//! certify positivity propagation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discrete;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod lattice;
pub mod linalg;
pub mod maxprinciple;
pub mod par;
pub mod propagation;
pub mod quadrature;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use par::Execution;
