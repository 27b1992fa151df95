//! Metric geometry of projection lattices of finite-dimensional von Neumann
//! algebras `M_{n_1} ⊕ ... ⊕ M_{n_B}`.
//!
//! The crate covers two-projection canonical forms, operator-norm geodesics
//! and midpoint sets, the triangle and sharp relations, and recovery of the
//! normal form `T(p) = J(p) r + J(1 - p)(1 - r)` of surjective isometries
//! between Grassmann spaces, together with the orthoisomorphism extension of
//! such maps to the whole lattice.

pub mod algebra;
pub mod error;
pub mod halmos;
pub mod linalg;
pub mod paths;
pub mod sampling;
pub mod suite;
pub mod symmetry;

pub use error::{Error, Result};
