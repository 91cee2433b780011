//! Computational systolic geometry.
//!
//! The crate builds the pieces needed to check optimal Loewner-type
//! inequalities numerically: Euclidean lattices and their criticality
//! certificates, John ellipsoids of finite-dimensional norms with rank-1
//! decompositions, piecewise-flat torus meshes with integral (co)homology,
//! L^p-minimizing closed 1-forms, Abel-Jacobi and projected torus maps with
//! their Jacobian chains, systolic invariants, and closed-form fixtures for
//! the fibered cases.

pub mod error;
pub mod abel_jacobi;
pub mod cohomology;
pub mod fixtures;
pub mod lattice;
pub mod mesh;
pub mod norms;
pub mod systolic;
mod numerics;
pub mod tol;

pub use error::{Error, Result};
