//! operadlab: exact computations with colored dg operads and their
//! infinitesimal bimodules.
//!
//! The crate computes cotangent objects, Kähler differentials, tangent
//! structures and derivations, square-zero extensions, Hochschild /
//! Quillen / reduced Quillen cohomology tables via truncated bar
//! resolutions, the finite-pointed-sets comparison, and first-order
//! deformation spaces — all by exact linear algebra over Q or F_p.

pub mod error;
pub mod field;
pub mod label;
pub mod linalg;

pub mod chain;
pub mod perm;

pub mod collection;
pub mod composite;
pub mod operad;

pub mod ibmod;
pub mod tangent;
pub mod kaehler;

pub mod algebra;
pub mod comparison;

pub mod dgcat;
// pub mod bar;
// pub mod pipelines;

// pub mod pirashvili;

// pub mod deform;

// pub mod format;
// pub mod report;

pub use error::{Error, Result};
pub use field::{FieldSpec, Scalar};
