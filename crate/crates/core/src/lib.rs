//! Numerical toolkit for Poisson-commuting symbol families.
//!
//! The crate certifies Poisson commutativity of symbol families on symplectic
//! charts, integrates the Lagrangian foliation they generate, builds truncated
//! Toeplitz operators on weighted Bergman spaces of the unit disk, and measures
//! how operator commutators scale with the weight parameter.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bergman;
pub mod foliation;
pub mod harness;
pub mod symbol;
pub mod symplectic;
