//! Whitney decompositions, tree coverings and discrete Hardy constants for
//! planar polygonal domains, with grid measurements of weighted Poincaré,
//! Korn, Fefferman–Stein and divergence-equation inequalities.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod numeric;
pub mod whitney;

pub use error::{Error, Result};
pub mod treecover;
pub mod dimension;
pub mod hardy;
pub mod fields;
pub mod decomp;
pub mod testfunctions;
pub mod inequalities;
pub mod divergence;
pub mod cli;
