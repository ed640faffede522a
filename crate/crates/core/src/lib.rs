// Negated float comparisons in this crate are NaN guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod discrete;
pub mod ensemble;
pub mod error;
pub mod generalized;
pub mod operators;
pub mod sde;
pub mod seed;
pub mod simplex;

pub use error::{Error, Result};
