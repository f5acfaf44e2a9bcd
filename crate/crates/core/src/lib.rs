//! Proximal causal inference under unmeasured confounding.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod bridge;
pub mod data;
pub mod diagnostics;
pub mod discrete;
pub mod estimators;
pub mod error;
pub mod glm;
pub mod harness;
pub mod inference;
pub mod layout;
pub mod linalg;
pub mod newton;
pub mod report;
pub mod sim;

pub use error::{Error, ErrorClass, Result};
