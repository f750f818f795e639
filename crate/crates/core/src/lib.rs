//! Selective inference after randomized lasso selection, computed by
//! separation-of-variables (SOV) integration with randomized quasi-Monte Carlo.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod inference;
pub mod num;
pub mod par;
pub mod qmc;
pub mod seeds;
pub mod selection;
pub mod sov;
pub mod study;

pub use error::{Error, Result};
