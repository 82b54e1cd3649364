//! Coupling and truncated-transport toolkit for structured population models.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dual;
pub mod error;
pub mod measures;
pub mod models;
pub mod numerics;
pub mod otsolver;
pub mod pdmp;

pub use error::{Error, Result};
