// `!(x < tol)` is deliberate throughout: NaN must fail a check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod custom;
pub mod epd;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod msea;
pub mod numerics;
pub mod orbit;
pub mod ph;
pub mod plants;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
