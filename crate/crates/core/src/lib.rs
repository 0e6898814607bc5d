// `!(x > 0.0)` is how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod laws;
pub mod linalg;
pub mod solver;
pub mod tykhonov;

pub use error::{Error, Result};
