#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod beamspace;
pub mod codebook;
pub mod error;
pub mod format;
pub mod fp_solver;
pub mod harness;
pub mod hierarchy;
pub mod linalg;
pub mod port_model;
pub mod sebo;

pub use error::{Error, Result};
