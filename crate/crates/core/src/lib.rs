//! Device-free localization with multipath-aware radio tomographic imaging.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamform;
pub mod channel;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod locate;
pub mod protocol;
pub mod rti;
pub mod tune;

pub use error::{Error, Result};
