//! Simulator and statistics toolkit for a kinetic-inductance parametric
//! oscillator operated as a latched microwave click detector.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod device;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod protocol;
pub mod s11fit;
pub mod stats;
pub mod threshold;
pub mod units;

pub use error::{Error, Result};
