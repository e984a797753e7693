//! Coarse-to-fine multi-view stereo with adaptive depth ranges and
//! adaptive hypothesis placement.

// `!(a < b)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adia;
pub mod adrp;
pub mod cli;
pub mod config;
pub mod cost_volume;
pub mod error;
pub mod features;
pub mod fusion;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod pipeline;

pub use error::{Error, ErrorKind, Result};
