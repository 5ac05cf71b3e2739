#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod geom;
pub mod mesh;

pub use error::{Error, Result};
pub mod body;
pub mod bps;
pub mod config;
pub mod eval;
pub mod fit;
pub mod losses;
pub mod nn;
pub mod pipeline;
pub mod spatial;
pub mod synth;
