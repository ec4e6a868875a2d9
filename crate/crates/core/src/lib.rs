//! Numerical laboratory for Minkowski contents, S-contents and the asymptotics
//! of parallel sets.

// `!(x > 0.0)` style guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
mod dd;
pub mod error;
pub mod gauge;
pub mod kneser;
pub mod limits;
pub mod report;
pub mod spectral;
pub mod strings;
pub mod voxel;

pub use error::{Error, Result};
pub use gauge::{gamma, kappa, zeta, GaugeFunction, GaugeSpec};
