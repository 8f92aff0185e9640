//! Constant mean curvature cylinders with umbilics from loop-group potentials.

pub mod cli;
pub mod error;
pub mod flow;
pub mod iwasawa;
pub mod loopalg;
pub mod mat2;
pub mod monodromy;
pub mod potential;
pub mod surface;
pub mod unitarize;

pub use error::{CmcError, Result};
