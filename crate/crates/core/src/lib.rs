//! Low-rank tensor solver for elliptic optimal control problems with
//! separable coefficients.

pub mod cascadic;
pub mod coefficient;
pub mod error;
pub mod experiment;
pub mod kronop;
pub mod lowrank;
pub mod oracle;
pub mod pcg;
pub mod rhs;
pub mod spectral;

pub use error::{Error, Result};
