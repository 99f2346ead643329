//! Random k-CSP instances, t-wise independent values, and spectral refutation
//! certificates built from Kikuchi matrices.

pub mod combinat;
pub mod cli;
pub mod csp;
pub mod error;
pub mod io;
pub mod kikuchi;
pub mod lp;
pub mod oracle;
pub mod refuter;
pub mod scalar;
pub mod spectral;
pub mod twise;

pub use error::{Error, Result};
