pub mod certificate;
pub mod chains;
pub mod cli;
pub mod checker;
pub mod diagnostics;
pub mod error;
pub mod mixing;
pub mod model;
pub mod quadrature;
pub mod samplers;

pub use error::{Error, Result};
