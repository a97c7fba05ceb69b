pub mod checks;
pub mod effective;
pub mod error;
pub mod grid;
pub mod harness;
pub mod indicators;
pub mod manybody;
pub mod scattering;

pub use error::{Error, Result};
