pub mod dop853;
pub mod dynamics;
pub mod error;
pub mod figures;
pub mod geometry;
pub mod invariants;
pub mod numerics;
pub mod orbits;
pub mod poisson;
pub mod scalar;

pub use error::{Error, Result};
