pub mod averaging;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod group;
pub mod mixing;
pub mod real;
pub mod series;
pub mod vdc;

pub use error::{Error, Result};
pub use real::Real;
