#![no_std]
extern crate alloc;

pub mod analysis;
pub mod coefficients;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod quadrature;
pub mod simulate;
pub mod skorokhod;
pub mod stationary;

pub use error::{Error, Result};
pub use linalg::{Matrix, Point};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
