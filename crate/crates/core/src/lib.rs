//! Learned column reordering for linear programs.

pub mod datagen;
pub mod error;
pub mod graph;
pub mod lp;
pub mod nn;
pub mod reformulate;
pub mod simplex;
pub mod training;

pub use error::{Error, Result};
