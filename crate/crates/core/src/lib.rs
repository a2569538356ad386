pub mod bench;
pub mod cli;
pub mod data;
pub mod error;
pub mod io;
pub mod kernel;
pub mod manifold;
pub mod regression;
pub mod sim;
pub mod solver;
pub mod survival;

pub use error::{Error, Result};
