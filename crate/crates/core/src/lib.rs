pub mod acquisition;
pub mod cli;
pub mod engine;
pub mod error;
pub mod gp;
pub mod objectives;
pub mod optimizer;
pub mod pseudo;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
