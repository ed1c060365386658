pub mod anomaly;
pub mod cl;
pub mod cli;
pub mod codec;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod fl;
pub mod nn;
pub mod report;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
