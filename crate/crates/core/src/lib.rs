pub mod cli;
pub mod cloudio;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod ground;
pub mod localization;
pub mod mapcraft;
mod geometry;
pub mod registration;
pub mod simulation;
pub mod spatial;
pub mod traversability;

pub use error::{Error, Result};
