//! Frameless ALOHA with dynamic user activation: exact throughput and
//! average peak Age of Information from a Markov analysis of the SIC
//! decoder, a slot-level simulator, and a brute-force enumeration oracle.

pub mod analysis;
pub mod aoi;
pub mod config;
pub mod error;
pub mod experiment;
pub mod markov;
pub mod optimize;
pub mod prob;
pub mod sic;
pub mod sim;
pub mod tables;

pub use analysis::{analyze, analyze_with, Analysis};
pub use config::SystemConfig;
pub use error::{Error, Result};
