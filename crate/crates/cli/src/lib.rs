//! Batch front end for the emocouple pipeline: session config, stage
//! runners and report emission.

pub mod config;
pub mod failure;
pub mod pipeline;
pub mod reference;
pub mod report;

pub use config::Config;
pub use failure::Failure;
pub use pipeline::Layout;
