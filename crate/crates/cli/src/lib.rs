//! Batch front end for the event-camera pipeline: convert recordings to
//! frame tensors, inspect them, augment, plan training epochs and score
//! detections.

pub mod commands;
pub mod config;
pub mod error;
pub mod index;

pub use config::{Overrides, PipelineConfig, Preset};
pub use error::CliError;
