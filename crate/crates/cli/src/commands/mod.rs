mod augment;
mod convert;
mod evaluate;
mod plan;
mod stats;

pub use augment::{cmd_augment, AugmentMode, AugmentSummary, AUGMENT_LOG_FILE};
pub use convert::{build_frame, cmd_convert, ConvertSummary};
pub use evaluate::cmd_evaluate;
pub use plan::cmd_plan;
pub use stats::{cmd_stats, RecordingStats};

use std::fs;
use std::path::Path;

use evkit_core::codec::{decode_recording, parse_annotations};
use evkit_core::{AnnotatedBox, EventStream};

use crate::config::PipelineConfig;
use crate::error::CliError;

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn load_recording(path: &Path, cfg: &PipelineConfig) -> Result<EventStream, CliError> {
    let bytes = read_bytes(path)?;
    let fallback = cfg.geometry.fallback_geometry()?;
    decode_recording(&bytes, fallback).map_err(|e| CliError::from(e).in_file(path))
}

pub(crate) fn load_annotations(path: &Path) -> Result<Vec<AnnotatedBox>, CliError> {
    parse_annotations(&read_text(path)?).map_err(|e| CliError::from(e).in_file(path))
}
