use std::path::Path;

use evkit_core::detmetrics::{evaluate, Report};

use super::load_annotations;
use crate::config::PipelineConfig;
use crate::error::CliError;

pub fn cmd_evaluate(
    predictions: &Path,
    ground_truth: &Path,
    cfg: &PipelineConfig,
) -> Result<Report, CliError> {
    let preds = load_annotations(predictions)?;
    let gts = load_annotations(ground_truth)?;
    Ok(evaluate(&preds, &gts, &cfg.eval)?)
}
