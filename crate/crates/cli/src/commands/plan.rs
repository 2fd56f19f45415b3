use std::path::Path;

use evkit_core::sampler::{parse_sequence_index, plan_epoch, write_plan};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::read_text;
use crate::config::PipelineConfig;
use crate::error::CliError;

/// Serialized plan for one epoch. Each epoch draws from its own stream of
/// the seeded generator, so sequences are reshuffled between epochs.
pub fn cmd_plan(index: &Path, epoch: u64, cfg: &PipelineConfig) -> Result<String, CliError> {
    let sequences =
        parse_sequence_index(&read_text(index)?).map_err(|e| CliError::from(e).in_file(index))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(epoch);
    let s = &cfg.sampler;
    let batches = plan_epoch(&sequences, s.clip_len, s.n_random, s.n_sequential, &mut rng)?;
    Ok(write_plan(&batches, &sequences))
}
