use std::fmt;
use std::path::Path;

use evkit_core::{EventStream, Micros, SensorGeometry};

use super::load_recording;
use crate::config::PipelineConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingStats {
    pub geometry: SensorGeometry,
    pub events: usize,
    pub positive: usize,
    pub negative: usize,
    pub first_t: Option<Micros>,
    pub last_t: Option<Micros>,
    /// Largest number of events at a single pixel, both polarities together.
    pub max_pixel_count: u64,
}

impl RecordingStats {
    pub fn from_stream(stream: &EventStream) -> Self {
        let g = stream.geometry();
        let mut counts = vec![0u64; g.pixel_count()];
        let mut positive = 0;
        for e in stream.events() {
            counts[e.y as usize * g.width() as usize + e.x as usize] += 1;
            positive += e.p as usize;
        }
        Self {
            geometry: g,
            events: stream.len(),
            positive,
            negative: stream.len() - positive,
            first_t: stream.first_timestamp(),
            last_t: stream.last_timestamp(),
            max_pixel_count: counts.into_iter().max().unwrap_or(0),
        }
    }

    pub fn duration_us(&self) -> Micros {
        match (self.first_t, self.last_t) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        }
    }

    /// Events per second over the span between first and last event.
    pub fn rate(&self) -> f64 {
        match self.duration_us() {
            0 => 0.0,
            d => self.events as f64 * 1e6 / d as f64,
        }
    }
}

impl fmt::Display for RecordingStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = |v: Option<Micros>| v.map_or("-".to_string(), |v| v.to_string());
        writeln!(f, "width={} height={}", self.geometry.width(), self.geometry.height())?;
        writeln!(f, "events={}", self.events)?;
        writeln!(f, "positive={} negative={}", self.positive, self.negative)?;
        writeln!(f, "first_t={} last_t={}", t(self.first_t), t(self.last_t))?;
        writeln!(f, "duration_us={}", self.duration_us())?;
        writeln!(f, "rate_eps={:.3}", self.rate())?;
        writeln!(f, "max_pixel_count={}", self.max_pixel_count)
    }
}

pub fn cmd_stats(input: &Path, cfg: &PipelineConfig) -> Result<RecordingStats, CliError> {
    Ok(RecordingStats::from_stream(&load_recording(input, cfg)?))
}
