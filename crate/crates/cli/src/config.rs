//! Pipeline configuration: built-in defaults, optionally a dataset preset,
//! then a TOML file, then command-line flags. Later layers win.
//!
//! ```toml
//! preset = "gen4-like"
//! seed = 7
//!
//! [representation]
//! n_bins = 10
//!
//! [geometry]
//! resample = "bicubic"
//! ```

use std::fmt;
use std::str::FromStr;

use evkit_core::augment::AugmentConfig;
use evkit_core::detmetrics::EvalConfig;
use evkit_core::geometry::{Resample, ResampleKind};
use evkit_core::representation::StackedHistogramConfig;
use evkit_core::{Micros, SensorGeometry};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "gen1-like")]
    Gen1Like,
    #[serde(rename = "gen4-like")]
    Gen4Like,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Gen1Like => "gen1-like",
            Preset::Gen4Like => "gen4-like",
        }
    }

    fn apply(&self, cfg: &mut PipelineConfig) {
        cfg.preset = Some(*self);
        match self {
            Preset::Gen1Like => {
                cfg.geometry.sensor_width = Some(304);
                cfg.geometry.sensor_height = Some(240);
                cfg.geometry.downscale = 1;
                cfg.sampler.clip_len = 21;
            }
            Preset::Gen4Like => {
                cfg.geometry.sensor_width = Some(1280);
                cfg.geometry.sensor_height = Some(720);
                cfg.geometry.downscale = 2;
                cfg.geometry.resample = ResampleKind::Bilinear;
                cfg.sampler.clip_len = 10;
            }
        }
        cfg.geometry.pad_multiple = 32;
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gen1-like" => Ok(Preset::Gen1Like),
            "gen4-like" => Ok(Preset::Gen4Like),
            _ => Err(format!("unknown preset {s:?} (expected gen1-like or gen4-like)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Used for DAT files whose header carries no geometry.
    pub sensor_width: Option<u32>,
    pub sensor_height: Option<u32>,
    pub downscale: usize,
    pub resample: ResampleKind,
    pub bicubic_a: f64,
    pub pad_multiple: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            sensor_width: None,
            sensor_height: None,
            downscale: 1,
            resample: ResampleKind::Bilinear,
            bicubic_a: -0.5,
            pad_multiple: 1,
        }
    }
}

impl GeometryConfig {
    pub fn resample(&self) -> Resample {
        self.resample.with_bicubic_a(self.bicubic_a)
    }

    pub fn fallback_geometry(&self) -> Result<Option<SensorGeometry>, CliError> {
        match (self.sensor_width, self.sensor_height) {
            (Some(w), Some(h)) => SensorGeometry::new(w, h)
                .map(Some)
                .map_err(|e| CliError::config(e.to_string())),
            (None, None) => Ok(None),
            _ => Err(CliError::config("set both sensor_width and sensor_height, or neither")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ConvertConfig {
    /// Start of the window grid.
    pub t_start: Micros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub clip_len: usize,
    pub n_random: usize,
    pub n_sequential: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            clip_len: 21,
            n_random: 4,
            n_sequential: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub preset: Option<Preset>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub representation: StackedHistogramConfig,
    pub geometry: GeometryConfig,
    pub convert: ConvertConfig,
    pub augment: AugmentConfig,
    pub sampler: SamplerConfig,
    pub eval: EvalConfig,
}

/// Flag values that override the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl PipelineConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = Self::default();
        preset.apply(&mut cfg);
        cfg
    }

    /// Resolves the layered configuration from optional TOML text and flags.
    pub fn resolve(file: Option<&str>, flags: Overrides) -> Result<Self, CliError> {
        let table: toml::Table = match file {
            Some(text) => toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?,
            None => toml::Table::new(),
        };
        let file_preset = match table.get("preset") {
            Some(v) => Some(
                v.as_str()
                    .ok_or_else(|| CliError::config("preset must be a string"))?
                    .parse::<Preset>()
                    .map_err(CliError::config)?,
            ),
            None => None,
        };
        let base = match flags.preset.or(file_preset) {
            Some(p) => Self::preset(p),
            None => Self::default(),
        };
        let mut merged = toml::Table::try_from(&base).map_err(|e| CliError::config(e.to_string()))?;
        merge(&mut merged, table);
        let mut cfg: PipelineConfig = merged.try_into().map_err(|e: toml::de::Error| CliError::config(e.to_string()))?;
        if let Some(p) = flags.preset {
            cfg.preset = Some(p);
        }
        if let Some(seed) = flags.seed {
            cfg.seed = seed;
        }
        if flags.threads.is_some() {
            cfg.threads = flags.threads;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.representation
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.augment.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.eval.validate().map_err(|e| CliError::config(e.to_string()))?;
        self.geometry.fallback_geometry()?;
        if self.geometry.downscale == 0 || self.geometry.pad_multiple == 0 {
            return Err(CliError::config("downscale and pad_multiple must be >= 1"));
        }
        if self.sampler.clip_len == 0 {
            return Err(CliError::config("clip_len must be >= 1"));
        }
        if self.threads == Some(0) {
            return Err(CliError::config("threads must be >= 1"));
        }
        Ok(())
    }

    /// Output frame shape `(C, H, W)` for a sensor of the given size.
    pub fn frame_shape(&self, geometry: SensorGeometry) -> (usize, usize, usize) {
        let f = self.geometry.downscale;
        let m = self.geometry.pad_multiple;
        let h = (geometry.height() as usize / f).div_ceil(m) * m;
        let w = (geometry.width() as usize / f).div_ceil(m) * m;
        (self.representation.channels(), h, w)
    }

    pub fn thread_count(&self) -> usize {
        self.threads.unwrap_or(1)
    }
}
