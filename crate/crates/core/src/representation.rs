//! Dense frame representations of event windows.
//!
//! The stacked histogram splits a window of length `t_frame` into `B` equal
//! bins and counts events per `(polarity, bin, y, x)`. The `(2, B, H, W)`
//! intermediate is flattened polarity-major, so channel `c = p * B + i`.
//! All builders make a single pass over the events.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Event, EventStream, Micros, SensorGeometry, TimeWindow};
use crate::frame::{CountFrame, RealFrame};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepresentationError {
    #[error("event {index} at t={t} lies outside window [{t0}, {t1})")]
    EventOutsideWindow { index: usize, t: Micros, t0: Micros, t1: Micros },
    #[error("event {index} at t={t} is later than the reference time {t_ref}")]
    FutureEvent { index: usize, t: Micros, t_ref: Micros },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl RepresentationError {
    pub fn code(&self) -> &'static str {
        match self {
            RepresentationError::EventOutsideWindow { .. } => "EVENT_OUTSIDE_WINDOW",
            RepresentationError::FutureEvent { .. } => "FUTURE_EVENT",
            RepresentationError::InvalidConfig(_) => "INVALID_CONFIG",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackedHistogramConfig {
    pub t_frame: Micros,
    pub n_bins: u32,
    pub clip_limit: Option<u16>,
}

impl Default for StackedHistogramConfig {
    fn default() -> Self {
        Self {
            t_frame: 50_000,
            n_bins: 10,
            clip_limit: None,
        }
    }
}

impl StackedHistogramConfig {
    pub fn validate(&self) -> Result<(), RepresentationError> {
        if self.n_bins == 0 || self.t_frame == 0 {
            return Err(RepresentationError::InvalidConfig(
                "t_frame and n_bins must be positive".into(),
            ));
        }
        if !self.t_frame.is_multiple_of(self.n_bins as u64) {
            return Err(RepresentationError::InvalidConfig(format!(
                "t_frame {} is not divisible by {} bins",
                self.t_frame, self.n_bins
            )));
        }
        Ok(())
    }

    pub fn t_bin(&self) -> Micros {
        self.t_frame / self.n_bins as u64
    }

    pub fn channels(&self) -> usize {
        2 * self.n_bins as usize
    }
}

/// Stacked histogram over raw events. Events must lie in
/// `[window.t0, window.t0 + cfg.t_frame)`; the window length must equal
/// `cfg.t_frame`.
pub fn stacked_histogram_events(
    events: &[Event],
    geometry: SensorGeometry,
    window: TimeWindow,
    cfg: &StackedHistogramConfig,
) -> Result<CountFrame, RepresentationError> {
    cfg.validate()?;
    if window.duration() != cfg.t_frame {
        return Err(RepresentationError::InvalidConfig(format!(
            "window length {} differs from t_frame {}",
            window.duration(),
            cfg.t_frame
        )));
    }
    let (h, w) = (geometry.height() as usize, geometry.width() as usize);
    let bins = cfg.n_bins as usize;
    let t_bin = cfg.t_bin();
    let t0 = window.t0();
    let plane = h * w;
    let mut frame = CountFrame::zeros(2 * bins, h, w);
    let data = frame.data_mut();
    for (index, e) in events.iter().enumerate() {
        if !window.contains(e.t) {
            return Err(RepresentationError::EventOutsideWindow {
                index,
                t: e.t,
                t0,
                t1: window.t1(),
            });
        }
        let bin = ((e.t - t0) / t_bin) as usize;
        let c = e.p as usize * bins + bin;
        let i = c * plane + e.y as usize * w + e.x as usize;
        data[i] = data[i].saturating_add(1);
    }
    if let Some(limit) = cfg.clip_limit {
        for v in data.iter_mut() {
            *v = (*v).min(limit);
        }
    }
    Ok(frame)
}

pub fn stacked_histogram(
    stream: &EventStream,
    window: TimeWindow,
    cfg: &StackedHistogramConfig,
) -> Result<CountFrame, RepresentationError> {
    stacked_histogram_events(stream.events(), stream.geometry(), window, cfg)
}

/// Two-channel per-polarity count image; a stacked histogram with one bin.
pub fn histogram2d(
    stream: &EventStream,
    window: TimeWindow,
) -> Result<CountFrame, RepresentationError> {
    let cfg = StackedHistogramConfig {
        t_frame: window.duration(),
        n_bins: 1,
        clip_limit: None,
    };
    stacked_histogram(stream, window, &cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayMode {
    #[default]
    Linear,
    Exponential,
}

/// Recency image: for each `(p, y, x)` the decayed age of the most recent
/// event, 0 where no event occurred.
pub fn time_surface(
    stream: &EventStream,
    t_ref: Micros,
    tau: Micros,
    mode: DecayMode,
) -> Result<RealFrame, RepresentationError> {
    if tau == 0 {
        return Err(RepresentationError::InvalidConfig("tau must be positive".into()));
    }
    let g = stream.geometry();
    let (h, w) = (g.height() as usize, g.width() as usize);
    let plane = h * w;
    let mut last: Vec<Option<Micros>> = vec![None; 2 * plane];
    for (index, e) in stream.events().iter().enumerate() {
        if e.t > t_ref {
            return Err(RepresentationError::FutureEvent {
                index,
                t: e.t,
                t_ref,
            });
        }
        last[e.p as usize * plane + e.y as usize * w + e.x as usize] = Some(e.t);
    }
    let tau = tau as f64;
    let data = last
        .into_iter()
        .map(|t| match t {
            None => 0.0,
            Some(t) => {
                let age = (t_ref - t) as f64;
                let v = match mode {
                    DecayMode::Linear => (1.0 - age / tau).max(0.0),
                    DecayMode::Exponential => (-age / tau).exp(),
                };
                v as f32
            }
        })
        .collect();
    Ok(RealFrame::from_vec(2, h, w, data).expect("shape computed from geometry"))
}
