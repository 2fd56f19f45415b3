use std::fmt;
use std::path::Path;
use std::time::Instant;

use evkit_core::codec::write_annotations;
use evkit_core::event::partition_windows;
use evkit_core::geometry::{downscale, map_boxes, pad_to_multiple};
use evkit_core::representation::stacked_histogram_events;
use evkit_core::{AnyFrame, Event, SensorGeometry, TimeWindow};
use rayon::prelude::*;

use super::{create_dir, load_annotations, load_recording, write_file};
use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::index::{frame_file_name, write_index, IndexEntry, ANNOTATIONS_FILE, INDEX_FILE};

/// Stacked histogram of one window, then optional downscale, then padding.
/// Frames stay integer counts unless they were resampled.
pub fn build_frame(
    events: &[Event],
    geometry: SensorGeometry,
    window: TimeWindow,
    cfg: &PipelineConfig,
) -> Result<AnyFrame, CliError> {
    let counts = stacked_histogram_events(events, geometry, window, &cfg.representation)?;
    let multiple = cfg.geometry.pad_multiple;
    if cfg.geometry.downscale > 1 {
        let small = downscale(&counts, cfg.geometry.downscale, cfg.geometry.resample())?;
        Ok(AnyFrame::Real(pad_to_multiple(&small, multiple)?.0))
    } else {
        Ok(AnyFrame::Counts(pad_to_multiple(&counts, multiple)?.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvertSummary {
    pub events: usize,
    pub frames: usize,
    pub frame_shape: (usize, usize, usize),
    pub annotations_kept: usize,
    pub annotations_dropped: usize,
    pub seconds: f64,
}

impl ConvertSummary {
    pub fn events_per_second(&self) -> f64 {
        if self.seconds > 0.0 {
            self.events as f64 / self.seconds
        } else {
            0.0
        }
    }
}

impl fmt::Display for ConvertSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (c, h, w) = self.frame_shape;
        writeln!(f, "frames={} shape={c}x{h}x{w}", self.frames)?;
        writeln!(
            f,
            "annotations_kept={} annotations_dropped={}",
            self.annotations_kept, self.annotations_dropped
        )?;
        writeln!(
            f,
            "events={} seconds={:.3} events_per_s={:.0}",
            self.events,
            self.seconds,
            self.events_per_second()
        )
    }
}

/// Converts a recording into one EVF file per window plus `index.txt` and,
/// when annotations are given, `annotations.txt` with boxes mapped to the
/// output resolution.
///
/// A box at time `t` belongs to the window with `t0 < t <= t1`, i.e. the
/// frame built from the events just before it. Boxes outside every window
/// are dropped.
pub fn cmd_convert(
    input: &Path,
    annotations: Option<&Path>,
    output: &Path,
    cfg: &PipelineConfig,
) -> Result<ConvertSummary, CliError> {
    let started = Instant::now();
    let stream = load_recording(input, cfg)?;
    let t_frame = cfg.representation.t_frame;
    let slices = partition_windows(&stream, t_frame, cfg.convert.t_start)
        .map_err(|e| CliError::from(e).in_file(input))?;
    create_dir(output)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.thread_count())
        .build()
        .map_err(|e| CliError::new("THREAD_POOL", e.to_string()))?;
    let geometry = stream.geometry();
    let events = stream.events();
    pool.install(|| {
        slices.par_iter().enumerate().try_for_each(|(k, s)| {
            let frame = build_frame(&events[s.range.clone()], geometry, s.window, cfg)?;
            let bytes = frame.to_evf()?;
            write_file(&output.join(frame_file_name(k)), bytes)
        })
    })?;

    let mut ids: Vec<Vec<usize>> = vec![Vec::new(); slices.len()];
    let (mut kept, mut dropped) = (0, 0);
    if let Some(path) = annotations {
        let scale = 1.0 / cfg.geometry.downscale as f64;
        let boxes = map_boxes(&load_annotations(path)?, (scale, scale), (0.0, 0.0))?;
        let mut out = Vec::with_capacity(boxes.len());
        for b in boxes {
            let window = b
                .t
                .checked_sub(cfg.convert.t_start)
                .filter(|&dt| dt > 0)
                .map(|dt| (dt.div_ceil(t_frame) - 1) as usize)
                .filter(|&k| k < slices.len());
            match window {
                Some(k) => {
                    ids[k].push(out.len());
                    out.push(b);
                }
                None => dropped += 1,
            }
        }
        kept = out.len();
        let mut text = Vec::new();
        write_annotations(&mut text, &out).expect("writing to memory");
        write_file(&output.join(ANNOTATIONS_FILE), text)?;
    }

    let source: String = input
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
        .chars()
        .map(|c| if c.is_whitespace() { '_' } else { c })
        .collect();
    let entries: Vec<IndexEntry> = slices
        .iter()
        .zip(ids)
        .enumerate()
        .map(|(frame, (s, annotations))| IndexEntry {
            frame,
            t0: s.window.t0(),
            t1: s.window.t1(),
            events: s.range.len(),
            partial: s.partial,
            source: source.clone(),
            annotations,
        })
        .collect();
    write_file(&output.join(INDEX_FILE), write_index(&entries))?;

    Ok(ConvertSummary {
        events: stream.len(),
        frames: slices.len(),
        frame_shape: cfg.frame_shape(geometry),
        annotations_kept: kept,
        annotations_dropped: dropped,
        seconds: started.elapsed().as_secs_f64(),
    })
}
