use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use evkit_core::augment::{
    apply_to_boxes, apply_to_frame, augment_clip, sample_augmentation, AugmentRng,
};
use evkit_core::codec::write_annotations;
use evkit_core::frame::{decode_evf, Element};
use evkit_core::{AnnotatedBox, AnyFrame, FrameTensor};

use super::{create_dir, load_annotations, read_bytes, read_text, write_file};
use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::index::{frame_file_name, parse_index, write_index, IndexEntry, ANNOTATIONS_FILE, INDEX_FILE};

pub const AUGMENT_LOG_FILE: &str = "augment_log.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentMode {
    /// Independent draw per frame.
    Frame,
    /// One geometric draw per clip of `clip_len` frames; erasure per frame.
    Video,
}

impl FromStr for AugmentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "frame" => Ok(AugmentMode::Frame),
            "video" => Ok(AugmentMode::Video),
            _ => Err(format!("unknown mode {s:?} (expected frame or video)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentSummary {
    pub frames: usize,
    pub clips: usize,
    pub boxes_in: usize,
    pub boxes_out: usize,
}

impl fmt::Display for AugmentSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frames={} clips={}", self.frames, self.clips)?;
        writeln!(f, "boxes_in={} boxes_out={}", self.boxes_in, self.boxes_out)
    }
}

fn erase_text(aug: &evkit_core::augment::SampledAugmentation) -> String {
    aug.erasure.map_or("-".to_string(), |r| r.to_string())
}

struct ClipOutput {
    frames: Vec<Vec<u8>>,
    boxes: Vec<Vec<AnnotatedBox>>,
}

fn augment_typed<T: Element>(
    frames: &[FrameTensor<T>],
    boxes: &[Vec<AnnotatedBox>],
    first_frame: usize,
    clip: usize,
    mode: AugmentMode,
    cfg: &PipelineConfig,
    log: &mut String,
) -> Result<ClipOutput, CliError> {
    let root = AugmentRng::new(cfg.seed).fork(clip as u64);
    let mut out = ClipOutput {
        frames: Vec::with_capacity(frames.len()),
        boxes: Vec::with_capacity(frames.len()),
    };
    match mode {
        AugmentMode::Frame => {
            let (frame, frame_boxes) = (&frames[0], &boxes[0]);
            let aug = sample_augmentation(&cfg.augment, frame.width(), frame.height(), &root)?;
            writeln!(log, "frame={first_frame} {} erase={}", aug.geometric, erase_text(&aug)).unwrap();
            out.frames.push(apply_to_frame(frame, &aug)?.to_evf()?);
            out.boxes.push(apply_to_boxes(frame_boxes, &aug, &cfg.augment.boxes)?);
        }
        AugmentMode::Video => {
            let result = augment_clip(frames, boxes, &cfg.augment, &root)?;
            let last = first_frame + frames.len() - 1;
            writeln!(log, "clip={clip} first={first_frame} last={last} {}", result.draws[0].geometric).unwrap();
            for (k, aug) in result.draws.iter().enumerate() {
                writeln!(log, "frame={} clip={clip} erase={}", first_frame + k, erase_text(aug)).unwrap();
            }
            for f in &result.frames {
                out.frames.push(f.to_evf()?);
            }
            out.boxes = result.boxes;
        }
    }
    Ok(out)
}

/// Augments a directory produced by `convert`, writing frames with the same
/// names and dtypes, a new `annotations.txt` and `index.txt`, and a log of
/// every draw.
pub fn cmd_augment(
    input: &Path,
    output: &Path,
    mode: AugmentMode,
    cfg: &PipelineConfig,
) -> Result<AugmentSummary, CliError> {
    let index_path = input.join(INDEX_FILE);
    let entries = parse_index(&read_text(&index_path)?).map_err(|e| e.in_file(&index_path))?;
    let ann_path = input.join(ANNOTATIONS_FILE);
    let boxes = if ann_path.exists() {
        load_annotations(&ann_path)?
    } else {
        Vec::new()
    };
    for e in &entries {
        if let Some(&id) = e.annotations.iter().find(|&&id| id >= boxes.len()) {
            return Err(CliError::new(
                "PARSE_ERROR",
                format!("frame {} refers to missing annotation {id}", e.frame),
            )
            .in_file(&index_path));
        }
    }
    create_dir(output)?;

    let clip_len = match mode {
        AugmentMode::Frame => 1,
        AugmentMode::Video => cfg.sampler.clip_len,
    };
    let mut log = String::new();
    let mut out_boxes: Vec<AnnotatedBox> = Vec::new();
    let mut out_entries: Vec<IndexEntry> = Vec::with_capacity(entries.len());
    let mut clips = 0;
    for (clip, chunk) in entries.chunks(clip_len).enumerate() {
        let mut decoded = Vec::with_capacity(chunk.len());
        for e in chunk {
            let path = input.join(frame_file_name(e.frame));
            decoded.push(decode_evf(&read_bytes(&path)?).map_err(|err| CliError::from(err).in_file(&path))?);
        }
        let clip_boxes: Vec<Vec<AnnotatedBox>> = chunk
            .iter()
            .map(|e| e.annotations.iter().map(|&id| boxes[id]).collect())
            .collect();
        let first = chunk[0].frame;
        let result = if decoded.iter().all(|f| matches!(f, AnyFrame::Counts(_))) {
            let frames: Vec<_> = decoded
                .into_iter()
                .map(|f| match f {
                    AnyFrame::Counts(c) => c,
                    AnyFrame::Real(_) => unreachable!(),
                })
                .collect();
            augment_typed(&frames, &clip_boxes, first, clip, mode, cfg, &mut log)?
        } else if decoded.iter().all(|f| matches!(f, AnyFrame::Real(_))) {
            let frames: Vec<_> = decoded
                .into_iter()
                .map(|f| match f {
                    AnyFrame::Real(r) => r,
                    AnyFrame::Counts(_) => unreachable!(),
                })
                .collect();
            augment_typed(&frames, &clip_boxes, first, clip, mode, cfg, &mut log)?
        } else {
            return Err(CliError::new(
                "SHAPE_MISMATCH",
                format!("clip starting at frame {first} mixes frame dtypes"),
            ));
        };
        for ((e, bytes), frame_boxes) in chunk.iter().zip(result.frames).zip(result.boxes) {
            write_file(&output.join(frame_file_name(e.frame)), bytes)?;
            let ids = (out_boxes.len()..out_boxes.len() + frame_boxes.len()).collect();
            out_boxes.extend(frame_boxes);
            out_entries.push(IndexEntry {
                annotations: ids,
                ..e.clone()
            });
        }
        clips += 1;
    }

    let mut text = Vec::new();
    write_annotations(&mut text, &out_boxes).expect("writing to memory");
    write_file(&output.join(ANNOTATIONS_FILE), text)?;
    write_file(&output.join(INDEX_FILE), write_index(&out_entries))?;
    write_file(&output.join(AUGMENT_LOG_FILE), log)?;
    Ok(AugmentSummary {
        frames: entries.len(),
        clips,
        boxes_in: entries.iter().map(|e| e.annotations.len()).sum(),
        boxes_out: out_boxes.len(),
    })
}
