//! Line-delimited bounding-box records.
//!
//! ```text
//! t=<u64> x=<f32> y=<f32> w=<f32> h=<f32> class=<u8> score=<f32> track=<i64|->
//! ```
//!
//! `score` defaults to 1.0 and `track` to `-` when omitted. Blank lines and
//! lines starting with `#` are skipped.

use std::fmt;
use std::io::{self, Read, Write};

use thiserror::Error;

use crate::event::Micros;

/// A ground-truth or predicted box. `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotatedBox {
    pub t: Micros,
    pub x: f32,
    pub y: f32,
    pub w: f32,
    pub h: f32,
    pub class_id: u8,
    pub score: f32,
    pub track_id: Option<i64>,
}

impl AnnotatedBox {
    /// A ground-truth box: score 1.0, no track.
    pub fn new(t: Micros, x: f32, y: f32, w: f32, h: f32, class_id: u8) -> Self {
        Self {
            t,
            x,
            y,
            w,
            h,
            class_id,
            score: 1.0,
            track_id: None,
        }
    }

    pub fn with_score(mut self, score: f32) -> Self {
        self.score = score;
        self
    }

    pub fn with_track(mut self, track: i64) -> Self {
        self.track_id = Some(track);
        self
    }

    pub fn area(&self) -> f64 {
        self.w as f64 * self.h as f64
    }

    pub fn check(&self) -> Result<(), String> {
        let finite = [self.x, self.y, self.w, self.h, self.score]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err("non-finite field".into());
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(format!("box size must be positive, got {}x{}", self.w, self.h));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        Ok(())
    }
}

impl fmt::Display for AnnotatedBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t={} x={} y={} w={} h={} class={} score={} track=",
            self.t, self.x, self.y, self.w, self.h, self.class_id, self.score
        )?;
        match self.track_id {
            Some(id) => write!(f, "{id}"),
            None => f.write_str("-"),
        }
    }
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl AnnotationError {
    pub fn code(&self) -> &'static str {
        match self {
            AnnotationError::Parse { .. } => "PARSE_ERROR",
            AnnotationError::Io(_) => "IO_ERROR",
        }
    }
}

fn parse_line(text: &str) -> Result<AnnotatedBox, String> {
    let mut fields: [Option<&str>; 8] = [None; 8];
    const KEYS: [&str; 8] = ["t", "x", "y", "w", "h", "class", "score", "track"];
    for token in text.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, found {token:?}"))?;
        let slot = KEYS
            .iter()
            .position(|k| *k == key)
            .ok_or_else(|| format!("unknown field {key:?}"))?;
        if fields[slot].replace(value).is_some() {
            return Err(format!("duplicate field {key:?}"));
        }
    }
    fn req<'a>(fields: &[Option<&'a str>; 8], i: usize) -> Result<&'a str, String> {
        fields[i].ok_or_else(|| format!("missing field {:?}", KEYS[i]))
    }
    fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
        v.parse().map_err(|_| format!("bad value for {key}: {v:?}"))
    }

    let b = AnnotatedBox {
        t: num("t", req(&fields, 0)?)?,
        x: num("x", req(&fields, 1)?)?,
        y: num("y", req(&fields, 2)?)?,
        w: num("w", req(&fields, 3)?)?,
        h: num("h", req(&fields, 4)?)?,
        class_id: num("class", req(&fields, 5)?)?,
        score: match fields[6] {
            Some(v) => num("score", v)?,
            None => 1.0,
        },
        track_id: match fields[7] {
            None | Some("-") => None,
            Some(v) => Some(num("track", v)?),
        },
    };
    b.check()?;
    Ok(b)
}

/// Parses records, returning them stably sorted by timestamp.
pub fn parse_annotations(text: &str) -> Result<Vec<AnnotatedBox>, AnnotationError> {
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let b = parse_line(trimmed).map_err(|reason| AnnotationError::Parse {
            line: i + 1,
            reason,
        })?;
        boxes.push(b);
    }
    boxes.sort_by_key(|b| b.t);
    Ok(boxes)
}

pub fn read_annotations<R: Read>(mut reader: R) -> Result<Vec<AnnotatedBox>, AnnotationError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    parse_annotations(&text)
}

pub fn write_annotations<W: Write>(mut writer: W, boxes: &[AnnotatedBox]) -> io::Result<()> {
    for b in boxes {
        writeln!(writer, "{b}")?;
    }
    Ok(())
}
