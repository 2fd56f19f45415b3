//! Reader for the automotive DAT 2.0 layout.
//!
//! A DAT file starts with optional ASCII comment lines, each beginning with
//! `%` and terminated by `\n`. Then come one byte of event type and one byte
//! of event size (always 8), followed by 8-byte records of two little-endian
//! u32 words:
//!
//! ```text
//! word 0: timestamp (us)
//! word 1: bits 0-13 x | bits 14-27 y | bits 28-31 polarity (nonzero => 1)
//! ```
//!
//! 32-bit timestamps wrap after ~71 minutes; no unwrapping is attempted.

use super::evs::event_index;
use super::CodecError;
use crate::event::{validate_stream, Event, EventStream, SensorGeometry};

const RECORD_LEN: usize = 8;
const X_MASK: u32 = 0x3FFF;
const Y_SHIFT: u32 = 14;
const P_SHIFT: u32 = 28;

/// Fields recovered from the `%` comment lines.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatHeader {
    pub geometry: Option<SensorGeometry>,
    pub version: Option<u32>,
    pub event_type: Option<u8>,
    /// Byte offset of the first event record.
    pub body_offset: usize,
    /// Raw comment lines without the leading `%`.
    pub lines: Vec<String>,
}

fn bad_header(offset: usize, reason: impl Into<String>) -> CodecError {
    CodecError::BadHeader {
        offset,
        reason: reason.into(),
    }
}

fn parse_dim(offset: usize, key: &str, value: &str) -> Result<u32, CodecError> {
    value
        .trim()
        .parse::<u32>()
        .map_err(|_| bad_header(offset, format!("{key} is not an integer: {value:?}")))
}

fn apply_header_line(
    line: &str,
    offset: usize,
    width: &mut Option<u32>,
    height: &mut Option<u32>,
    version: &mut Option<u32>,
) -> Result<(), CodecError> {
    let line = line.trim();
    let (key, value) = match line.split_once(char::is_whitespace) {
        Some((k, v)) => (k, v.trim()),
        None => (line, ""),
    };
    match key.to_ascii_lowercase().as_str() {
        "width" => *width = Some(parse_dim(offset, key, value)?),
        "height" => *height = Some(parse_dim(offset, key, value)?),
        "version" => *version = value.parse().ok(),
        "geometry" => {
            let (w, h) = value
                .split_once('x')
                .ok_or_else(|| bad_header(offset, format!("geometry must be WxH: {value:?}")))?;
            *width = Some(parse_dim(offset, "width", w)?);
            *height = Some(parse_dim(offset, "height", h)?);
        }
        // e.g. "% format EVT2;height=720;width=1280"
        "format" => {
            for field in value.split(';') {
                if let Some((k, v)) = field.split_once('=') {
                    match k.trim().to_ascii_lowercase().as_str() {
                        "width" => *width = Some(parse_dim(offset, "width", v)?),
                        "height" => *height = Some(parse_dim(offset, "height", v)?),
                        _ => {}
                    }
                }
            }
        }
        _ => {}
    }
    Ok(())
}

/// Parses the comment block and the event type/size bytes.
pub fn read_dat_header(bytes: &[u8]) -> Result<DatHeader, CodecError> {
    let mut pos = 0;
    let mut lines = Vec::new();
    let (mut width, mut height, mut version) = (None, None, None);
    while pos < bytes.len() && bytes[pos] == b'%' {
        let Some(len) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(CodecError::TruncatedFile {
                offset: bytes.len(),
                needed: 1,
            });
        };
        let line = String::from_utf8_lossy(&bytes[pos + 1..pos + len]).into_owned();
        apply_header_line(&line, pos, &mut width, &mut height, &mut version)?;
        lines.push(line);
        pos += len + 1;
    }

    let geometry = match (width, height) {
        (Some(w), Some(h)) => {
            Some(SensorGeometry::new(w, h).map_err(|e| bad_header(0, e.to_string()))?)
        }
        (None, None) => None,
        _ => return Err(bad_header(0, "header gives only one of width and height")),
    };

    let mut header = DatHeader {
        geometry,
        version,
        event_type: None,
        body_offset: pos,
        lines,
    };
    match bytes.len() - pos {
        // Header only: no records follow.
        0 => Ok(header),
        1 => Err(CodecError::TruncatedFile {
            offset: bytes.len(),
            needed: 1,
        }),
        _ => {
            let (event_type, event_size) = (bytes[pos], bytes[pos + 1]);
            if event_size as usize != RECORD_LEN {
                return Err(bad_header(
                    pos + 1,
                    format!("event size must be {RECORD_LEN}, found {event_size}"),
                ));
            }
            header.event_type = Some(event_type);
            header.body_offset = pos + 2;
            Ok(header)
        }
    }
}

/// Decodes a DAT recording. Header geometry wins over `fallback`; one of the
/// two must be present.
pub fn decode_dat(
    bytes: &[u8],
    fallback: Option<SensorGeometry>,
) -> Result<EventStream, CodecError> {
    let header = read_dat_header(bytes)?;
    let geometry = header
        .geometry
        .or(fallback)
        .ok_or_else(|| bad_header(0, "no sensor geometry in header and none supplied"))?;
    let body_start = header.body_offset;
    let body = &bytes[body_start..];
    let whole = body.len() / RECORD_LEN * RECORD_LEN;
    if whole != body.len() {
        return Err(CodecError::TruncatedFile {
            offset: body_start + whole,
            needed: RECORD_LEN - (body.len() - whole),
        });
    }

    let events: Vec<Event> = body
        .chunks_exact(RECORD_LEN)
        .map(|r| {
            let t = u32::from_le_bytes([r[0], r[1], r[2], r[3]]);
            let packed = u32::from_le_bytes([r[4], r[5], r[6], r[7]]);
            Event {
                t: t as u64,
                x: (packed & X_MASK) as u16,
                y: ((packed >> Y_SHIFT) & X_MASK) as u16,
                p: ((packed >> P_SHIFT) != 0) as u8,
            }
        })
        .collect();
    validate_stream(events, geometry).map_err(|source| CodecError::InvalidEvent {
        offset: body_start + RECORD_LEN * event_index(&source),
        source,
    })
}

/// Writes a DAT recording with `Version`, `Width` and `Height` comment lines
/// and event type 0.
pub fn encode_dat(stream: &EventStream) -> Result<Vec<u8>, CodecError> {
    let g = stream.geometry();
    if g.width() > X_MASK + 1 || g.height() > X_MASK + 1 {
        return Err(CodecError::Overflow(format!(
            "geometry {}x{} exceeds 14-bit coordinates",
            g.width(),
            g.height()
        )));
    }
    let mut out = format!(
        "% Version 2\n% Width {}\n% Height {}\n",
        g.width(),
        g.height()
    )
    .into_bytes();
    out.reserve(2 + RECORD_LEN * stream.len());
    out.push(0);
    out.push(RECORD_LEN as u8);
    for e in stream.events() {
        let t = u32::try_from(e.t)
            .map_err(|_| CodecError::Overflow(format!("timestamp {} exceeds 32 bits", e.t)))?;
        let packed = e.x as u32 | (e.y as u32) << Y_SHIFT | (e.p as u32) << P_SHIFT;
        out.extend_from_slice(&t.to_le_bytes());
        out.extend_from_slice(&packed.to_le_bytes());
    }
    Ok(out)
}
