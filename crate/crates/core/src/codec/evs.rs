//! The fixed-stride EVS container.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "EVS1"
//! 4       4     width   (u32 LE)
//! 8       4     height  (u32 LE)
//! 12      8     count   (u64 LE)
//! 20      16*n  records: t u64, x u16, y u16, p u8, reserved u8 = 0, 2 bytes pad = 0
//! ```
//!
//! Records are 16 bytes: 8 + 2 + 2 + 1 + 1 leaves two bytes which are
//! written as zero and ignored on read.

use super::{CodecError, RecordingHeader};
use crate::event::{validate_stream, Event, EventStream, SensorGeometry};

pub const EVS_HEADER_LEN: usize = 20;
pub const EVS_RECORD_LEN: usize = 16;
const VERSION: u8 = b'1';

pub fn encode_evs(stream: &EventStream) -> Vec<u8> {
    let g = stream.geometry();
    let mut out = Vec::with_capacity(EVS_HEADER_LEN + EVS_RECORD_LEN * stream.len());
    out.extend_from_slice(b"EVS");
    out.push(VERSION);
    out.extend_from_slice(&g.width().to_le_bytes());
    out.extend_from_slice(&g.height().to_le_bytes());
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    for e in stream.events() {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.p);
        out.extend_from_slice(&[0, 0, 0]);
    }
    out
}

pub fn read_evs_header(bytes: &[u8]) -> Result<RecordingHeader, CodecError> {
    if bytes.len() < 4 {
        if b"EVS".starts_with(&bytes[..bytes.len().min(3)]) {
            return Err(CodecError::TruncatedFile {
                offset: bytes.len(),
                needed: EVS_HEADER_LEN - bytes.len(),
            });
        }
        return Err(CodecError::BadMagic);
    }
    if &bytes[..3] != b"EVS" {
        return Err(CodecError::BadMagic);
    }
    if bytes[3] != VERSION {
        return Err(CodecError::VersionUnsupported(bytes[3]));
    }
    if bytes.len() < EVS_HEADER_LEN {
        return Err(CodecError::TruncatedFile {
            offset: bytes.len(),
            needed: EVS_HEADER_LEN - bytes.len(),
        });
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let event_count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let geometry = SensorGeometry::new(width, height).map_err(|e| CodecError::BadHeader {
        offset: 4,
        reason: e.to_string(),
    })?;
    Ok(RecordingHeader {
        geometry,
        event_count,
        format_version: 1,
    })
}

pub fn decode_evs(bytes: &[u8]) -> Result<EventStream, CodecError> {
    let header = read_evs_header(bytes)?;
    let body = &bytes[EVS_HEADER_LEN..];
    let expected = header.event_count as u128 * EVS_RECORD_LEN as u128;
    let have = body.len() as u128;
    if have < expected {
        let whole = body.len() / EVS_RECORD_LEN * EVS_RECORD_LEN;
        return Err(CodecError::TruncatedFile {
            offset: EVS_HEADER_LEN + whole,
            needed: usize::try_from(expected - have).unwrap_or(usize::MAX),
        });
    }
    if have > expected {
        return Err(CodecError::TrailingBytes {
            offset: EVS_HEADER_LEN + expected as usize,
            count: (have - expected) as usize,
        });
    }

    let events: Vec<Event> = body
        .chunks_exact(EVS_RECORD_LEN)
        .map(|r| Event {
            t: u64::from_le_bytes(r[0..8].try_into().unwrap()),
            x: u16::from_le_bytes([r[8], r[9]]),
            y: u16::from_le_bytes([r[10], r[11]]),
            p: r[12],
        })
        .collect();
    validate_stream(events, header.geometry).map_err(|source| CodecError::InvalidEvent {
        offset: EVS_HEADER_LEN + EVS_RECORD_LEN * event_index(&source),
        source,
    })
}

pub(super) fn event_index(err: &crate::event::EventError) -> usize {
    use crate::event::EventError::*;
    match err {
        NonMonotoneTimestamp(i) | OutOfBounds(i) | BadPolarity(i) => *i,
        _ => 0,
    }
}
