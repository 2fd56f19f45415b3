//! Binary recording formats and the annotation text format.

mod annotations;
mod dat;
mod evs;

use thiserror::Error;

use crate::event::{EventError, SensorGeometry};

pub use annotations::{
    parse_annotations, read_annotations, write_annotations, AnnotatedBox, AnnotationError,
};
pub use dat::{decode_dat, encode_dat, read_dat_header, DatHeader};
pub use evs::{decode_evs, encode_evs, read_evs_header, EVS_HEADER_LEN, EVS_RECORD_LEN};

/// Header information common to both recording formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordingHeader {
    pub geometry: SensorGeometry,
    pub event_count: u64,
    pub format_version: u32,
}

/// Errors from the binary decoders and encoders. Offsets are byte offsets
/// into the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("file truncated at byte {offset}: {needed} more bytes required")]
    TruncatedFile { offset: usize, needed: usize },
    #[error("bad header at byte {offset}: {reason}")]
    BadHeader { offset: usize, reason: String },
    #[error("bad magic: not an EVS container")]
    BadMagic,
    #[error("unsupported container version {0}")]
    VersionUnsupported(u8),
    #[error("{count} unexpected bytes after the last record at byte {offset}")]
    TrailingBytes { offset: usize, count: usize },
    #[error("invalid event record at byte {offset}: {source}")]
    InvalidEvent {
        offset: usize,
        #[source]
        source: EventError,
    },
    #[error("value does not fit the on-disk field: {0}")]
    Overflow(String),
}

impl CodecError {
    pub fn code(&self) -> &'static str {
        match self {
            CodecError::TruncatedFile { .. } => "TRUNCATED_FILE",
            CodecError::BadHeader { .. } => "BAD_HEADER",
            CodecError::BadMagic => "BAD_MAGIC",
            CodecError::VersionUnsupported(_) => "VERSION_UNSUPPORTED",
            CodecError::TrailingBytes { .. } => "TRAILING_BYTES",
            CodecError::InvalidEvent { source, .. } => source.code(),
            CodecError::Overflow(_) => "OVERFLOW",
        }
    }
}

/// Decodes either container, choosing by the leading magic bytes.
pub fn decode_recording(
    bytes: &[u8],
    fallback: Option<SensorGeometry>,
) -> Result<crate::event::EventStream, CodecError> {
    if bytes.starts_with(b"EVS") {
        decode_evs(bytes)
    } else {
        decode_dat(bytes, fallback)
    }
}
