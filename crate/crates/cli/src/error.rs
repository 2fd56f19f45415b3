use std::fmt;
use std::io;
use std::path::Path;

use evkit_core::augment::AugmentError;
use evkit_core::codec::{AnnotationError, CodecError};
use evkit_core::detmetrics::EvalError;
use evkit_core::event::EventError;
use evkit_core::frame::FrameError;
use evkit_core::geometry::GeometryError;
use evkit_core::representation::RepresentationError;
use evkit_core::sampler::SamplerError;

/// Error carrying a stable machine-readable code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: &'static str,
    pub msg: String,
}

impl CliError {
    pub fn new(code: &'static str, msg: impl Into<String>) -> Self {
        Self {
            code,
            msg: msg.into(),
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::new("CONFIG_ERROR", msg)
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Self::new("USAGE_ERROR", msg)
    }

    pub fn io(path: &Path, err: io::Error) -> Self {
        Self::new("IO_ERROR", format!("{}: {err}", path.display()))
    }

    /// Prefixes the message with the file it concerns.
    pub fn in_file(mut self, path: &Path) -> Self {
        self.msg = format!("{}: {}", path.display(), self.msg);
        self
    }

    /// The single line printed on failure.
    pub fn line(&self) -> String {
        let msg = self.msg.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        format!("error code={} msg=\"{msg}\"", self.code)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.msg)
    }
}

impl std::error::Error for CliError {}

macro_rules! from_coded {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::new(e.code(), e.to_string())
            }
        }
    )*};
}

from_coded!(
    AugmentError,
    AnnotationError,
    CodecError,
    EvalError,
    EventError,
    FrameError,
    GeometryError,
    RepresentationError,
    SamplerError
);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_is_single_and_quoted() {
        let e = CliError::new("BAD_HEADER", "say \"hi\"\nthere").in_file(Path::new("a.dat"));
        assert_eq!(e.line(), "error code=BAD_HEADER msg=\"a.dat: say \\\"hi\\\" there\"");
    }
}
