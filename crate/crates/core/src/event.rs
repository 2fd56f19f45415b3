//! Event types, stream validation and fixed-window partitioning.
//!
//! Timestamps are integer microseconds throughout. A stream is only ever
//! constructed through [`validate_stream`], so holding an [`EventStream`]
//! means its timestamps are non-decreasing and every event lies on the
//! sensor.

use std::ops::Range;

use thiserror::Error;

/// Timestamp in microseconds.
pub type Micros = u64;

/// Errors raised while validating or partitioning event streams.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("timestamp decreases at event {0}")]
    NonMonotoneTimestamp(usize),
    #[error("event {0} lies outside the sensor")]
    OutOfBounds(usize),
    #[error("event {0} has polarity other than 0 or 1")]
    BadPolarity(usize),
    #[error("window length must be positive")]
    ZeroWindow,
    #[error("window end {t1} is not after its start {t0}")]
    EmptyWindow { t0: Micros, t1: Micros },
    #[error("partition origin {t_start} is after the first event at {first}")]
    StartAfterFirstEvent { t_start: Micros, first: Micros },
    #[error("sensor geometry {width}x{height} must be at least 1x1")]
    BadGeometry { width: u32, height: u32 },
}

impl EventError {
    pub fn code(&self) -> &'static str {
        match self {
            EventError::NonMonotoneTimestamp(_) => "NON_MONOTONE_TIMESTAMP",
            EventError::OutOfBounds(_) => "OUT_OF_BOUNDS",
            EventError::BadPolarity(_) => "BAD_POLARITY",
            EventError::ZeroWindow => "ZERO_WINDOW",
            EventError::EmptyWindow { .. } => "EMPTY_WINDOW",
            EventError::StartAfterFirstEvent { .. } => "START_AFTER_FIRST_EVENT",
            EventError::BadGeometry { .. } => "BAD_GEOMETRY",
        }
    }
}

/// A single camera event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: Micros,
    pub x: u16,
    pub y: u16,
    /// 0 = negative, 1 = positive.
    pub p: u8,
}

impl Event {
    pub const fn new(t: Micros, x: u16, y: u16, p: u8) -> Self {
        Self { t, x, y, p }
    }
}

/// Sensor resolution in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    width: u32,
    height: u32,
}

impl SensorGeometry {
    /// 304x240 automotive sensor.
    pub const GEN1: SensorGeometry = SensorGeometry { width: 304, height: 240 };
    /// 1280x720 automotive sensor.
    pub const GEN4: SensorGeometry = SensorGeometry { width: 1280, height: 720 };

    pub fn new(width: u32, height: u32) -> Result<Self, EventError> {
        if width == 0 || height == 0 {
            return Err(EventError::BadGeometry { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn contains(&self, x: u16, y: u16) -> bool {
        (x as u32) < self.width && (y as u32) < self.height
    }
}

/// Half-open time interval `[t0, t1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeWindow {
    t0: Micros,
    t1: Micros,
}

impl TimeWindow {
    pub fn new(t0: Micros, t1: Micros) -> Result<Self, EventError> {
        if t1 <= t0 {
            return Err(EventError::EmptyWindow { t0, t1 });
        }
        Ok(Self { t0, t1 })
    }

    pub fn t0(&self) -> Micros {
        self.t0
    }

    pub fn t1(&self) -> Micros {
        self.t1
    }

    pub fn duration(&self) -> Micros {
        self.t1 - self.t0
    }

    #[inline]
    pub fn contains(&self, t: Micros) -> bool {
        self.t0 <= t && t < self.t1
    }
}

/// A validated, time-ordered event sequence bound to a sensor geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    geometry: SensorGeometry,
    events: Vec<Event>,
}

impl EventStream {
    pub fn empty(geometry: SensorGeometry) -> Self {
        Self {
            geometry,
            events: Vec::new(),
        }
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn first_timestamp(&self) -> Option<Micros> {
        self.events.first().map(|e| e.t)
    }

    pub fn last_timestamp(&self) -> Option<Micros> {
        self.events.last().map(|e| e.t)
    }

    /// Index range of the events with `t0 <= t < t1`.
    pub fn window_range(&self, window: TimeWindow) -> Range<usize> {
        let lo = self.events.partition_point(|e| e.t < window.t0);
        let hi = lo + self.events[lo..].partition_point(|e| e.t < window.t1);
        lo..hi
    }

    /// Sub-stream for an index range. Any contiguous range of a valid stream
    /// is itself valid.
    pub fn sub_stream(&self, range: Range<usize>) -> EventStream {
        EventStream {
            geometry: self.geometry,
            events: self.events[range].to_vec(),
        }
    }
}

/// Checks ordering, bounds and polarity, reporting the first offending index.
pub fn validate_stream(
    raw: Vec<Event>,
    geometry: SensorGeometry,
) -> Result<EventStream, EventError> {
    let mut prev = 0;
    for (i, e) in raw.iter().enumerate() {
        if e.t < prev {
            return Err(EventError::NonMonotoneTimestamp(i));
        }
        if !geometry.contains(e.x, e.y) {
            return Err(EventError::OutOfBounds(i));
        }
        if e.p > 1 {
            return Err(EventError::BadPolarity(i));
        }
        prev = e.t;
    }
    Ok(EventStream {
        geometry,
        events: raw,
    })
}

/// One window of a partition together with the events it holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSlice {
    pub window: TimeWindow,
    pub range: Range<usize>,
    /// Set on the final window when the stream's last timestamp does not
    /// reach the window's last microsecond.
    pub partial: bool,
}

/// Splits a stream into consecutive windows `[t_start + k*t_frame, t_start + (k+1)*t_frame)`.
///
/// Windows are emitted from `t_start` up to and including the one holding the
/// last event; empty interior windows are kept so frame indices stay aligned
/// to the time grid.
pub fn partition_windows(
    stream: &EventStream,
    t_frame: Micros,
    t_start: Micros,
) -> Result<Vec<WindowSlice>, EventError> {
    if t_frame == 0 {
        return Err(EventError::ZeroWindow);
    }
    let (Some(first), Some(last)) = (stream.first_timestamp(), stream.last_timestamp()) else {
        return Ok(Vec::new());
    };
    if t_start > first {
        return Err(EventError::StartAfterFirstEvent { t_start, first });
    }

    let n_windows = (last - t_start) / t_frame + 1;
    let events = stream.events();
    let mut slices = Vec::with_capacity(n_windows as usize);
    let mut lo = 0usize;
    for k in 0..n_windows {
        let t0 = t_start + k * t_frame;
        let t1 = t0 + t_frame;
        let hi = lo + events[lo..].partition_point(|e| e.t < t1);
        slices.push(WindowSlice {
            window: TimeWindow { t0, t1 },
            range: lo..hi,
            partial: k + 1 == n_windows && last + 1 < t1,
        });
        lo = hi;
    }
    Ok(slices)
}

/// Events of `stream` with `t0 <= t < t1`, in original order.
pub fn slice_window(stream: &EventStream, window: TimeWindow) -> EventStream {
    stream.sub_stream(stream.window_range(window))
}
