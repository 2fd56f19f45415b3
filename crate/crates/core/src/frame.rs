//! Dense `(C, H, W)` tensors and the EVF tensor file format.
//!
//! EVF layout (little-endian):
//!
//! ```text
//! 0   4  magic "EVF1"
//! 4   1  dtype (0 = u16, 1 = f32)
//! 5   1  pad = 0
//! 6   2  C (u16)
//! 8   4  H (u32)
//! 12  4  W (u32)
//! 16  .. C*H*W values, row-major (C, H, W)
//! ```

use thiserror::Error;

pub const EVF_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("shape ({c}, {h}, {w}) does not match {len} values")]
    ShapeMismatch { c: usize, h: usize, w: usize, len: usize },
    #[error("bad EVF magic")]
    BadMagic,
    #[error("unknown EVF dtype {0}")]
    BadDtype(u8),
    #[error("EVF file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("EVF file has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("channel count {0} does not fit the EVF header")]
    TooManyChannels(usize),
}

impl FrameError {
    pub fn code(&self) -> &'static str {
        match self {
            FrameError::ShapeMismatch { .. } => "SHAPE_MISMATCH",
            FrameError::BadMagic => "BAD_MAGIC",
            FrameError::BadDtype(_) => "BAD_DTYPE",
            FrameError::Truncated { .. } => "TRUNCATED_FILE",
            FrameError::TrailingBytes(_) => "TRAILING_BYTES",
            FrameError::TooManyChannels(_) => "TOO_MANY_CHANNELS",
        }
    }
}

/// Scalar types a frame can hold.
pub trait Element: Copy + Default + PartialEq + Send + Sync + std::fmt::Debug + 'static {
    const DTYPE: u8;
    const SIZE: usize;
    fn to_f64(self) -> f64;
    /// Converts back from a resampled value; integer types round and saturate.
    fn from_f64(v: f64) -> Self;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Element for u16 {
    const DTYPE: u8 = 0;
    const SIZE: usize = 2;
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        // `as` saturates and maps NaN to 0
        v.round() as u16
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        u16::from_le_bytes([bytes[0], bytes[1]])
    }
}

impl Element for f32 {
    const DTYPE: u8 = 1;
    const SIZE: usize = 4;
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

/// Row-major `(C, H, W)` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

pub type CountFrame = FrameTensor<u16>;
pub type RealFrame = FrameTensor<f32>;

impl<T: Element> FrameTensor<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::default(); channels * height * width],
        }
    }

    pub fn from_vec(
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<T>,
    ) -> Result<Self, FrameError> {
        if channels * height * width != data.len() {
            return Err(FrameError::ShapeMismatch {
                c: channels,
                h: height,
                w: width,
                len: data.len(),
            });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn map<U: Element>(&self, f: impl Fn(T) -> U) -> FrameTensor<U> {
        FrameTensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_real(&self) -> RealFrame {
        self.map(|v| v.to_f64() as f32)
    }

    pub fn to_evf(&self) -> Result<Vec<u8>, FrameError> {
        let c = u16::try_from(self.channels).map_err(|_| FrameError::TooManyChannels(self.channels))?;
        let mut out = Vec::with_capacity(EVF_HEADER_LEN + self.data.len() * T::SIZE);
        out.extend_from_slice(b"EVF1");
        out.push(T::DTYPE);
        out.push(0);
        out.extend_from_slice(&c.to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for &v in &self.data {
            v.write_le(&mut out);
        }
        Ok(out)
    }
}

impl CountFrame {
    pub fn total(&self) -> u64 {
        self.data.iter().map(|&v| v as u64).sum()
    }
}

/// EVF header fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvfHeader {
    pub dtype: u8,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

pub fn read_evf_header(bytes: &[u8]) -> Result<EvfHeader, FrameError> {
    if bytes.len() < EVF_HEADER_LEN {
        if !b"EVF1".starts_with(&bytes[..bytes.len().min(4)]) {
            return Err(FrameError::BadMagic);
        }
        return Err(FrameError::Truncated {
            expected: EVF_HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != b"EVF1" {
        return Err(FrameError::BadMagic);
    }
    let dtype = bytes[4];
    if dtype > 1 {
        return Err(FrameError::BadDtype(dtype));
    }
    Ok(EvfHeader {
        dtype,
        channels: u16::from_le_bytes([bytes[6], bytes[7]]) as usize,
        height: u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize,
        width: u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize,
    })
}

/// A decoded EVF file of either dtype.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyFrame {
    Counts(CountFrame),
    Real(RealFrame),
}

impl AnyFrame {
    pub fn shape(&self) -> (usize, usize, usize) {
        match self {
            AnyFrame::Counts(f) => f.shape(),
            AnyFrame::Real(f) => f.shape(),
        }
    }

    pub fn to_evf(&self) -> Result<Vec<u8>, FrameError> {
        match self {
            AnyFrame::Counts(f) => f.to_evf(),
            AnyFrame::Real(f) => f.to_evf(),
        }
    }
}

fn decode_body<T: Element>(h: &EvfHeader, body: &[u8]) -> Result<FrameTensor<T>, FrameError> {
    let n = h.channels * h.height * h.width;
    let expected = n * T::SIZE;
    if body.len() < expected {
        return Err(FrameError::Truncated {
            expected: EVF_HEADER_LEN + expected,
            found: EVF_HEADER_LEN + body.len(),
        });
    }
    if body.len() > expected {
        return Err(FrameError::TrailingBytes(body.len() - expected));
    }
    let data = body.chunks_exact(T::SIZE).map(T::read_le).collect();
    FrameTensor::from_vec(h.channels, h.height, h.width, data)
}

pub fn decode_evf(bytes: &[u8]) -> Result<AnyFrame, FrameError> {
    let h = read_evf_header(bytes)?;
    let body = &bytes[EVF_HEADER_LEN..];
    match h.dtype {
        0 => decode_body(&h, body).map(AnyFrame::Counts),
        _ => decode_body(&h, body).map(AnyFrame::Real),
    }
}
