//! Resolution normalization: integer-factor downscaling, zero padding and the
//! matching bounding-box bookkeeping.
//!
//! Resampling uses the pixel-center convention. Output pixel `d` samples the
//! source at `s = (d + 0.5) * f - 0.5` along each axis; kernels are applied
//! separably (rows, then columns) with edge clamping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::AnnotatedBox;
use crate::frame::{Element, FrameTensor, RealFrame};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("frame size {height}x{width} is not divisible by factor {factor}")]
    NotDivisible { height: usize, width: usize, factor: usize },
    #[error("transform is singular (det = {0})")]
    SingularTransform(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl GeometryError {
    pub fn code(&self) -> &'static str {
        match self {
            GeometryError::NotDivisible { .. } => "NOT_DIVISIBLE",
            GeometryError::SingularTransform(_) => "SINGULAR_TRANSFORM",
            GeometryError::InvalidArgument(_) => "INVALID_ARGUMENT",
        }
    }
}

/// 2x3 matrix acting on `(x, y, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub m: [[f64; 3]; 2],
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineTransform {
    pub const fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        }
    }

    pub const fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty]],
        }
    }

    pub const fn linear(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self {
            m: [[a, b, 0.0], [c, d, 0.0]],
        }
    }

    /// Counter-clockwise on screen (y axis pointing down).
    pub fn rotation_deg(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Self::linear(c, s, -s, c)
    }

    pub fn scaling(sx: f64, sy: f64) -> Self {
        Self::linear(sx, 0.0, 0.0, sy)
    }

    /// Shear along x by `x_deg`, followed by shear along y by `y_deg`.
    pub fn shear_deg(x_deg: f64, y_deg: f64) -> Self {
        let sx = Self::linear(1.0, x_deg.to_radians().tan(), 0.0, 1.0);
        let sy = Self::linear(1.0, 0.0, y_deg.to_radians().tan(), 1.0);
        sx.then(&sy)
    }

    /// Mirror across the vertical center line of an image of width `width`.
    pub const fn hflip(width: f64) -> Self {
        Self {
            m: [[-1.0, 0.0, width], [0.0, 1.0, 0.0]],
        }
    }

    /// Conjugates by a translation so that `self` acts about `(cx, cy)`.
    pub fn about(&self, cx: f64, cy: f64) -> Self {
        AffineTransform::translation(-cx, -cy)
            .then(self)
            .then(&AffineTransform::translation(cx, cy))
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &AffineTransform) -> AffineTransform {
        let a = &next.m;
        let b = &self.m;
        let mut m = [[0.0; 3]; 2];
        for (r, row) in m.iter_mut().enumerate() {
            row[0] = a[r][0] * b[0][0] + a[r][1] * b[1][0];
            row[1] = a[r][0] * b[0][1] + a[r][1] * b[1][1];
            row[2] = a[r][0] * b[0][2] + a[r][1] * b[1][2] + a[r][2];
        }
        AffineTransform { m }
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn inverse(&self) -> Result<AffineTransform, GeometryError> {
        let det = self.det();
        if det.is_nan() || det.abs() <= 1e-9 {
            return Err(GeometryError::SingularTransform(det));
        }
        let [[a, b, tx], [c, d, ty]] = self.m;
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Ok(AffineTransform {
            m: [
                [ia, ib, -(ia * tx + ib * ty)],
                [ic, id, -(ic * tx + id * ty)],
            ],
        })
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.m[0][0] * x + self.m[0][1] * y + self.m[0][2],
            self.m[1][0] * x + self.m[1][1] * y + self.m[1][2],
        )
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }
}

/// Kernel used by [`downscale`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resample {
    /// Rounds half toward the top-left source pixel.
    Nearest,
    Bilinear,
    /// Keys cubic with parameter `a`; `a = -0.5` is Catmull-Rom.
    Bicubic { a: f64 },
}

impl Resample {
    pub const CATMULL_ROM: Resample = Resample::Bicubic { a: -0.5 };
}

/// Kernel names as they appear in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleKind {
    Nearest,
    #[default]
    Bilinear,
    Bicubic,
}

impl ResampleKind {
    pub fn with_bicubic_a(self, a: f64) -> Resample {
        match self {
            ResampleKind::Nearest => Resample::Nearest,
            ResampleKind::Bilinear => Resample::Bilinear,
            ResampleKind::Bicubic => Resample::Bicubic { a },
        }
    }
}

fn cubic_weight(x: f64, a: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Source taps `(index, weight)` for each output position along one axis.
fn axis_taps(n_in: usize, factor: usize, method: Resample) -> Vec<Vec<(usize, f64)>> {
    let n_out = n_in / factor;
    let last = n_in as isize - 1;
    let clamp = |i: isize| i.clamp(0, last) as usize;
    (0..n_out)
        .map(|d| {
            let s = (d as f64 + 0.5) * factor as f64 - 0.5;
            match method {
                Resample::Nearest => vec![(clamp((s - 0.5).ceil() as isize), 1.0)],
                Resample::Bilinear => {
                    let i0 = s.floor();
                    let frac = s - i0;
                    let i0 = i0 as isize;
                    vec![(clamp(i0), 1.0 - frac), (clamp(i0 + 1), frac)]
                }
                Resample::Bicubic { a } => {
                    let i0 = s.floor() as isize;
                    (i0 - 1..=i0 + 2)
                        .map(|i| (clamp(i), cubic_weight(s - i as f64, a)))
                        .collect()
                }
            }
        })
        .collect()
}

/// Downscales every channel by an integer factor. Counts are converted to
/// reals before filtering.
pub fn downscale<T: Element>(
    frame: &FrameTensor<T>,
    factor: usize,
    method: Resample,
) -> Result<RealFrame, GeometryError> {
    let (c, h, w) = frame.shape();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(GeometryError::NotDivisible {
            height: h,
            width: w,
            factor,
        });
    }
    let (oh, ow) = (h / factor, w / factor);
    let row_taps = axis_taps(w, factor, method);
    let col_taps = axis_taps(h, factor, method);

    let mut out = Vec::with_capacity(c * oh * ow);
    let mut tmp = vec![0.0f64; h * ow];
    for ch in 0..c {
        let plane = frame.plane(ch);
        for y in 0..h {
            let row = &plane[y * w..(y + 1) * w];
            for (dx, taps) in row_taps.iter().enumerate() {
                tmp[y * ow + dx] = taps.iter().map(|&(i, wt)| row[i].to_f64() * wt).sum();
            }
        }
        for taps in &col_taps {
            for dx in 0..ow {
                let v: f64 = taps.iter().map(|&(i, wt)| tmp[i * ow + dx] * wt).sum();
                out.push(v as f32);
            }
        }
    }
    Ok(RealFrame::from_vec(c, oh, ow, out).expect("shape computed above"))
}

/// Zero rows and columns appended by [`pad_to_multiple`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Padding {
    pub bottom: usize,
    pub right: usize,
}

/// Pads bottom/right with zeros up to the next multiple of `multiple`.
pub fn pad_to_multiple<T: Element>(
    frame: &FrameTensor<T>,
    multiple: usize,
) -> Result<(FrameTensor<T>, Padding), GeometryError> {
    if multiple == 0 {
        return Err(GeometryError::InvalidArgument("multiple must be >= 1".into()));
    }
    let (c, h, w) = frame.shape();
    let nh = h.div_ceil(multiple) * multiple;
    let nw = w.div_ceil(multiple) * multiple;
    let pad = Padding {
        bottom: nh - h,
        right: nw - w,
    };
    if pad == Padding::default() {
        return Ok((frame.clone(), pad));
    }
    let mut out = FrameTensor::zeros(c, nh, nw);
    for ch in 0..c {
        let src = frame.plane(ch);
        let dst = out.plane_mut(ch);
        for y in 0..h {
            dst[y * nw..y * nw + w].copy_from_slice(&src[y * w..(y + 1) * w]);
        }
    }
    Ok((out, pad))
}

/// Top-left `height x width` region of every channel.
pub fn crop_top_left<T: Element>(
    frame: &FrameTensor<T>,
    height: usize,
    width: usize,
) -> Result<FrameTensor<T>, GeometryError> {
    let (c, h, w) = frame.shape();
    if height > h || width > w {
        return Err(GeometryError::InvalidArgument(format!(
            "crop {height}x{width} exceeds frame {h}x{w}"
        )));
    }
    let mut data = Vec::with_capacity(c * height * width);
    for ch in 0..c {
        let src = frame.plane(ch);
        for y in 0..height {
            data.extend_from_slice(&src[y * w..y * w + width]);
        }
    }
    Ok(FrameTensor::from_vec(c, height, width, data).expect("shape computed above"))
}

/// Scales box coordinates per axis and then shifts them by `offset`.
/// Class, score, track and timestamp are preserved.
pub fn map_boxes(
    boxes: &[AnnotatedBox],
    scale: (f64, f64),
    offset: (f64, f64),
) -> Result<Vec<AnnotatedBox>, GeometryError> {
    if !(scale.0 > 0.0 && scale.1 > 0.0) {
        return Err(GeometryError::InvalidArgument(format!(
            "scale must be positive, got {scale:?}"
        )));
    }
    Ok(boxes
        .iter()
        .map(|b| AnnotatedBox {
            x: (b.x as f64 * scale.0 + offset.0) as f32,
            y: (b.y as f64 * scale.1 + offset.1) as f32,
            w: (b.w as f64 * scale.0) as f32,
            h: (b.h as f64 * scale.1) as f32,
            ..*b
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::CountFrame;

    #[test]
    fn gen4_downscale_shape() {
        let f = CountFrame::zeros(20, 720, 1280);
        let d = downscale(&f, 2, Resample::Bilinear).unwrap();
        assert_eq!(d.shape(), (20, 360, 640));
    }

    #[test]
    fn constants_are_preserved_by_every_kernel() {
        let f = RealFrame::from_vec(1, 6, 9, vec![3.5; 54]).unwrap();
        for m in [Resample::Nearest, Resample::Bilinear, Resample::CATMULL_ROM] {
            let d = downscale(&f, 3, m).unwrap();
            assert!(d.data().iter().all(|&v| (v - 3.5).abs() < 1e-6), "{m:?}");
        }
    }

    #[test]
    fn bilinear_factor_two_is_box_average() {
        let f = RealFrame::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let d = downscale(&f, 2, Resample::Bilinear).unwrap();
        assert_eq!(d.data(), &[3.0]);
        let n = downscale(&f, 2, Resample::Nearest).unwrap();
        assert_eq!(n.data(), &[1.0]);
    }

    #[test]
    fn not_divisible() {
        let f = CountFrame::zeros(1, 5, 4);
        assert!(matches!(
            downscale(&f, 2, Resample::Bilinear),
            Err(GeometryError::NotDivisible { .. })
        ));
        assert!(downscale(&f, 0, Resample::Bilinear).is_err());
    }

    #[test]
    fn padding_presets() {
        let (p, pad) = pad_to_multiple(&CountFrame::zeros(20, 240, 304), 32).unwrap();
        assert_eq!(p.shape(), (20, 256, 320));
        assert_eq!(pad, Padding { bottom: 16, right: 16 });
        let (p, pad) = pad_to_multiple(&RealFrame::zeros(20, 360, 640), 32).unwrap();
        assert_eq!(p.shape(), (20, 384, 640));
        assert_eq!(pad, Padding { bottom: 24, right: 0 });
        let (p, pad) = pad_to_multiple(&CountFrame::zeros(2, 64, 32), 32).unwrap();
        assert_eq!(p.shape(), (2, 64, 32));
        assert_eq!(pad, Padding::default());
        assert!(pad_to_multiple(&p, 0).is_err());
    }

    #[test]
    fn pad_then_crop_is_identity() {
        let data: Vec<u16> = (0..2 * 5 * 7).map(|v| v as u16).collect();
        let f = CountFrame::from_vec(2, 5, 7, data).unwrap();
        let (p, _) = pad_to_multiple(&f, 4).unwrap();
        assert_eq!(p.shape(), (2, 8, 8));
        assert_eq!(p.get(1, 7, 7), 0);
        assert_eq!(crop_top_left(&p, 5, 7).unwrap(), f);
    }

    #[test]
    fn box_mapping() {
        let b = AnnotatedBox::new(0, 10.0, 20.0, 30.0, 40.0, 1).with_track(3);
        let m = map_boxes(&[b], (0.5, 0.5), (0.0, 0.0)).unwrap();
        assert_eq!((m[0].x, m[0].y, m[0].w, m[0].h), (5.0, 10.0, 15.0, 20.0));
        assert_eq!(m[0].track_id, Some(3));
        assert_eq!(map_boxes(&[b], (1.0, 1.0), (0.0, 0.0)).unwrap(), vec![b]);
        assert!(map_boxes(&[b], (0.0, 1.0), (0.0, 0.0)).is_err());
    }

    #[test]
    fn affine_algebra() {
        let t = AffineTransform::rotation_deg(30.0)
            .then(&AffineTransform::translation(3.0, -2.0))
            .about(10.0, 5.0);
        let inv = t.inverse().unwrap();
        let (x, y) = t.apply(1.5, 7.25);
        let (bx, by) = inv.apply(x, y);
        assert!((bx - 1.5).abs() < 1e-12 && (by - 7.25).abs() < 1e-12);
        assert!(AffineTransform::scaling(0.0, 1.0).inverse().is_err());
        assert_eq!(AffineTransform::hflip(304.0).apply(10.0, 3.0), (294.0, 3.0));
        assert!((AffineTransform::shear_deg(30.0, -20.0).det() - 1.0).abs() < 1e-12);
    }
}
