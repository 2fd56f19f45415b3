//! Geometric + erasure augmentation chain for frames and their boxes.
//!
//! Stages run in a fixed order: horizontal flip, rotation, translation,
//! scale, shear, then random erasure. Each stage fires independently with
//! its own probability and, when it fires, draws its magnitude uniformly from
//! the configured range. The geometric stages act about the image center and
//! compose into a single [`AffineTransform`].
//!
//! Coordinates are continuous: pixel `(i, j)` covers `[j, j+1) x [i, i+1)`
//! and boxes live in the same space, so a flip maps `x` to `W - x`.
//!
//! In video mode one geometric draw is shared by every frame of a clip while
//! erasure is drawn per frame. The two come from disjoint substreams of
//! [`AugmentRng`], so clip length never perturbs the geometric draw.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::AnnotatedBox;
use crate::frame::{Element, FrameTensor};
use crate::geometry::AffineTransform;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AugmentError {
    #[error("transform is singular (det = {0})")]
    SingularTransform(f64),
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
    #[error("clip is empty")]
    EmptyClip,
    #[error("frame {index} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{boxes} box lists supplied for {frames} frames")]
    BoxCountMismatch { frames: usize, boxes: usize },
}

impl AugmentError {
    pub fn code(&self) -> &'static str {
        match self {
            AugmentError::SingularTransform(_) => "SINGULAR_TRANSFORM",
            AugmentError::InvalidConfig(_) => "INVALID_CONFIG",
            AugmentError::EmptyClip => "EMPTY_CLIP",
            AugmentError::ShapeMismatch { .. } => "SHAPE_MISMATCH",
            AugmentError::BoxCountMismatch { .. } => "BOX_COUNT_MISMATCH",
        }
    }
}

/// Probability plus a closed magnitude range.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RangeStage {
    pub p: f64,
    pub range: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FlipStage {
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErasureStage {
    pub p: f64,
    /// Fraction of the image area.
    pub area: (f64, f64),
    /// Height / width.
    pub ratio: (f64, f64),
    pub fill: f32,
}

impl Default for ErasureStage {
    fn default() -> Self {
        Self {
            p: 0.4,
            area: (0.02, 0.33),
            ratio: (0.3, 3.3),
            fill: 0.0,
        }
    }
}

/// Drop rules for boxes after a geometric transform.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxFilter {
    /// Minimum clipped area in px^2.
    pub min_area: f64,
    /// Minimum clipped / unclipped area.
    pub min_visibility: f64,
}

impl Default for BoxFilter {
    fn default() -> Self {
        Self {
            min_area: 4.0,
            min_visibility: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub hflip: FlipStage,
    /// Degrees.
    pub rotation: RangeStage,
    /// Fraction of image width / height, drawn per axis.
    pub translation: RangeStage,
    pub scale: RangeStage,
    /// Degrees, drawn per axis.
    pub shear: RangeStage,
    pub erasure: ErasureStage,
    pub boxes: BoxFilter,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            hflip: FlipStage { p: 0.5 },
            rotation: RangeStage {
                p: 0.6,
                range: (-30.0, 30.0),
            },
            translation: RangeStage {
                p: 0.6,
                range: (-0.5, 0.5),
            },
            scale: RangeStage {
                p: 0.6,
                range: (0.5, 1.5),
            },
            shear: RangeStage {
                p: 0.6,
                range: (-30.0, 30.0),
            },
            erasure: ErasureStage::default(),
            boxes: BoxFilter::default(),
        }
    }
}

impl AugmentConfig {
    /// The default chain with every probability set to zero.
    pub fn disabled() -> Self {
        let mut cfg = Self::default();
        cfg.set_all_probabilities(0.0);
        cfg
    }

    pub fn set_all_probabilities(&mut self, p: f64) {
        self.hflip.p = p;
        self.rotation.p = p;
        self.translation.p = p;
        self.scale.p = p;
        self.shear.p = p;
        self.erasure.p = p;
    }

    /// Copy with erasure switched off.
    pub fn geometric_only(&self) -> Self {
        let mut cfg = *self;
        cfg.erasure.p = 0.0;
        cfg
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |msg: String| Err(AugmentError::InvalidConfig(msg));
        let probs = [
            ("hflip", self.hflip.p),
            ("rotation", self.rotation.p),
            ("translation", self.translation.p),
            ("scale", self.scale.p),
            ("shear", self.shear.p),
            ("erasure", self.erasure.p),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} probability {p} outside [0, 1]"));
            }
        }
        let ranges = [
            ("rotation", self.rotation.range),
            ("translation", self.translation.range),
            ("scale", self.scale.range),
            ("shear", self.shear.range),
            ("erasure area", self.erasure.area),
            ("erasure ratio", self.erasure.ratio),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} range ({lo}, {hi}) is not ordered"));
            }
        }
        if self.scale.range.0 <= 0.0 {
            return bad("scale range must be positive".into());
        }
        if self.shear.range.0 <= -90.0 || self.shear.range.1 >= 90.0 {
            return bad("shear must stay inside (-90, 90) degrees".into());
        }
        if self.erasure.area.0 < 0.0 || self.erasure.area.1 > 1.0 || self.erasure.ratio.0 <= 0.0 {
            return bad("erasure area must lie in [0, 1] and ratio must be positive".into());
        }
        Ok(())
    }
}

/// Seedable generator with independent substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentRng {
    seed: u64,
}

const GEOMETRIC_STREAM: u64 = 0;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl AugmentRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child generator, e.g. one per frame or per clip.
    pub fn fork(&self, key: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(key)),
        }
    }

    pub fn substream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn geometric(&self) -> ChaCha8Rng {
        self.substream(GEOMETRIC_STREAM)
    }

    fn erasure(&self, frame: usize) -> ChaCha8Rng {
        self.substream(1 + frame as u64)
    }
}

/// Drawn geometric parameters; `None` means the stage did not fire.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeometricDraw {
    pub hflip: bool,
    pub rotation_deg: Option<f64>,
    /// Pixels.
    pub translation: Option<(f64, f64)>,
    pub scale: Option<f64>,
    pub shear_deg: Option<(f64, f64)>,
}

impl GeometricDraw {
    /// Composes the fired stages in chain order about the image center.
    pub fn affine(&self, width: usize, height: usize) -> AffineTransform {
        let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
        let mut m = AffineTransform::identity();
        if self.hflip {
            m = m.then(&AffineTransform::hflip(width as f64));
        }
        if let Some(deg) = self.rotation_deg {
            m = m.then(&AffineTransform::rotation_deg(deg).about(cx, cy));
        }
        if let Some((tx, ty)) = self.translation {
            m = m.then(&AffineTransform::translation(tx, ty));
        }
        if let Some(s) = self.scale {
            m = m.then(&AffineTransform::scaling(s, s).about(cx, cy));
        }
        if let Some((sx, sy)) = self.shear_deg {
            m = m.then(&AffineTransform::shear_deg(sx, sy).about(cx, cy));
        }
        m
    }
}

fn opt<T: fmt::Display>(f: &mut fmt::Formatter<'_>, v: Option<T>) -> fmt::Result {
    match v {
        Some(v) => write!(f, "{v}"),
        None => f.write_str("-"),
    }
}

impl fmt::Display for GeometricDraw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "hflip={} rotate=", self.hflip as u8)?;
        opt(f, self.rotation_deg)?;
        f.write_str(" translate=")?;
        opt(f, self.translation.map(|(x, y)| format!("{x},{y}")))?;
        f.write_str(" scale=")?;
        opt(f, self.scale)?;
        f.write_str(" shear=")?;
        opt(f, self.shear_deg.map(|(x, y)| format!("{x},{y}")))
    }
}

/// Erased pixel rectangle, in pixel indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EraseRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl fmt::Display for EraseRect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}

/// Everything needed to replay one augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledAugmentation {
    pub width: usize,
    pub height: usize,
    pub geometric: GeometricDraw,
    pub affine: AffineTransform,
    pub erasure: Option<EraseRect>,
    pub fill: f32,
}

impl SampledAugmentation {
    pub fn identity(width: usize, height: usize) -> Self {
        Self::from_geometric(width, height, GeometricDraw::default())
    }

    pub fn from_geometric(width: usize, height: usize, geometric: GeometricDraw) -> Self {
        Self {
            width,
            height,
            geometric,
            affine: geometric.affine(width, height),
            erasure: None,
            fill: 0.0,
        }
    }
}

fn fires(rng: &mut impl Rng, p: f64) -> bool {
    rng.gen::<f64>() < p
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

fn draw_geometric(cfg: &AugmentConfig, width: usize, height: usize, rng: &mut impl Rng) -> GeometricDraw {
    let mut g = GeometricDraw {
        hflip: fires(rng, cfg.hflip.p),
        ..Default::default()
    };
    if fires(rng, cfg.rotation.p) {
        g.rotation_deg = Some(uniform(rng, cfg.rotation.range));
    }
    if fires(rng, cfg.translation.p) {
        let tx = uniform(rng, cfg.translation.range) * width as f64;
        let ty = uniform(rng, cfg.translation.range) * height as f64;
        g.translation = Some((tx, ty));
    }
    if fires(rng, cfg.scale.p) {
        g.scale = Some(uniform(rng, cfg.scale.range));
    }
    if fires(rng, cfg.shear.p) {
        let sx = uniform(rng, cfg.shear.range);
        let sy = uniform(rng, cfg.shear.range);
        g.shear_deg = Some((sx, sy));
    }
    g
}

/// Random erasing with up to ten rejection attempts; no rectangle if none fits.
fn draw_erasure(
    cfg: &ErasureStage,
    width: usize,
    height: usize,
    rng: &mut impl Rng,
) -> Option<EraseRect> {
    if !fires(rng, cfg.p) {
        return None;
    }
    let area = (width * height) as f64;
    let log_ratio = (cfg.ratio.0.ln(), cfg.ratio.1.ln());
    for _ in 0..10 {
        let target = area * uniform(rng, cfg.area);
        let aspect = uniform(rng, log_ratio).exp();
        let h = (target * aspect).sqrt().round_ties_even() as usize;
        let w = (target / aspect).sqrt().round_ties_even() as usize;
        if !(h < height && w < width) {
            continue;
        }
        let y = rng.gen_range(0..=height - h);
        let x = rng.gen_range(0..=width - w);
        return Some(EraseRect { x, y, w, h });
    }
    None
}

/// Draws the full chain for a single frame of size `width x height`.
pub fn sample_augmentation(
    cfg: &AugmentConfig,
    width: usize,
    height: usize,
    rng: &AugmentRng,
) -> Result<SampledAugmentation, AugmentError> {
    cfg.validate()?;
    let geometric = draw_geometric(cfg, width, height, &mut rng.geometric());
    let mut aug = SampledAugmentation::from_geometric(width, height, geometric);
    aug.erasure = draw_erasure(&cfg.erasure, width, height, &mut rng.erasure(0));
    aug.fill = cfg.erasure.fill;
    Ok(aug)
}

/// Warps a frame by inverse mapping with bilinear sampling (zero outside the
/// source), then applies the erasure rectangle to every channel.
pub fn apply_to_frame<T: Element>(
    frame: &FrameTensor<T>,
    aug: &SampledAugmentation,
) -> Result<FrameTensor<T>, AugmentError> {
    let (c, h, w) = frame.shape();
    if (w, h) != (aug.width, aug.height) {
        return Err(AugmentError::ShapeMismatch {
            index: 0,
            expected: (aug.height, aug.width),
            found: (h, w),
        });
    }
    let mut out = if aug.affine.is_identity() {
        frame.clone()
    } else {
        warp(frame, &aug.affine)?
    };
    if let Some(r) = aug.erasure {
        let fill = T::from_f64(aug.fill as f64);
        for ch in 0..c {
            let plane = out.plane_mut(ch);
            for y in r.y..(r.y + r.h).min(h) {
                plane[y * w + r.x..y * w + (r.x + r.w).min(w)].fill(fill);
            }
        }
    }
    Ok(out)
}

fn warp<T: Element>(
    frame: &FrameTensor<T>,
    affine: &AffineTransform,
) -> Result<FrameTensor<T>, AugmentError> {
    let inv = affine
        .inverse()
        .map_err(|_| AugmentError::SingularTransform(affine.det()))?;
    let (c, h, w) = frame.shape();

    // Up to four (source index, weight) taps per output pixel, shared by all channels.
    let mut taps: Vec<[(usize, f64); 4]> = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let (sx, sy) = inv.apply(j as f64 + 0.5, i as f64 + 0.5);
            let (fx, fy) = (sx - 0.5, sy - 0.5);
            let (x0, y0) = (fx.floor(), fy.floor());
            let (ax, ay) = (fx - x0, fy - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            let mut t = [(0usize, 0.0f64); 4];
            let corners = [
                (x0, y0, (1.0 - ax) * (1.0 - ay)),
                (x0 + 1, y0, ax * (1.0 - ay)),
                (x0, y0 + 1, (1.0 - ax) * ay),
                (x0 + 1, y0 + 1, ax * ay),
            ];
            for (k, &(x, y, wt)) in corners.iter().enumerate() {
                if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h && wt != 0.0 {
                    t[k] = (y as usize * w + x as usize, wt);
                }
            }
            taps.push(t);
        }
    }

    let mut out = FrameTensor::zeros(c, h, w);
    for ch in 0..c {
        let src = frame.plane(ch);
        for (dst, t) in out.plane_mut(ch).iter_mut().zip(&taps) {
            let v: f64 = t.iter().map(|&(i, wt)| wt * src[i].to_f64()).sum();
            *dst = T::from_f64(v);
        }
    }
    Ok(out)
}

/// Transforms each box's corners, takes the axis-aligned hull and clips it to
/// the image. Boxes failing `filter` are dropped. Erasure never touches boxes.
pub fn apply_to_boxes(
    boxes: &[AnnotatedBox],
    aug: &SampledAugmentation,
    filter: &BoxFilter,
) -> Result<Vec<AnnotatedBox>, AugmentError> {
    let det = aug.affine.det();
    if det.is_nan() || det.abs() <= 1e-9 {
        return Err(AugmentError::SingularTransform(det));
    }
    if aug.affine.is_identity() {
        return Ok(boxes.to_vec());
    }
    let (iw, ih) = (aug.width as f64, aug.height as f64);
    let mut out = Vec::with_capacity(boxes.len());
    for b in boxes {
        let (x0, y0) = (b.x as f64, b.y as f64);
        let (x1, y1) = (x0 + b.w as f64, y0 + b.h as f64);
        let corners = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)].map(|(x, y)| aug.affine.apply(x, y));
        let min_x = corners.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let max_x = corners.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = corners.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let max_y = corners.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        let hull_area = (max_x - min_x) * (max_y - min_y);

        let (cx0, cx1) = (min_x.clamp(0.0, iw), max_x.clamp(0.0, iw));
        let (cy0, cy1) = (min_y.clamp(0.0, ih), max_y.clamp(0.0, ih));
        let area = (cx1 - cx0) * (cy1 - cy0);
        if area <= 0.0 || area < filter.min_area || area / hull_area < filter.min_visibility {
            continue;
        }
        out.push(AnnotatedBox {
            x: cx0 as f32,
            y: cy0 as f32,
            w: (cx1 - cx0) as f32,
            h: (cy1 - cy0) as f32,
            ..*b
        });
    }
    Ok(out)
}

/// A clip after augmentation, with the per-frame draws that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedClip<T> {
    pub frames: Vec<FrameTensor<T>>,
    pub boxes: Vec<Vec<AnnotatedBox>>,
    pub draws: Vec<SampledAugmentation>,
}

/// Video-mode augmentation: one geometric draw for the whole clip, a fresh
/// erasure draw per frame.
pub fn augment_clip<T: Element>(
    frames: &[FrameTensor<T>],
    boxes: &[Vec<AnnotatedBox>],
    cfg: &AugmentConfig,
    rng: &AugmentRng,
) -> Result<AugmentedClip<T>, AugmentError> {
    cfg.validate()?;
    let first = frames.first().ok_or(AugmentError::EmptyClip)?;
    if boxes.len() != frames.len() {
        return Err(AugmentError::BoxCountMismatch {
            frames: frames.len(),
            boxes: boxes.len(),
        });
    }
    let (h, w) = (first.height(), first.width());
    for (index, f) in frames.iter().enumerate() {
        if (f.height(), f.width()) != (h, w) {
            return Err(AugmentError::ShapeMismatch {
                index,
                expected: (h, w),
                found: (f.height(), f.width()),
            });
        }
    }

    let geometric = draw_geometric(cfg, w, h, &mut rng.geometric());
    let shared = SampledAugmentation::from_geometric(w, h, geometric);
    let mut clip = AugmentedClip {
        frames: Vec::with_capacity(frames.len()),
        boxes: Vec::with_capacity(frames.len()),
        draws: Vec::with_capacity(frames.len()),
    };
    for (k, (frame, frame_boxes)) in frames.iter().zip(boxes).enumerate() {
        let mut aug = shared;
        aug.erasure = draw_erasure(&cfg.erasure, w, h, &mut rng.erasure(k));
        aug.fill = cfg.erasure.fill;
        clip.frames.push(apply_to_frame(frame, &aug)?);
        clip.boxes.push(apply_to_boxes(frame_boxes, &aug, &cfg.boxes)?);
        clip.draws.push(aug);
    }
    Ok(clip)
}
