//! COCO-style mean average precision over per-frame detections.
//!
//! Frames are keyed by annotation timestamp. Within a frame, predictions are
//! visited in descending score order and each one claims the highest-IoU
//! unmatched ground-truth box of its class whose IoU reaches the threshold.
//! AP is the mean of the interpolated precision envelope sampled on a
//! 101-point recall grid.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{parse_annotations, AnnotatedBox, AnnotationError};
use crate::event::Micros;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{which}: {source}")]
    Parse {
        which: &'static str,
        source: AnnotationError,
    },
    #[error("no ground-truth boxes left to evaluate")]
    NoGroundTruth,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

impl EvalError {
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::Parse { .. } => "PARSE_ERROR",
            EvalError::NoGroundTruth => "NO_GROUND_TRUTH",
            EvalError::InvalidConfig(_) => "INVALID_CONFIG",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    /// Number of evenly spaced recall points in `[0, 1]`.
    pub recall_points: usize,
    /// Classes to evaluate; `None` means every class seen in the ground truth.
    pub classes: Option<Vec<u8>>,
    /// Drop boxes whose diagonal is shorter than this (pixels).
    pub min_diagonal: Option<f64>,
    /// Drop boxes with `t` below this (us).
    pub skip_initial_us: Option<Micros>,
    /// A prediction at `t` is paired with the nearest ground-truth timestamp
    /// within this distance; unpaired predictions are discarded.
    pub time_tolerance_us: Micros,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: coco_thresholds(),
            recall_points: 101,
            classes: None,
            min_diagonal: None,
            skip_initial_us: None,
            time_tolerance_us: 0,
        }
    }
}

/// `0.50, 0.55, ..., 0.95`.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidConfig(m));
        if self.iou_thresholds.is_empty() {
            return bad("need at least one IoU threshold".into());
        }
        if self.iou_thresholds.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return bad("IoU thresholds must lie in (0, 1]".into());
        }
        if self.iou_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return bad("IoU thresholds must be strictly increasing".into());
        }
        if self.recall_points < 2 {
            return bad("recall grid needs at least 2 points".into());
        }
        if let Some(d) = self.min_diagonal {
            if !(d >= 0.0 && d.is_finite()) {
                return bad(format!("min_diagonal {d} must be finite and >= 0"));
            }
        }
        Ok(())
    }

    fn keeps(&self, b: &AnnotatedBox) -> bool {
        if self.skip_initial_us.is_some_and(|skip| b.t < skip) {
            return false;
        }
        if let Some(d) = self.min_diagonal {
            if (b.w as f64).hypot(b.h as f64) < d {
                return false;
            }
        }
        true
    }
}

/// Intersection over union of two axis-aligned boxes.
pub fn iou(a: &AnnotatedBox, b: &AnnotatedBox) -> f64 {
    let (ax0, ay0) = (a.x as f64, a.y as f64);
    let (ax1, ay1) = (ax0 + a.w as f64, ay0 + a.h as f64);
    let (bx0, by0) = (b.x as f64, b.y as f64);
    let (bx1, by1) = (bx0 + b.w as f64, by0 + b.h as f64);
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Prediction indices in the order they were matched.
    pub order: Vec<usize>,
    /// Per prediction (input order): matched gt index and its IoU.
    pub pred_match: Vec<Option<(usize, f64)>>,
    /// Per gt: whether some prediction claimed it.
    pub gt_matched: Vec<bool>,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.pred_match.iter().filter(|m| m.is_some()).count()
    }

    pub fn false_positives(&self) -> usize {
        self.pred_match.len() - self.true_positives()
    }

    pub fn false_negatives(&self) -> usize {
        self.gt_matched.iter().filter(|m| !**m).count()
    }
}

/// Indices of `preds` by descending score, ties in input order.
fn score_order(preds: &[&AnnotatedBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    order
}

fn match_refs(preds: &[&AnnotatedBox], gts: &[&AnnotatedBox], threshold: f64) -> MatchResult {
    let order = score_order(preds);
    let mut pred_match = vec![None; preds.len()];
    let mut gt_matched = vec![false; gts.len()];
    for &pi in &order {
        let p = preds[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if gt_matched[gi] || g.class_id != p.class_id {
                continue;
            }
            let v = iou(p, g);
            if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        if let Some((gi, _)) = best {
            gt_matched[gi] = true;
        }
        pred_match[pi] = best;
    }
    MatchResult {
        order,
        pred_match,
        gt_matched,
    }
}

/// Greedy matching of one frame's predictions against its ground truth.
pub fn match_frame(preds: &[AnnotatedBox], gts: &[AnnotatedBox], threshold: f64) -> MatchResult {
    let p: Vec<&AnnotatedBox> = preds.iter().collect();
    let g: Vec<&AnnotatedBox> = gts.iter().collect();
    match_refs(&p, &g, threshold)
}

/// AP from `(score, is_tp)` pairs listed in dataset order, given `n_gt > 0`.
///
/// Pairs are stably sorted by descending score before accumulation.
pub fn average_precision(detections: &[(f32, bool)], n_gt: usize, recall_points: usize) -> f64 {
    if n_gt == 0 || recall_points < 2 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].0.total_cmp(&detections[a].0));

    let mut recall = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &i in &order {
        if detections[i].1 {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }

    let last = (recall_points - 1) as f64;
    let mut sum = 0.0;
    for k in 0..recall_points {
        let r = k as f64 / last;
        let idx = recall.partition_point(|&v| v < r);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    sum / recall_points as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub map: f64,
    pub map50: f64,
    pub map75: f64,
    /// Per evaluated class: AP averaged over the configured thresholds.
    pub per_class: Vec<(u8, f64)>,
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mAP={:.6}", self.map)?;
        writeln!(f, "mAP50={:.6}", self.map50)?;
        writeln!(f, "mAP75={:.6}", self.map75)?;
        for (c, ap) in &self.per_class {
            writeln!(f, "AP[class={c}]={ap:.6}")?;
        }
        Ok(())
    }
}

struct Frame<'a> {
    gts: Vec<&'a AnnotatedBox>,
    preds: Vec<&'a AnnotatedBox>,
}

/// Groups filtered boxes into frames keyed by ground-truth timestamp.
fn build_frames<'a>(
    preds: &'a [AnnotatedBox],
    gts: &'a [AnnotatedBox],
    cfg: &EvalConfig,
) -> BTreeMap<Micros, Frame<'a>> {
    let mut frames: BTreeMap<Micros, Frame<'a>> = BTreeMap::new();
    for g in gts.iter().filter(|g| cfg.keeps(g)) {
        frames
            .entry(g.t)
            .or_insert_with(|| Frame {
                gts: Vec::new(),
                preds: Vec::new(),
            })
            .gts
            .push(g);
    }
    let keys: Vec<Micros> = frames.keys().copied().collect();
    for p in preds.iter().filter(|p| cfg.keeps(p)) {
        let idx = keys.partition_point(|&k| k < p.t);
        let candidates = [idx.checked_sub(1), (idx < keys.len()).then_some(idx)];
        // Nearest timestamp; on a tie the earlier one.
        let nearest = candidates
            .into_iter()
            .flatten()
            .map(|i| (keys[i].abs_diff(p.t), keys[i]))
            .min();
        if let Some((dist, key)) = nearest {
            if dist <= cfg.time_tolerance_us {
                frames.get_mut(&key).expect("key from map").preds.push(p);
            }
        }
    }
    frames
}

fn ap_at(frames: &BTreeMap<Micros, Frame<'_>>, class: u8, threshold: f64, recall_points: usize) -> f64 {
    let mut detections = Vec::new();
    let mut n_gt = 0;
    for frame in frames.values() {
        let gts: Vec<&AnnotatedBox> = frame.gts.iter().copied().filter(|g| g.class_id == class).collect();
        let preds: Vec<&AnnotatedBox> = frame.preds.iter().copied().filter(|p| p.class_id == class).collect();
        n_gt += gts.len();
        let m = match_refs(&preds, &gts, threshold);
        detections.extend(m.order.iter().map(|&i| (preds[i].score, m.pred_match[i].is_some())));
    }
    average_precision(&detections, n_gt, recall_points)
}

/// Evaluates predictions against ground truth.
pub fn evaluate(preds: &[AnnotatedBox], gts: &[AnnotatedBox], cfg: &EvalConfig) -> Result<Report, EvalError> {
    cfg.validate()?;
    let frames = build_frames(preds, gts, cfg);
    let mut gt_classes: Vec<u8> = frames.values().flat_map(|f| f.gts.iter().map(|g| g.class_id)).collect();
    gt_classes.sort_unstable();
    gt_classes.dedup();
    let classes: Vec<u8> = match &cfg.classes {
        Some(declared) => {
            let mut c: Vec<u8> = declared.iter().copied().filter(|c| gt_classes.contains(c)).collect();
            c.sort_unstable();
            c.dedup();
            c
        }
        None => gt_classes,
    };
    if classes.is_empty() {
        return Err(EvalError::NoGroundTruth);
    }

    let n = classes.len() as f64;
    let rp = cfg.recall_points;
    let mut per_class = Vec::with_capacity(classes.len());
    let mut total = 0.0;
    for &c in &classes {
        let aps: Vec<f64> = cfg.iou_thresholds.iter().map(|&t| ap_at(&frames, c, t, rp)).collect();
        let mean = aps.iter().sum::<f64>() / aps.len() as f64;
        total += mean;
        per_class.push((c, mean));
    }
    let fixed = |t: f64| classes.iter().map(|&c| ap_at(&frames, c, t, rp)).sum::<f64>() / n;
    Ok(Report {
        map: total / n,
        map50: fixed(0.5),
        map75: fixed(0.75),
        per_class,
    })
}

/// Parses both files in the annotation line format and evaluates.
pub fn evaluate_text(predictions: &str, ground_truth: &str, cfg: &EvalConfig) -> Result<Report, EvalError> {
    let preds = parse_annotations(predictions).map_err(|source| EvalError::Parse {
        which: "predictions",
        source,
    })?;
    let gts = parse_annotations(ground_truth).map_err(|source| EvalError::Parse {
        which: "ground truth",
        source,
    })?;
    evaluate(&preds, &gts, cfg)
}
