//! Region-based (RBDC) and track-based (TBDC) detection criteria.
//!
//! A ground-truth region counts as detected when a detected region on the
//! same frame overlaps it with box IoU `>= alpha`. Matching is one-to-one
//! per frame, greedy by IoU (ties to the smaller track id, then the earlier
//! detection). Unmatched detections are false positives.
//!
//! *Point* mode reports the detected fraction with every detection kept.
//! *Curve* mode sweeps region-score thresholds, plots the detected fraction
//! against false positives per frame and reports the normalised area over
//! `[0, 1]` false positives per frame.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::pixel::limited_area;
use super::MetricError;
use crate::geometry::{connected_components, iou, merge_overlapping};
use crate::model::{BBox, GroundTruth};
use crate::segment::SegmentationResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedRegion {
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionMode {
    Curve,
    Point,
}

#[derive(Debug, Clone)]
pub struct ObjectEvalInput {
    detected: Vec<Vec<DetectedRegion>>,
    gt: Vec<Vec<(u32, BBox)>>,
    alpha: f64,
}

impl ObjectEvalInput {
    pub fn new(gt: &GroundTruth, detected: Vec<Vec<DetectedRegion>>, alpha: f64) -> Result<Self, MetricError> {
        let regions = gt.frames().iter().map(|f| f.regions.iter().map(|r| (r.track_id, r.bbox)).collect()).collect();
        Self::from_parts(regions, detected, alpha)
    }

    pub fn from_parts(
        gt: Vec<Vec<(u32, BBox)>>,
        detected: Vec<Vec<DetectedRegion>>,
        alpha: f64,
    ) -> Result<Self, MetricError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(MetricError::InvalidParam("alpha must be in (0, 1)"));
        }
        if gt.len() != detected.len() {
            return Err(MetricError::Dimensions("detected and ground-truth frame counts differ"));
        }
        Ok(ObjectEvalInput { detected, gt, alpha })
    }

    pub fn frame_count(&self) -> usize {
        self.gt.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Per-frame GT hit flags and the false-positive count with detections
    /// scoring at least `min_score` kept.
    fn match_at(&self, min_score: f64) -> (Vec<Vec<bool>>, usize) {
        let mut hits = Vec::with_capacity(self.gt.len());
        let mut fp = 0;
        for (gts, dets) in self.gt.iter().zip(&self.detected) {
            let mut pairs: Vec<(f64, u32, usize, usize)> = Vec::new();
            let mut kept = 0;
            for (di, d) in dets.iter().enumerate() {
                if d.score < min_score {
                    continue;
                }
                kept += 1;
                for (gi, (tid, gb)) in gts.iter().enumerate() {
                    let v = iou(&d.bbox, gb);
                    if v >= self.alpha {
                        pairs.push((v, *tid, di, gi));
                    }
                }
            }
            pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut gt_hit = alloc::vec![false; gts.len()];
            let mut det_used = alloc::vec![false; dets.len()];
            let mut matched = 0;
            for (_, _, di, gi) in pairs {
                if !gt_hit[gi] && !det_used[di] {
                    gt_hit[gi] = true;
                    det_used[di] = true;
                    matched += 1;
                }
            }
            fp += kept - matched;
            hits.push(gt_hit);
        }
        (hits, fp)
    }

    fn thresholds(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.detected.iter().flatten().map(|d| d.score).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s.dedup();
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub fp_per_frame: f64,
    pub detection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub value: f64,
    /// False positives per frame with every detection kept.
    pub fp_per_frame: f64,
    /// Swept points (curve mode only), highest threshold first.
    pub curve: Vec<CurvePoint>,
}

fn criterion(
    input: &ObjectEvalInput,
    mode: CriterionMode,
    rate: impl Fn(&[Vec<bool>]) -> f64,
) -> CriterionOutcome {
    let frames = input.frame_count().max(1) as f64;
    let (all_hits, all_fp) = input.match_at(f64::NEG_INFINITY);
    let point_value = rate(&all_hits);
    let fp_per_frame = all_fp as f64 / frames;
    match mode {
        CriterionMode::Point => CriterionOutcome { value: point_value, fp_per_frame, curve: Vec::new() },
        CriterionMode::Curve => {
            let mut curve = Vec::new();
            for t in input.thresholds() {
                let (hits, fp) = input.match_at(t);
                curve.push(CurvePoint { threshold: t, fp_per_frame: fp as f64 / frames, detection_rate: rate(&hits) });
            }
            let mut pts: Vec<(f64, f64)> = alloc::vec![(0.0, 0.0)];
            pts.extend(curve.iter().map(|c| (c.fp_per_frame, c.detection_rate)));
            pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            CriterionOutcome { value: limited_area(&pts, 1.0), fp_per_frame, curve }
        }
    }
}

/// Region-based detection criterion.
pub fn rbdc(input: &ObjectEvalInput, mode: CriterionMode) -> Result<CriterionOutcome, MetricError> {
    let total: usize = input.gt.iter().map(|g| g.len()).sum();
    if total == 0 {
        return Err(MetricError::Undefined("RBDC needs ground-truth regions"));
    }
    Ok(criterion(input, mode, |hits| {
        hits.iter().flatten().filter(|h| **h).count() as f64 / total as f64
    }))
}

/// Track-based detection criterion: a track counts as detected when at
/// least `coverage` of its regions are detected.
pub fn tbdc(input: &ObjectEvalInput, coverage: f64, mode: CriterionMode) -> Result<CriterionOutcome, MetricError> {
    if !(0.0..=1.0).contains(&coverage) {
        return Err(MetricError::InvalidParam("coverage must be in [0, 1]"));
    }
    let mut totals: BTreeMap<u32, usize> = BTreeMap::new();
    for (tid, _) in input.gt.iter().flatten() {
        *totals.entry(*tid).or_insert(0) += 1;
    }
    if totals.is_empty() {
        return Err(MetricError::Undefined("TBDC needs ground-truth tracks"));
    }
    Ok(criterion(input, mode, |hits| {
        let mut found: BTreeMap<u32, usize> = BTreeMap::new();
        for (gts, h) in input.gt.iter().zip(hits) {
            for ((tid, _), hit) in gts.iter().zip(h) {
                if *hit {
                    *found.entry(*tid).or_insert(0) += 1;
                }
            }
        }
        let detected = totals
            .iter()
            .filter(|(tid, total)| {
                let f = found.get(tid).copied().unwrap_or(0);
                f as f64 / **total as f64 >= coverage
            })
            .count();
        detected as f64 / totals.len() as f64
    }))
}

/// Detected regions of a segmentation result: the connected components of
/// every label's mask, with overlapping boxes of one label merged at IoU
/// `> merge_h`. Each region takes its label's score (1.0 when unknown).
pub fn detected_regions(
    result: &SegmentationResult,
    label_scores: &BTreeMap<u32, f64>,
    merge_h: f64,
) -> Vec<Vec<DetectedRegion>> {
    (0..result.frame_count())
        .map(|f| {
            let mut out = Vec::new();
            for (label, mask) in result.frame_masks(f) {
                let boxes: Vec<BBox> = connected_components(mask).into_iter().map(|r| r.bbox).collect();
                let score = label_scores.get(label).copied().unwrap_or(1.0);
                out.extend(merge_overlapping(&boxes, merge_h).into_iter().map(|bbox| DetectedRegion { bbox, score }));
            }
            out
        })
        .collect()
}
