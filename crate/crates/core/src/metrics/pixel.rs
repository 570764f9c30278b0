use alloc::vec::Vec;

use super::MetricError;
use crate::geometry::connected_components;
use crate::model::{MaskPlane, ScoreMap};

/// Pooled per-pixel scores and ground truth over a set of frames.
///
/// Score maps carry finite scores. Binary masks are scored `1` for set
/// pixels and "never" for the rest: unset pixels rank below everything and
/// no threshold ever turns them positive.
#[derive(Debug, Clone)]
pub struct PixelEvalInput {
    frames: Vec<(Vec<f64>, MaskPlane)>,
}

const NEVER: f64 = f64::NEG_INFINITY;

impl PixelEvalInput {
    pub fn from_scores(maps: &[ScoreMap], gt: &[MaskPlane]) -> Result<Self, MetricError> {
        if maps.len() != gt.len() {
            return Err(MetricError::Dimensions("score map and ground-truth frame counts differ"));
        }
        let mut frames = Vec::with_capacity(maps.len());
        for (s, g) in maps.iter().zip(gt) {
            if s.width() != g.width() || s.height() != g.height() {
                return Err(MetricError::Dimensions("score map and ground-truth sizes differ"));
            }
            frames.push((s.values().to_vec(), g.clone()));
        }
        Ok(PixelEvalInput { frames })
    }

    pub fn from_masks(pred: &[MaskPlane], gt: &[MaskPlane]) -> Result<Self, MetricError> {
        if pred.len() != gt.len() {
            return Err(MetricError::Dimensions("prediction and ground-truth frame counts differ"));
        }
        let mut frames = Vec::with_capacity(pred.len());
        for (p, g) in pred.iter().zip(gt) {
            if !p.same_dims(g) {
                return Err(MetricError::Dimensions("prediction and ground-truth sizes differ"));
            }
            let scores = (0..p.len()).map(|i| if p.get_index(i) { 1.0 } else { NEVER }).collect();
            frames.push((scores, g.clone()));
        }
        Ok(PixelEvalInput { frames })
    }

    /// `(score, tag)` for every scored pixel, highest score first. Pixels
    /// scored "never" are left out.
    fn sorted<T: Copy>(&self, mut tag: impl FnMut(usize, usize) -> T) -> Vec<(f64, T)> {
        let mut v: Vec<(f64, T)> = Vec::new();
        for (fi, (scores, _)) in self.frames.iter().enumerate() {
            v.extend(scores.iter().enumerate().filter(|(_, s)| **s != NEVER).map(|(i, s)| (*s, tag(fi, i))));
        }
        v.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
        v
    }

    /// `(positive, negative)` pixel counts of the ground truth.
    fn class_counts(&self) -> (u64, u64) {
        self.frames.iter().fold((0, 0), |(p, n), (_, g)| {
            let c = g.count() as u64;
            (p + c, n + g.len() as u64 - c)
        })
    }
}

/// Iterates `(score, group)` runs of equal score in a sorted slice.
fn groups<T>(v: &[(f64, T)]) -> impl Iterator<Item = (f64, &[(f64, T)])> {
    let mut start = 0;
    core::iter::from_fn(move || {
        if start >= v.len() {
            return None;
        }
        let s = v[start].0;
        let end = start + v[start..].iter().position(|x| x.0 != s).unwrap_or(v.len() - start);
        let g = &v[start..end];
        start = end;
        Some((s, g))
    })
}

/// Rank-based AUROC over all pooled pixels; ties count one half.
pub fn pixel_auroc(input: &PixelEvalInput) -> Result<f64, MetricError> {
    let (pos, neg) = input.class_counts();
    if pos == 0 || neg == 0 {
        return Err(MetricError::Undefined("AUROC needs both anomalous and normal pixels"));
    }
    let sorted = input.sorted(|f, i| input.frames[f].1.get_index(i));
    // twice the Mann-Whitney U, kept integral
    let mut twice_u: u128 = 0;
    let (mut pos_above, mut neg_above) = (0u64, 0u64);
    for (_, g) in groups(&sorted) {
        let p = g.iter().filter(|x| x.1).count() as u64;
        let n = g.len() as u64 - p;
        let below = neg - neg_above - n;
        twice_u += 2 * p as u128 * below as u128 + p as u128 * n as u128;
        pos_above += p;
        neg_above += n;
    }
    // unscored pixels tie with each other below everything else
    twice_u += (pos - pos_above) as u128 * (neg - neg_above) as u128;
    Ok(twice_u as f64 / (2 * pos as u128 * neg as u128) as f64)
}

/// Average precision: sum over distinct thresholds of recall increment
/// times precision.
pub fn pixel_ap(input: &PixelEvalInput) -> Result<f64, MetricError> {
    let total_pos = input.class_counts().0 as usize;
    if total_pos == 0 {
        return Err(MetricError::Undefined("AP needs anomalous pixels"));
    }
    let sorted = input.sorted(|f, i| input.frames[f].1.get_index(i));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (_, g) in groups(&sorted) {
        let p = g.iter().filter(|x| x.1).count();
        tp += p;
        fp += g.len() - p;
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Area under the per-region-overlap curve for FPR in `[0, fpr_limit]`,
/// normalised by `fpr_limit`.
///
/// PRO at a threshold is the mean, over ground-truth connected components,
/// of the detected fraction of the component. The curve starts at `(0, 0)`
/// and has one point per distinct score; it is integrated with trapezoids,
/// interpolated at the limit, and held flat when it ends short of it.
pub fn pixel_aupro(input: &PixelEvalInput, fpr_limit: f64) -> Result<f64, MetricError> {
    if !(fpr_limit > 0.0 && fpr_limit <= 1.0) {
        return Err(MetricError::InvalidParam("fpr_limit must be in (0, 1]"));
    }
    // component id per pixel, 0 for normal pixels
    let mut comp_of: Vec<Vec<u32>> = Vec::with_capacity(input.frames.len());
    let mut sizes: Vec<usize> = Vec::new();
    for (_, gt) in &input.frames {
        let mut ids = alloc::vec![0u32; gt.len()];
        for r in connected_components(gt) {
            sizes.push(r.area());
            let id = sizes.len() as u32;
            for p in &r.pixels {
                ids[*p as usize] = id;
            }
        }
        comp_of.push(ids);
    }
    if sizes.is_empty() {
        return Err(MetricError::Undefined("AUPRO needs at least one ground-truth region"));
    }
    let sorted = input.sorted(|f, i| comp_of[f][i]);
    let negatives = input.class_counts().1 as usize;
    let n_comp = sizes.len() as f64;

    let mut curve: Vec<(f64, f64)> = alloc::vec![(0.0, 0.0)];
    let mut fp = 0usize;
    let mut frac_sum = 0.0;
    for (_, g) in groups(&sorted) {
        for (_, c) in g {
            if *c == 0 {
                fp += 1;
            } else {
                frac_sum += 1.0 / sizes[*c as usize - 1] as f64;
            }
        }
        let fpr = if negatives == 0 { 0.0 } else { fp as f64 / negatives as f64 };
        curve.push((fpr, frac_sum / n_comp));
    }
    Ok(limited_area(&curve, fpr_limit) / fpr_limit)
}

/// Trapezoidal area of a monotone-x curve over `[0, limit]`, holding the
/// last value flat when the curve stops short.
pub(crate) fn limited_area(curve: &[(f64, f64)], limit: f64) -> f64 {
    let mut area = 0.0;
    for w in curve.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x1 <= limit {
            area += (x1 - x0) * (y0 + y1) / 2.0;
        } else {
            if x0 < limit {
                let y_lim = y0 + (y1 - y0) * (limit - x0) / (x1 - x0);
                area += (limit - x0) * (y0 + y_lim) / 2.0;
            }
            return area;
        }
    }
    if let Some(&(x, y)) = curve.last() {
        if x < limit {
            area += (limit - x) * y;
        }
    }
    area
}

/// Pooled `2TP / (2TP + FP + FN)` over all frames.
pub fn pixel_f1(pred: &[MaskPlane], gt: &[MaskPlane]) -> Result<f64, MetricError> {
    if pred.len() != gt.len() {
        return Err(MetricError::Dimensions("prediction and ground-truth frame counts differ"));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (p, g) in pred.iter().zip(gt) {
        if !p.same_dims(g) {
            return Err(MetricError::Dimensions("prediction and ground-truth sizes differ"));
        }
        let t = p.intersection_count(g);
        tp += t;
        fp += p.count() - t;
        fn_ += g.count() - t;
    }
    if tp + fp + fn_ == 0 {
        return Err(MetricError::Undefined("F1 with no predicted and no anomalous pixels"));
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

/// F1 of a single frame, `None` when both masks are empty.
pub fn frame_f1(pred: &MaskPlane, gt: &MaskPlane) -> Option<f64> {
    pixel_f1(core::slice::from_ref(pred), core::slice::from_ref(gt)).ok()
}

/// Pixel is set iff its score is strictly above `threshold`.
pub fn binarize(s: &ScoreMap, threshold: f64) -> MaskPlane {
    let mut m = MaskPlane::new(s.width(), s.height());
    for (i, v) in s.values().iter().enumerate() {
        if *v > threshold {
            m.set_index(i, true);
        }
    }
    m
}
