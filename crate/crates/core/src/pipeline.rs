//! Anomalous box extraction: score thresholding, the boxes robustness filter
//! and prompt aggregation.
//!
//! The robustness filter keeps boxes that are temporally consistent:
//!
//! 1. *Inherit*: a box at frame `i` takes over label `L` when, within frames
//!    `i-k ..= i-1`, enough frames hold an `L`-labelled box with IoU `> h`.
//!    "Enough" is `m` frames, or every frame since `L` was created when `L`
//!    is younger than `m` frames. If several labels qualify, the one with the
//!    most supporting frames wins, then the smallest label.
//! 2. *Assign*: a box that inherits nothing gets a fresh label when at least
//!    `m` of frames `i+1 ..= i+k` contain a thresholded box with IoU `> h`.
//!    The new `(frame, box, label)` tuple is saved immediately.
//! 3. *Save*: on frames with `frame % l == 0` every labelled box is saved.
//!
//! Boxes that neither inherit nor get assigned are discarded.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geometry::iou;
use crate::model::{BBox, Detection, ModelError, PipelineParams, Prompt, TrackedBox};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Params(#[from] ModelError),
    #[error("frame index {found} at position {position}, expected {expected} (frames must be contiguous)")]
    NonContiguous { position: usize, expected: usize, found: usize },
    #[error("detection tagged frame {found} inside frame {frame}")]
    MisfiledDetection { frame: usize, found: usize },
}

/// All detections of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame: usize,
    pub detections: Vec<Detection>,
}

impl FrameDetections {
    pub fn empty(frame: usize) -> Self {
        FrameDetections { frame, detections: Vec::new() }
    }
}

/// Groups a flat detection list into `frame_count` contiguous frames.
/// Detections with `frame >= frame_count` are returned as an error.
pub fn group_by_frame(
    detections: &[Detection],
    frame_count: usize,
) -> Result<Vec<FrameDetections>, PipelineError> {
    let mut frames: Vec<FrameDetections> = (0..frame_count).map(FrameDetections::empty).collect();
    for d in detections {
        match frames.get_mut(d.frame) {
            Some(f) => f.detections.push(d.clone()),
            None => {
                return Err(PipelineError::NonContiguous {
                    position: d.frame,
                    expected: frame_count.saturating_sub(1),
                    found: d.frame,
                })
            }
        }
    }
    Ok(frames)
}

/// Keeps detections with `score > tau`; frame structure and order preserved.
pub fn threshold_filter(frames: &[FrameDetections], tau: f64) -> Vec<FrameDetections> {
    frames
        .iter()
        .map(|f| FrameDetections {
            frame: f.frame,
            detections: f.detections.iter().filter(|d| d.score > tau).cloned().collect(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub bbox: BBox,
    pub label: u32,
    pub score: f64,
}

/// What happened to every anomalous box of one frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameTrace {
    pub frame: usize,
    pub inherited: Vec<LabeledBox>,
    pub assigned: Vec<LabeledBox>,
    pub discarded: Vec<Detection>,
    pub saved: Vec<TrackedBox>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterTrace {
    pub frames: Vec<FrameTrace>,
}

impl FilterTrace {
    /// Max anomaly score over every box carrying each label.
    pub fn label_scores(&self) -> BTreeMap<u32, f64> {
        let mut out: BTreeMap<u32, f64> = BTreeMap::new();
        for f in &self.frames {
            for b in f.inherited.iter().chain(&f.assigned) {
                let e = out.entry(b.label).or_insert(b.score);
                *e = e.max(b.score);
            }
        }
        out
    }
}

fn check_contiguous(frames: &[FrameDetections]) -> Result<(), PipelineError> {
    let base = frames.first().map_or(0, |f| f.frame);
    for (pos, f) in frames.iter().enumerate() {
        if f.frame != base + pos {
            return Err(PipelineError::NonContiguous { position: pos, expected: base + pos, found: f.frame });
        }
        if let Some(d) = f.detections.iter().find(|d| d.frame != f.frame) {
            return Err(PipelineError::MisfiledDetection { frame: f.frame, found: d.frame });
        }
    }
    Ok(())
}

/// Runs the boxes robustness filter over thresholded frames.
///
/// Returns the saved tuples sorted by `(frame, label)` and a per-frame trace.
pub fn robustness_filter(
    frames: &[FrameDetections],
    params: &PipelineParams,
) -> Result<(Vec<TrackedBox>, FilterTrace), PipelineError> {
    params.validate()?;
    check_contiguous(frames)?;
    let (k, m, h, l) = (params.k, params.m, params.h, params.l);
    let n = frames.len();

    let mut labeled: Vec<Vec<LabeledBox>> = Vec::with_capacity(n);
    let mut birth: Vec<usize> = Vec::new();
    let mut trace = FilterTrace { frames: Vec::with_capacity(n) };
    let mut saved: Vec<TrackedBox> = Vec::new();

    for i in 0..n {
        let frame_idx = frames[i].frame;
        let mut ft = FrameTrace { frame: frame_idx, ..FrameTrace::default() };
        let mut current: Vec<LabeledBox> = Vec::new();
        let window_start = i.saturating_sub(k);

        for det in &frames[i].detections {
            // Step 1: per-label count of past frames holding a matching box
            let mut support: BTreeMap<u32, usize> = BTreeMap::new();
            for past in &labeled[window_start..i] {
                let mut hit: Vec<u32> =
                    past.iter().filter(|p| iou(&det.bbox, &p.bbox) > h).map(|p| p.label).collect();
                hit.sort_unstable();
                hit.dedup();
                for lab in hit {
                    *support.entry(lab).or_insert(0) += 1;
                }
            }
            let inherited = support
                .iter()
                .filter(|(lab, count)| {
                    let age = i - birth[**lab as usize];
                    **count >= m.min(k.min(age))
                })
                // max support, ties to smallest label (BTreeMap iterates ascending)
                .fold(None::<(u32, usize)>, |best, (lab, c)| match best {
                    Some((_, bc)) if bc >= *c => best,
                    _ => Some((*lab, *c)),
                });
            if let Some((label, _)) = inherited {
                let lb = LabeledBox { bbox: det.bbox, label, score: det.score };
                ft.inherited.push(lb);
                current.push(lb);
                continue;
            }

            // Step 2: forward confirmation against raw thresholded boxes
            let ahead = (i + 1..=(i + k).min(n.saturating_sub(1)))
                .filter(|&q| frames[q].detections.iter().any(|b| iou(&det.bbox, &b.bbox) > h))
                .count();
            if ahead >= m {
                let label = birth.len() as u32;
                birth.push(i);
                let lb = LabeledBox { bbox: det.bbox, label, score: det.score };
                ft.assigned.push(lb);
                ft.saved.push(TrackedBox { frame: frame_idx, bbox: det.bbox, label });
                current.push(lb);
            } else {
                ft.discarded.push(det.clone());
            }
        }

        // Step 3: periodic save of the inherited boxes (assigned ones are already saved)
        if frame_idx.is_multiple_of(l) {
            for lb in &ft.inherited {
                ft.saved.push(TrackedBox { frame: frame_idx, bbox: lb.bbox, label: lb.label });
            }
        }
        saved.extend_from_slice(&ft.saved);
        labeled.push(current);
        trace.frames.push(ft);
    }

    sort_tracked(&mut saved);
    Ok((saved, trace))
}

pub(crate) fn sort_tracked(v: &mut [TrackedBox]) {
    v.sort_by(|a, b| {
        a.frame.cmp(&b.frame).then(a.label.cmp(&b.label)).then_with(|| {
            let (x, y) = (a.bbox.to_array(), b.bbox.to_array());
            x.iter().zip(&y).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(core::cmp::Ordering::Equal)
        })
    });
}

/// Prompts without robustness filtering: every thresholded box on frames
/// with `frame % l == 0` becomes a prompt carrying its own fresh label.
/// Returns the tuples and each label's score.
pub fn unfiltered_tracks(frames: &[FrameDetections], l: usize) -> (Vec<TrackedBox>, BTreeMap<u32, f64>) {
    let l = l.max(1);
    let mut out = Vec::new();
    let mut scores = BTreeMap::new();
    for f in frames.iter().filter(|f| f.frame % l == 0) {
        for d in &f.detections {
            let label = out.len() as u32;
            out.push(TrackedBox { frame: f.frame, bbox: d.bbox, label });
            scores.insert(label, d.score);
        }
    }
    (out, scores)
}

/// One prompt (center, box, frame, label) per saved tuple, ordered by
/// `(frame, label)`. The save schedule is already applied by the filter.
pub fn aggregate_prompts(tracked: &[TrackedBox]) -> Vec<Prompt> {
    let mut sorted = tracked.to_vec();
    sort_tracked(&mut sorted);
    sorted.iter().map(Prompt::from_tracked).collect()
}
