//! Prompt-based video segmentation contract and two reference backends.
//!
//! A backend receives the prompt set of a clip and returns one mask per
//! `(frame, label)`. Propagation runs forward: a label produces masks from
//! its first prompted frame onwards, and every later prompt for the label
//! re-anchors it.
//!
//! * [`OracleBackend`] binds each prompt to the ground-truth track whose
//!   region box overlaps it best and emits that track's exact mask. Prompts
//!   that bind to nothing emit their own box as a static rectangle.
//! * [`DriftBackend`] behaves like the oracle, but bound tracks randomly
//!   drift and shrink between prompts, and when more labels are live than
//!   the backend can hold, the oldest bound tracks are forgotten.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{cell_span, iou, rasterize_box};
use crate::model::{BBox, ClipMeta, GroundTruth, MaskPlane, Prompt};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SegmentError {
    #[error("segmentation backend unavailable: {0}")]
    Unavailable(String),
    #[error("segmentation protocol error: {0}")]
    Protocol(String),
    #[error("dimension mismatch: clip is {expected_w}x{expected_h}x{expected_frames}, got {got_w}x{got_h}x{got_frames}")]
    DimensionMismatch {
        expected_w: u32,
        expected_h: u32,
        expected_frames: usize,
        got_w: u32,
        got_h: u32,
        got_frames: usize,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationRequest {
    pub clip: ClipMeta,
    pub prompts: Vec<Prompt>,
    /// Frames the backend must produce masks for; others may stay empty.
    pub frames: Range<usize>,
}

impl SegmentationRequest {
    pub fn new(clip: ClipMeta, prompts: Vec<Prompt>) -> Self {
        let frames = 0..clip.frame_count;
        SegmentationRequest { clip, prompts, frames }
    }

    pub fn validate(&self) -> Result<(), SegmentError> {
        if self.frames.end > self.clip.frame_count {
            return Err(SegmentError::InvalidRequest(alloc::format!(
                "frame range ends at {} beyond clip length {}",
                self.frames.end,
                self.clip.frame_count
            )));
        }
        if let Some(p) = self.prompts.iter().find(|p| p.frame >= self.clip.frame_count) {
            return Err(SegmentError::InvalidRequest(alloc::format!(
                "prompt for label {} on frame {} outside clip of {} frames",
                p.label,
                p.frame,
                self.clip.frame_count
            )));
        }
        Ok(())
    }

    fn sorted_prompts(&self) -> Vec<Prompt> {
        let mut v = self.prompts.clone();
        v.sort_by(|a, b| a.frame.cmp(&b.frame).then(a.label.cmp(&b.label)));
        v
    }
}

/// Per-frame, per-label masks. Labels without an entry on a frame are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    clip: ClipMeta,
    frames: Vec<BTreeMap<u32, MaskPlane>>,
}

impl SegmentationResult {
    pub fn new(clip: ClipMeta) -> Self {
        SegmentationResult { clip, frames: (0..clip.frame_count).map(|_| BTreeMap::new()).collect() }
    }

    pub fn clip(&self) -> ClipMeta {
        self.clip
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Stores a mask; empty masks are not kept.
    pub fn insert(&mut self, frame: usize, label: u32, mask: MaskPlane) -> Result<(), SegmentError> {
        if frame >= self.frames.len() || mask.width() != self.clip.width || mask.height() != self.clip.height {
            return Err(SegmentError::DimensionMismatch {
                expected_w: self.clip.width,
                expected_h: self.clip.height,
                expected_frames: self.clip.frame_count,
                got_w: mask.width(),
                got_h: mask.height(),
                got_frames: frame + 1,
            });
        }
        if mask.is_empty() {
            self.frames[frame].remove(&label);
        } else {
            self.frames[frame].insert(label, mask);
        }
        Ok(())
    }

    pub fn mask(&self, frame: usize, label: u32) -> Option<&MaskPlane> {
        self.frames.get(frame)?.get(&label)
    }

    pub fn frame_masks(&self, frame: usize) -> &BTreeMap<u32, MaskPlane> {
        &self.frames[frame]
    }

    pub fn labels(&self) -> BTreeSet<u32> {
        self.frames.iter().flat_map(|f| f.keys().copied()).collect()
    }

    /// Union over labels of one frame.
    pub fn union(&self, frame: usize) -> MaskPlane {
        let mut m = MaskPlane::new(self.clip.width, self.clip.height);
        for mask in self.frames[frame].values() {
            m.union_with(mask);
        }
        m
    }

    pub fn union_masks(&self) -> Vec<MaskPlane> {
        (0..self.frames.len()).map(|f| self.union(f)).collect()
    }
}

pub trait SegmentBackend {
    fn segment(&mut self, req: &SegmentationRequest) -> Result<SegmentationResult, SegmentError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackMode {
    /// Prompts propagate across the clip.
    Video,
    /// Every prompted frame is segmented on its own, without propagation.
    FrameIsolated,
}

/// Validates the request, runs the backend and checks its output.
pub fn segment(
    backend: &mut dyn SegmentBackend,
    clip: ClipMeta,
    prompts: &[Prompt],
    mode: TrackMode,
) -> Result<SegmentationResult, SegmentError> {
    let full = SegmentationRequest::new(clip, prompts.to_vec());
    full.validate()?;
    let allowed: BTreeSet<u32> = prompts.iter().map(|p| p.label).collect();
    match mode {
        TrackMode::Video => {
            let res = backend.segment(&full)?;
            check_result(&res, clip, &allowed)?;
            Ok(res)
        }
        TrackMode::FrameIsolated => {
            let mut out = SegmentationResult::new(clip);
            let frames: BTreeSet<usize> = prompts.iter().map(|p| p.frame).collect();
            for f in frames {
                let req = SegmentationRequest {
                    clip,
                    prompts: prompts.iter().filter(|p| p.frame == f).copied().collect(),
                    frames: f..f + 1,
                };
                let res = backend.segment(&req)?;
                check_result(&res, clip, &allowed)?;
                for (label, m) in res.frame_masks(f) {
                    out.insert(f, *label, m.clone())?;
                }
            }
            Ok(out)
        }
    }
}

fn check_result(res: &SegmentationResult, clip: ClipMeta, allowed: &BTreeSet<u32>) -> Result<(), SegmentError> {
    if res.clip != clip || res.frame_count() != clip.frame_count {
        return Err(SegmentError::DimensionMismatch {
            expected_w: clip.width,
            expected_h: clip.height,
            expected_frames: clip.frame_count,
            got_w: res.clip.width,
            got_h: res.clip.height,
            got_frames: res.frame_count(),
        });
    }
    if let Some(l) = res.labels().into_iter().find(|l| !allowed.contains(l)) {
        return Err(SegmentError::Protocol(alloc::format!("backend returned unknown label {l}")));
    }
    Ok(())
}

/// What a prompt was attached to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binding {
    Track(u32),
    Unbound(BBox),
}

/// Binds a prompt to the ground-truth track whose region box on the prompt
/// frame has the highest IoU, provided that IoU is positive and at least
/// `match_iou`. Ties go to the smaller track id.
pub fn bind_prompt(gt: &GroundTruth, prompt: &Prompt, match_iou: f64) -> Binding {
    let mut best: Option<(u32, f64)> = None;
    if let Some(frame) = gt.frames().get(prompt.frame) {
        for r in &frame.regions {
            let v = iou(&prompt.bbox, &r.bbox);
            if v > 0.0 && v >= match_iou && best.is_none_or(|(_, b)| v > b) {
                best = Some((r.track_id, v));
            }
        }
    }
    match best {
        Some((id, _)) => Binding::Track(id),
        None => Binding::Unbound(prompt.bbox),
    }
}

fn check_gt(gt: &GroundTruth, clip: ClipMeta) -> Result<(), SegmentError> {
    if gt.clip() != clip {
        return Err(SegmentError::DimensionMismatch {
            expected_w: clip.width,
            expected_h: clip.height,
            expected_frames: clip.frame_count,
            got_w: gt.width(),
            got_h: gt.height(),
            got_frames: gt.frame_count(),
        });
    }
    Ok(())
}

fn render(gt: &GroundTruth, frame: usize, binding: &Binding) -> MaskPlane {
    match binding {
        Binding::Track(id) => gt.track_mask(frame, *id),
        Binding::Unbound(b) => rasterize_box(b, gt.width(), gt.height()),
    }
}

/// Ground-truth backed segmenter standing in for a real model.
#[derive(Debug, Clone)]
pub struct OracleBackend<'a> {
    gt: &'a GroundTruth,
    match_iou: f64,
}

impl<'a> OracleBackend<'a> {
    pub fn new(gt: &'a GroundTruth, match_iou: f64) -> Self {
        OracleBackend { gt, match_iou }
    }

    /// `(frame, label, binding)` for every prompt, in `(frame, label)` order.
    pub fn binding_table(&self, prompts: &[Prompt]) -> Vec<(usize, u32, Binding)> {
        let mut v: Vec<_> = prompts.iter().map(|p| (p.frame, p.label, bind_prompt(self.gt, p, self.match_iou))).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        v
    }
}

impl SegmentBackend for OracleBackend<'_> {
    fn segment(&mut self, req: &SegmentationRequest) -> Result<SegmentationResult, SegmentError> {
        req.validate()?;
        check_gt(self.gt, req.clip)?;
        let prompts = req.sorted_prompts();
        let mut out = SegmentationResult::new(req.clip);
        let mut current: BTreeMap<u32, Binding> = BTreeMap::new();
        let mut next = 0;
        for t in 0..req.frames.end {
            while next < prompts.len() && prompts[next].frame == t {
                let p = &prompts[next];
                current.insert(p.label, bind_prompt(self.gt, p, self.match_iou));
                next += 1;
            }
            if t < req.frames.start {
                continue;
            }
            for (label, binding) in &current {
                out.insert(t, *label, render(self.gt, t, binding))?;
            }
        }
        Ok(out)
    }
}

/// Per-drift shrink factor applied to a drifting track's mask.
pub const DRIFT_SHRINK: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftParams {
    /// Per-frame, per-track drift probability.
    pub p_drift: f64,
    /// Translation per drift event, in pixels.
    pub drift_step: f64,
    /// Maximum number of simultaneously live labels.
    pub capacity: usize,
    pub seed: u64,
    /// Minimum IoU for binding a prompt to a ground-truth track.
    pub match_iou: f64,
}

impl DriftParams {
    pub fn validate(&self) -> Result<(), SegmentError> {
        if !(0.0..=1.0).contains(&self.p_drift) {
            return Err(SegmentError::InvalidRequest("p_drift must be in [0, 1]".into()));
        }
        if self.capacity < 1 {
            return Err(SegmentError::InvalidRequest("capacity must be >= 1".into()));
        }
        if !(self.drift_step.is_finite() && self.drift_step >= 0.0) {
            return Err(SegmentError::InvalidRequest("drift_step must be finite and >= 0".into()));
        }
        Ok(())
    }
}

impl Default for DriftParams {
    fn default() -> Self {
        DriftParams { p_drift: 0.2, drift_step: 2.0, capacity: 8, seed: 0, match_iou: 0.3 }
    }
}

#[derive(Debug, Clone)]
struct LabelState {
    binding: Binding,
    dx: f64,
    dy: f64,
    scale: f64,
    evicted: bool,
}

/// Oracle with accumulating tracking error and bounded memory.
///
/// Each frame, each live bound label not prompted on that frame drifts with
/// probability `p_drift`: its mask moves `drift_step` pixels along a random
/// axis direction and shrinks by [`DRIFT_SHRINK`] about its centre. A new
/// prompt for the label resets the drift. After a frame's prompts are
/// applied, while more labels are live than `capacity`, the oldest bound
/// label is evicted and produces no masks from then on.
#[derive(Debug, Clone)]
pub struct DriftBackend<'a> {
    gt: &'a GroundTruth,
    params: DriftParams,
}

impl<'a> DriftBackend<'a> {
    pub fn new(gt: &'a GroundTruth, params: DriftParams) -> Result<Self, SegmentError> {
        params.validate()?;
        Ok(DriftBackend { gt, params })
    }

    fn render(&self, frame: usize, st: &LabelState) -> MaskPlane {
        if st.dx == 0.0 && st.dy == 0.0 && st.scale == 1.0 {
            return render(self.gt, frame, &st.binding);
        }
        let Binding::Track(id) = st.binding else {
            return render(self.gt, frame, &st.binding);
        };
        let (w, h) = (self.gt.width(), self.gt.height());
        let mut out = MaskPlane::new(w, h);
        let Some(region) = self.gt.region(frame, id) else {
            return out;
        };
        let src = self.gt.track_mask(frame, id);
        let c = region.bbox.center();
        let s = st.scale;
        let map = |v: f64, cv: f64, d: f64| cv + (v - cv) * s + d;
        let (x0, x1) = cell_span(map(region.bbox.x1(), c.x, st.dx), map(region.bbox.x2(), c.x, st.dx), w);
        let (y0, y1) = cell_span(map(region.bbox.y1(), c.y, st.dy), map(region.bbox.y2(), c.y, st.dy), h);
        for y in y0..y1 {
            let sy = libm::floor((y as f64 + 0.5 - st.dy - c.y) / s + c.y);
            if sy < 0.0 || sy >= h as f64 {
                continue;
            }
            for x in x0..x1 {
                let sx = libm::floor((x as f64 + 0.5 - st.dx - c.x) / s + c.x);
                if sx >= 0.0 && sx < w as f64 && src.get(sx as u32, sy as u32) {
                    out.set(x, y, true);
                }
            }
        }
        out
    }
}

impl SegmentBackend for DriftBackend<'_> {
    fn segment(&mut self, req: &SegmentationRequest) -> Result<SegmentationResult, SegmentError> {
        req.validate()?;
        check_gt(self.gt, req.clip)?;
        let prompts = req.sorted_prompts();
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
        let mut states: BTreeMap<u32, LabelState> = BTreeMap::new();
        let mut activation: Vec<u32> = Vec::new();
        let mut out = SegmentationResult::new(req.clip);
        let mut next = 0;
        for t in 0..req.frames.end {
            let mut prompted: BTreeSet<u32> = BTreeSet::new();
            while next < prompts.len() && prompts[next].frame == t {
                let p = &prompts[next];
                next += 1;
                let binding = bind_prompt(self.gt, p, self.params.match_iou);
                match states.get_mut(&p.label) {
                    Some(st) if st.evicted => continue,
                    Some(st) => {
                        st.binding = binding;
                        st.dx = 0.0;
                        st.dy = 0.0;
                        st.scale = 1.0;
                    }
                    None => {
                        activation.push(p.label);
                        states.insert(p.label, LabelState { binding, dx: 0.0, dy: 0.0, scale: 1.0, evicted: false });
                    }
                }
                prompted.insert(p.label);
            }

            let mut live = states.values().filter(|s| !s.evicted).count();
            let mut oldest = 0;
            while live > self.params.capacity {
                let victim = activation[oldest..].iter().position(|l| {
                    let s = &states[l];
                    !s.evicted && matches!(s.binding, Binding::Track(_))
                });
                let Some(pos) = victim else { break };
                oldest += pos;
                let label = activation[oldest];
                states.get_mut(&label).unwrap().evicted = true;
                live -= 1;
            }

            for (label, st) in states.iter_mut() {
                if st.evicted || prompted.contains(label) || !matches!(st.binding, Binding::Track(_)) {
                    continue;
                }
                if rng.random::<f64>() < self.params.p_drift {
                    let step = self.params.drift_step;
                    match rng.random_range(0..4u32) {
                        0 => st.dx += step,
                        1 => st.dx -= step,
                        2 => st.dy += step,
                        _ => st.dy -= step,
                    }
                    st.scale *= DRIFT_SHRINK;
                }
            }

            if t < req.frames.start {
                continue;
            }
            for (label, st) in &states {
                if !st.evicted {
                    out.insert(t, *label, self.render(t, st))?;
                }
            }
        }
        Ok(out)
    }
}
