//! Domain types shared by every stage: boxes, detections, tracked boxes,
//! prompts, pixel masks, score maps and ground truth.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid box [{x1}, {y1}, {x2}, {y2}]: need finite, non-negative coordinates with x1 < x2 and y1 < y2")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("mask bit count {got} does not match {width}x{height}")]
    MaskSize { width: u32, height: u32, got: usize },
    #[error("dimension mismatch: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    Dimensions { expected_w: u32, expected_h: u32, got_w: u32, got_h: u32 },
    #[error("score map contains a non-finite value at pixel {0}")]
    NonFiniteScore(usize),
    #[error("invalid pipeline parameter: {0}")]
    InvalidParams(&'static str),
    #[error("frame {frame}: duplicate ground-truth track id {track_id}")]
    DuplicateTrack { frame: usize, track_id: u32 },
    #[error("frame {frame}: region pixel {pixel} outside the {width}x{height} frame")]
    RegionOutOfBounds { frame: usize, pixel: u32, width: u32, height: u32 },
}

/// Axis-aligned box in continuous pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, ModelError> {
        let ok = [x1, y1, x2, y2].iter().all(|v| v.is_finite() && *v >= 0.0) && x1 < x2 && y1 < y2;
        if ok {
            Ok(Self { x1, y1, x2, y2 })
        } else {
            Err(ModelError::InvalidBox { x1, y1, x2, y2 })
        }
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }
    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }
    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point { x: (self.x1 + self.x2) / 2.0, y: (self.y1 + self.y2) / 2.0 }
    }

    /// Smallest box containing both.
    pub fn enclose(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = ModelError;
    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x1, self.y1, self.x2, self.y2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// A scored, class-labelled detector output on one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: usize,
    pub bbox: BBox,
    pub class_label: String,
    pub score: f64,
}

/// `(frame, box, label)` tuple saved by the robustness filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackedBox {
    pub frame: usize,
    pub bbox: BBox,
    pub label: u32,
}

/// Box + center point prompt for the segmenter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub frame: usize,
    pub label: u32,
    pub bbox: BBox,
    pub center: Point,
}

impl Prompt {
    pub fn from_tracked(t: &TrackedBox) -> Self {
        Prompt { frame: t.frame, label: t.label, bbox: t.bbox, center: t.bbox.center() }
    }
}

/// Clip dimensions shared by every frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipMeta {
    pub frame_count: usize,
    pub width: u32,
    pub height: u32,
}

/// Row-major binary pixel mask, bit-packed.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MaskPlane {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl MaskPlane {
    pub fn new(width: u32, height: u32) -> Self {
        let len = width as usize * height as usize;
        MaskPlane { width, height, words: vec![0; len.div_ceil(64)] }
    }

    pub fn from_bits(width: u32, height: u32, bits: &[bool]) -> Result<Self, ModelError> {
        if bits.len() != width as usize * height as usize {
            return Err(ModelError::MaskSize { width, height, got: bits.len() });
        }
        let mut m = MaskPlane::new(width, height);
        for (i, &b) in bits.iter().enumerate() {
            if b {
                m.set_index(i, true);
            }
        }
        Ok(m)
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }
    pub fn same_dims(&self, other: &MaskPlane) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        (self.words[i >> 6] >> (i & 63)) & 1 == 1
    }

    #[inline]
    pub fn set_index(&mut self, i: usize, v: bool) {
        assert!(i < self.len(), "pixel index {i} out of range");
        let bit = 1u64 << (i & 63);
        if v {
            self.words[i >> 6] |= bit;
        } else {
            self.words[i >> 6] &= !bit;
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.get_index(y as usize * self.width as usize + x as usize)
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.set_index(y as usize * self.width as usize + x as usize, v);
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    /// Indices of set pixels in row-major order.
    pub fn iter_set(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            core::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * 64 + b)
            })
        })
    }

    pub fn to_bits(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.get_index(i)).collect()
    }

    /// In-place union. Panics on dimension mismatch.
    pub fn union_with(&mut self, other: &MaskPlane) {
        assert!(self.same_dims(other), "mask dimension mismatch");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
    }

    pub fn intersection_count(&self, other: &MaskPlane) -> usize {
        self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones() as usize).sum()
    }
}

impl fmt::Debug for MaskPlane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MaskPlane({}x{}, {} set)", self.width, self.height, self.count())
    }
}

/// Row-major real-valued per-pixel anomaly scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl ScoreMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != width as usize * height as usize {
            return Err(ModelError::MaskSize { width, height, got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteScore(i));
        }
        Ok(ScoreMap { width, height, values })
    }

    pub fn from_mask(m: &MaskPlane) -> Self {
        let values = (0..m.len()).map(|i| if m.get_index(i) { 1.0 } else { 0.0 }).collect();
        ScoreMap { width: m.width, height: m.height, values }
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One connected anomalous region of a ground-truth frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GtRegion {
    pub track_id: u32,
    /// Sorted row-major pixel indices.
    pub pixels: Vec<u32>,
    /// Tight pixel-cell box of `pixels`.
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtFrame {
    pub mask: MaskPlane,
    pub regions: Vec<GtRegion>,
}

/// Per-frame anomaly masks plus regions carrying ground-truth track ids.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    width: u32,
    height: u32,
    frames: Vec<GtFrame>,
}

impl GroundTruth {
    /// Builds ground truth from per-frame `(track_id, pixel indices)` regions.
    /// Empty regions are dropped; the frame mask is the union of its regions.
    pub fn from_regions(
        width: u32,
        height: u32,
        frames: Vec<Vec<(u32, Vec<u32>)>>,
    ) -> Result<Self, ModelError> {
        let n = width as usize * height as usize;
        let mut out = Vec::with_capacity(frames.len());
        for (fi, regions) in frames.into_iter().enumerate() {
            let mut mask = MaskPlane::new(width, height);
            let mut seen = BTreeSet::new();
            let mut gt_regions = Vec::with_capacity(regions.len());
            for (track_id, mut pixels) in regions {
                if pixels.is_empty() {
                    continue;
                }
                if !seen.insert(track_id) {
                    return Err(ModelError::DuplicateTrack { frame: fi, track_id });
                }
                pixels.sort_unstable();
                pixels.dedup();
                if let Some(&p) = pixels.last().filter(|p| **p as usize >= n) {
                    return Err(ModelError::RegionOutOfBounds { frame: fi, pixel: p, width, height });
                }
                let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
                for &p in &pixels {
                    mask.set_index(p as usize, true);
                    let (x, y) = (p % width, p / width);
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
                let bbox = BBox::new(x0 as f64, y0 as f64, (x1 + 1) as f64, (y1 + 1) as f64)?;
                gt_regions.push(GtRegion { track_id, pixels, bbox });
            }
            gt_regions.sort_by_key(|r| r.track_id);
            out.push(GtFrame { mask, regions: gt_regions });
        }
        Ok(GroundTruth { width, height, frames: out })
    }

    /// Ground truth with no anomalies.
    pub fn empty(width: u32, height: u32, frame_count: usize) -> Self {
        let frames = (0..frame_count)
            .map(|_| GtFrame { mask: MaskPlane::new(width, height), regions: Vec::new() })
            .collect();
        GroundTruth { width, height, frames }
    }

    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
    pub fn frames(&self) -> &[GtFrame] {
        &self.frames
    }
    pub fn frame(&self, i: usize) -> &GtFrame {
        &self.frames[i]
    }
    pub fn clip(&self) -> ClipMeta {
        ClipMeta { frame_count: self.frames.len(), width: self.width, height: self.height }
    }

    pub fn masks(&self) -> Vec<MaskPlane> {
        self.frames.iter().map(|f| f.mask.clone()).collect()
    }

    pub fn track_ids(&self) -> BTreeSet<u32> {
        self.frames.iter().flat_map(|f| f.regions.iter().map(|r| r.track_id)).collect()
    }

    pub fn region_count(&self) -> usize {
        self.frames.iter().map(|f| f.regions.len()).sum()
    }

    pub fn region(&self, frame: usize, track_id: u32) -> Option<&GtRegion> {
        self.frames.get(frame)?.regions.iter().find(|r| r.track_id == track_id)
    }

    /// Mask of one track on one frame (empty where the track is absent).
    pub fn track_mask(&self, frame: usize, track_id: u32) -> MaskPlane {
        let mut m = MaskPlane::new(self.width, self.height);
        if let Some(r) = self.region(frame, track_id) {
            for &p in &r.pixels {
                m.set_index(p as usize, true);
            }
        }
        m
    }
}

/// Robustness filter hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineParams {
    /// Anomaly score threshold; boxes need `score > tau`.
    pub tau: f64,
    /// Tracking window in frames.
    pub k: usize,
    /// Minimum number of matching frames inside the window.
    pub m: usize,
    /// IoU overlap threshold (strict).
    pub h: f64,
    /// Save interval in frames.
    pub l: usize,
}

impl PipelineParams {
    /// UCSD Ped2 profile.
    pub const PED2: PipelineParams = PipelineParams { tau: 1.5, k: 5, m: 3, h: 0.2, l: 5 };
    /// ShanghaiTech Campus profile.
    pub const SHTECH: PipelineParams = PipelineParams { tau: 1.6, k: 5, m: 3, h: 0.2, l: 15 };

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.tau.is_finite() {
            return Err(ModelError::InvalidParams("tau must be finite"));
        }
        if self.k < 1 {
            return Err(ModelError::InvalidParams("k must be >= 1"));
        }
        if self.m < 1 || self.m > self.k {
            return Err(ModelError::InvalidParams("m must satisfy 1 <= m <= k"));
        }
        if !(self.h > 0.0 && self.h < 1.0) {
            return Err(ModelError::InvalidParams("h must satisfy 0 < h < 1"));
        }
        if self.l < 1 {
            return Err(ModelError::InvalidParams("l must be >= 1"));
        }
        Ok(())
    }
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams::PED2
    }
}
