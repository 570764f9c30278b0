//! Line-delimited JSON record formats.
//!
//! Every file starts with a header line naming its format, e.g.
//! `{"format":"tao-det/1"}`, followed by one record per line. A completely
//! empty file reads as an empty list. Records are written in canonical order
//! (frame, then label) with `\n` line endings and shortest round-trip reals,
//! so serialising a parsed file reproduces it byte for byte.
//!
//! | format      | record                                          |
//! |-------------|-------------------------------------------------|
//! | `tao-det/1` | `{"frame","box":[x1,y1,x2,y2],"class","score"}` |
//! | `tao-trk/1` | `{"frame","box","label"}`                       |
//! | `tao-prm/1` | `{"frame","label","box","center":[x,y]}`        |
//! | `tao-rle/1` | `{"frame","label","width","height","runs"}`     |
//!
//! `tao-rle/1` headers also carry `frame_count`, `width` and `height`. It
//! stores both segmentation masks and ground truth (with the ground-truth
//! track id as label).

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tao_core::{
    BBox, ClipMeta, Detection, GroundTruth, MaskPlane, Point, Prompt, RleMask, SegmentationResult, TrackedBox,
};

pub const DETECTIONS: &str = "tao-det/1";
pub const TRACKS: &str = "tao-trk/1";
pub const PROMPTS: &str = "tao-prm/1";
pub const MASKS: &str = "tao-rle/1";
pub const CONFIG: &str = "tao-cfg/1";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing header: expected {{\"format\":\"{expected}\"}}")]
    MissingHeader { expected: &'static str },
    #[error("line 1: expected format {expected}, found {found}")]
    WrongFormat { expected: &'static str, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn line_err(line: usize, message: impl ToString) -> FormatError {
    FormatError::Line { line, message: message.to_string() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    /// File name of the run manifest that produced this file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

impl Header {
    pub fn new(format: &str) -> Self {
        Header { format: format.to_string(), frame_count: None, width: None, height: None, manifest: None }
    }

    pub fn with_clip(format: &str, clip: ClipMeta) -> Self {
        Header {
            frame_count: Some(clip.frame_count),
            width: Some(clip.width),
            height: Some(clip.height),
            ..Header::new(format)
        }
    }

    pub fn with_manifest(mut self, manifest: Option<String>) -> Self {
        self.manifest = manifest;
        self
    }

    pub fn clip(&self) -> Option<ClipMeta> {
        Some(ClipMeta { frame_count: self.frame_count?, width: self.width?, height: self.height? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetRecord {
    frame: usize,
    #[serde(rename = "box")]
    bbox: BBox,
    class: String,
    score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrkRecord {
    frame: usize,
    #[serde(rename = "box")]
    bbox: BBox,
    label: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrmRecord {
    frame: usize,
    label: u32,
    #[serde(rename = "box")]
    bbox: BBox,
    center: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RleRecord {
    frame: usize,
    label: u32,
    width: u32,
    height: u32,
    runs: Vec<u32>,
}

fn write_lines<W: Write, T: Serialize>(mut w: W, header: &Header, records: &[T]) -> std::io::Result<()> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Header (absent for an empty file) plus `(line number, record)` pairs.
type Lines<T> = (Option<Header>, Vec<(usize, T)>);

fn read_lines<R: BufRead, T: DeserializeOwned>(r: R, expected: &'static str) -> Result<Lines<T>, FormatError> {
    let mut header = None;
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if header.is_none() {
            let h: Header = serde_json::from_str(&line).map_err(|_| FormatError::MissingHeader { expected })?;
            if h.format != expected {
                return Err(FormatError::WrongFormat { expected, found: h.format });
            }
            header = Some(h);
            continue;
        }
        out.push((n, serde_json::from_str(&line).map_err(|e| line_err(n, e))?));
    }
    Ok((header, out))
}

fn check_frame(line: usize, frame: usize, limit: Option<usize>) -> Result<(), FormatError> {
    match limit {
        Some(n) if frame >= n => Err(line_err(line, format!("frame {frame} outside clip of {n} frames"))),
        _ => Ok(()),
    }
}

/// Detections in canonical order: by frame, keeping the input order within
/// a frame.
pub fn write_detections<W: Write>(w: W, header: &Header, dets: &[Detection]) -> std::io::Result<()> {
    let mut recs: Vec<DetRecord> = dets
        .iter()
        .map(|d| DetRecord { frame: d.frame, bbox: d.bbox, class: d.class_label.clone(), score: d.score })
        .collect();
    recs.sort_by_key(|r| r.frame);
    write_lines(w, header, &recs)
}

pub fn read_detections<R: BufRead>(r: R, frame_limit: Option<usize>) -> Result<Vec<Detection>, FormatError> {
    let (_, recs) = read_lines::<_, DetRecord>(r, DETECTIONS)?;
    recs.into_iter()
        .map(|(n, d)| {
            check_frame(n, d.frame, frame_limit)?;
            if !d.score.is_finite() {
                return Err(line_err(n, "score must be finite"));
            }
            Ok(Detection { frame: d.frame, bbox: d.bbox, class_label: d.class, score: d.score })
        })
        .collect()
}

pub fn write_tracks<W: Write>(w: W, header: &Header, tracks: &[TrackedBox]) -> std::io::Result<()> {
    let mut recs: Vec<TrkRecord> = tracks.iter().map(|t| TrkRecord { frame: t.frame, bbox: t.bbox, label: t.label }).collect();
    recs.sort_by_key(|r| (r.frame, r.label));
    write_lines(w, header, &recs)
}

pub fn read_tracks<R: BufRead>(r: R, frame_limit: Option<usize>) -> Result<Vec<TrackedBox>, FormatError> {
    let (_, recs) = read_lines::<_, TrkRecord>(r, TRACKS)?;
    recs.into_iter()
        .map(|(n, t)| {
            check_frame(n, t.frame, frame_limit)?;
            Ok(TrackedBox { frame: t.frame, bbox: t.bbox, label: t.label })
        })
        .collect()
}

pub fn write_prompts<W: Write>(w: W, header: &Header, prompts: &[Prompt]) -> std::io::Result<()> {
    let mut recs: Vec<PrmRecord> = prompts
        .iter()
        .map(|p| PrmRecord { frame: p.frame, label: p.label, bbox: p.bbox, center: [p.center.x, p.center.y] })
        .collect();
    recs.sort_by_key(|r| (r.frame, r.label));
    write_lines(w, header, &recs)
}

pub fn read_prompts<R: BufRead>(r: R, frame_limit: Option<usize>) -> Result<Vec<Prompt>, FormatError> {
    let (_, recs) = read_lines::<_, PrmRecord>(r, PROMPTS)?;
    recs.into_iter()
        .map(|(n, p)| {
            check_frame(n, p.frame, frame_limit)?;
            let [x, y] = p.center;
            let b = p.bbox;
            if !(x > b.x1() && x < b.x2() && y > b.y1() && y < b.y2()) {
                return Err(line_err(n, format!("center ({x}, {y}) is not strictly inside {b}")));
            }
            Ok(Prompt { frame: p.frame, label: p.label, bbox: b, center: Point { x, y } })
        })
        .collect()
}

pub fn write_masks<W: Write>(w: W, manifest: Option<String>, res: &SegmentationResult) -> std::io::Result<()> {
    let clip = res.clip();
    let mut recs = Vec::new();
    for f in 0..res.frame_count() {
        for (label, m) in res.frame_masks(f) {
            recs.push(rle_record(f, *label, m));
        }
    }
    write_lines(w, &Header::with_clip(MASKS, clip).with_manifest(manifest), &recs)
}

fn rle_record(frame: usize, label: u32, m: &MaskPlane) -> RleRecord {
    let r = RleMask::encode(m);
    RleRecord { frame, label, width: r.width, height: r.height, runs: r.runs }
}

type FrameMasks = Vec<(usize, u32, MaskPlane)>;

/// Decoded `(frame, label, mask)` triples of a `tao-rle/1` file.
fn read_rle<R: BufRead>(r: R) -> Result<(ClipMeta, FrameMasks), FormatError> {
    let (header, recs) = read_lines::<_, RleRecord>(r, MASKS)?;
    let Some(header) = header else {
        return Ok((ClipMeta { frame_count: 0, width: 0, height: 0 }, Vec::new()));
    };
    let clip = header.clip().ok_or_else(|| line_err(1, "tao-rle/1 header needs frame_count, width and height"))?;
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(recs.len());
    for (n, rec) in recs {
        check_frame(n, rec.frame, Some(clip.frame_count))?;
        if rec.width != clip.width || rec.height != clip.height {
            return Err(line_err(
                n,
                format!("mask is {}x{}, clip is {}x{}", rec.width, rec.height, clip.width, clip.height),
            ));
        }
        if !seen.insert((rec.frame, rec.label)) {
            return Err(line_err(n, format!("duplicate mask for frame {} label {}", rec.frame, rec.label)));
        }
        let m = RleMask { width: rec.width, height: rec.height, runs: rec.runs }.decode().map_err(|e| line_err(n, e))?;
        out.push((rec.frame, rec.label, m));
    }
    Ok((clip, out))
}

pub fn read_masks<R: BufRead>(r: R) -> Result<SegmentationResult, FormatError> {
    let (clip, masks) = read_rle(r)?;
    let mut res = SegmentationResult::new(clip);
    for (f, label, m) in masks {
        res.insert(f, label, m).map_err(|e| line_err(0, e))?;
    }
    Ok(res)
}

pub fn write_ground_truth<W: Write>(w: W, gt: &GroundTruth) -> std::io::Result<()> {
    let mut recs = Vec::new();
    for f in 0..gt.frame_count() {
        for r in &gt.frame(f).regions {
            recs.push(rle_record(f, r.track_id, &gt.track_mask(f, r.track_id)));
        }
    }
    write_lines(w, &Header::with_clip(MASKS, gt.clip()), &recs)
}

pub fn read_ground_truth<R: BufRead>(r: R) -> Result<GroundTruth, FormatError> {
    let (clip, masks) = read_rle(r)?;
    let mut frames: Vec<Vec<(u32, Vec<u32>)>> = vec![Vec::new(); clip.frame_count];
    for (f, label, m) in masks {
        frames[f].push((label, m.iter_set().map(|p| p as u32).collect()));
    }
    GroundTruth::from_regions(clip.width, clip.height, frames).map_err(|e| line_err(0, e))
}
