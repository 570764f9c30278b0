//! Portable graymap masks and dataset mask-directory ingestion.
//!
//! A dataset clip is a directory holding one 8-bit graymap per frame
//! (`P5` binary or `P2` plain), named by frame number (`0.pgm`, `001.pgm`,
//! ...). Nonzero pixels are anomalous. The smallest number becomes frame 0
//! and numbering must be contiguous from there.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tao_core::geometry::link_ground_truth;
use tao_core::{GroundTruth, MaskPlane};

/// IoU for linking connected components of consecutive frames into tracks.
pub const LINK_IOU: f64 = 0.3;

#[derive(Debug, thiserror::Error)]
pub enum PgmError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: not a readable graymap: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("missing frame {frame}: no graymap numbered {number} in {}", dir.display())]
    MissingFrame { dir: PathBuf, frame: usize, number: u64 },
    #[error("{}: frame {frame} is {got_w}x{got_h}, earlier frames are {expected_w}x{expected_h}", path.display())]
    DimensionDrift { path: PathBuf, frame: usize, expected_w: u32, expected_h: u32, got_w: u32, got_h: u32 },
    #[error("{}: duplicate frame number {number}", path.display())]
    DuplicateFrame { path: PathBuf, number: u64 },
}

/// Cursor over the whitespace-and-comment separated header tokens.
struct Tokens<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn next(&mut self) -> Option<&'a [u8]> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() && self.data[self.pos] != b'#' {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.data[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32, String> {
        let t = self.next().ok_or_else(|| format!("missing {what}"))?;
        std::str::from_utf8(t).ok().and_then(|s| s.parse().ok()).ok_or_else(|| format!("bad {what}"))
    }
}

/// Decodes a graymap into a binary mask, nonzero = set.
pub fn decode_pgm(data: &[u8]) -> Result<MaskPlane, String> {
    let mut t = Tokens { data, pos: 0 };
    let magic = t.next().ok_or("empty file")?;
    let plain = match magic {
        b"P5" => false,
        b"P2" => true,
        _ => return Err("magic must be P5 or P2".into()),
    };
    let w = t.number("width")?;
    let h = t.number("height")?;
    let maxval = t.number("maxval")?;
    if w == 0 || h == 0 {
        return Err("zero dimension".into());
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("maxval {maxval} is not an 8-bit graymap"));
    }
    let n = w as usize * h as usize;
    let mut m = MaskPlane::new(w, h);
    if plain {
        for i in 0..n {
            let v = t.number("pixel")?;
            if v > maxval {
                return Err(format!("pixel {i} value {v} exceeds maxval"));
            }
            m.set_index(i, v != 0);
        }
    } else {
        // exactly one whitespace byte separates the header from the raster
        let start = t.pos + 1;
        let raster = data.get(start..start + n).ok_or("truncated raster")?;
        for (i, v) in raster.iter().enumerate() {
            m.set_index(i, *v != 0);
        }
    }
    Ok(m)
}

/// Binary `P5` graymap, set pixels 255.
pub fn encode_pgm(m: &MaskPlane) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", m.width(), m.height()).into_bytes();
    out.extend((0..m.len()).map(|i| if m.get_index(i) { 255u8 } else { 0 }));
    out
}

pub fn read_pgm(path: &Path) -> Result<MaskPlane, PgmError> {
    let data = std::fs::read(path).map_err(|source| PgmError::Io { path: path.into(), source })?;
    decode_pgm(&data).map_err(|message| PgmError::Parse { path: path.into(), message })
}

pub fn write_pgm(path: &Path, m: &MaskPlane) -> Result<(), PgmError> {
    std::fs::write(path, encode_pgm(m)).map_err(|source| PgmError::Io { path: path.into(), source })
}

/// Writes one graymap per frame as `NNNNN.pgm`.
pub fn write_mask_dir(dir: &Path, masks: &[MaskPlane]) -> Result<(), PgmError> {
    std::fs::create_dir_all(dir).map_err(|source| PgmError::Io { path: dir.into(), source })?;
    for (i, m) in masks.iter().enumerate() {
        write_pgm(&dir.join(format!("{i:05}.pgm")), m)?;
    }
    Ok(())
}

/// Reads every frame mask of a clip directory in frame order.
pub fn read_mask_dir(dir: &Path) -> Result<Vec<MaskPlane>, PgmError> {
    let io = |source| PgmError::Io { path: dir.into(), source };
    let mut numbered = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
            continue;
        }
        let Some(number) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u64>().ok()) else {
            continue;
        };
        if numbered.insert(number, path.clone()).is_some() {
            return Err(PgmError::DuplicateFrame { path, number });
        }
    }
    let Some(&first) = numbered.keys().next() else {
        return Ok(Vec::new());
    };
    let mut masks: Vec<MaskPlane> = Vec::with_capacity(numbered.len());
    for (frame, (&number, path)) in numbered.iter().enumerate() {
        let expected = first + frame as u64;
        if number != expected {
            return Err(PgmError::MissingFrame { dir: dir.into(), frame, number: expected });
        }
        let m = read_pgm(path)?;
        if let Some(f0) = masks.first() {
            if !m.same_dims(f0) {
                return Err(PgmError::DimensionDrift {
                    path: path.clone(),
                    frame,
                    expected_w: f0.width(),
                    expected_h: f0.height(),
                    got_w: m.width(),
                    got_h: m.height(),
                });
            }
        }
        masks.push(m);
    }
    Ok(masks)
}

/// Ground truth of a mask directory with components linked into tracks.
pub fn ingest_dataset_masks(dir: &Path) -> Result<GroundTruth, PgmError> {
    let masks = read_mask_dir(dir)?;
    link_ground_truth(&masks, LINK_IOU).map_err(|e| PgmError::Parse { path: dir.into(), message: e.to_string() })
}
