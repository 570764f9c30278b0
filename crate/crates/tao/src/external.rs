//! `tao-seg/1`: segmentation by an external process over standard streams.
//!
//! Every message is one JSON object per line, tagged by `"type"`:
//!
//! ```text
//! -> {"type":"INIT","version":"tao-seg/1","width":W,"height":H,"frame_count":N,"frames_dir":PATH|null}
//! <- {"type":"ACK","version":"tao-seg/1"}
//! -> {"type":"SEGMENT","prompts":[{"frame":F,"label":L,"box":[x1,y1,x2,y2],"center":[x,y]}, ...]}
//! <- {"type":"RESULT","frame":F,"label":L,"rle":{"width":W,"height":H,"runs":[...]}}   (repeated)
//! <- {"type":"END"}
//! ```
//!
//! The backend may answer any request with `{"type":"ERROR","message":...}`.
//! One request is in flight at a time. Any malformed or unexpected line
//! aborts the session with a protocol error.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};
use tao_core::geometry::rasterize_box;
use tao_core::{
    BBox, ClipMeta, MaskPlane, Prompt, RleMask, SegmentBackend, SegmentError, SegmentationRequest, SegmentationResult,
};

pub const VERSION: &str = "tao-seg/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WirePrompt {
    pub frame: usize,
    pub label: u32,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub center: [f64; 2],
}

impl From<&Prompt> for WirePrompt {
    fn from(p: &Prompt) -> Self {
        WirePrompt { frame: p.frame, label: p.label, bbox: p.bbox, center: [p.center.x, p.center.y] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "UPPERCASE", deny_unknown_fields)]
pub enum Request {
    Init { version: String, width: u32, height: u32, frame_count: usize, frames_dir: Option<String> },
    Segment { prompts: Vec<WirePrompt> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "UPPERCASE", deny_unknown_fields)]
pub enum Response {
    Ack { version: String },
    Result { frame: usize, label: u32, rle: RleMask },
    End {},
    Error { message: String },
}

fn protocol(msg: impl Into<String>) -> SegmentError {
    SegmentError::Protocol(msg.into())
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Session {
    fn send(&mut self, req: &Request) -> Result<(), SegmentError> {
        let mut line = serde_json::to_vec(req).expect("requests serialize");
        line.push(b'\n');
        self.stdin
            .write_all(&line)
            .and_then(|_| self.stdin.flush())
            .map_err(|e| protocol(format!("backend closed its input: {e}")))
    }

    fn recv(&mut self) -> Result<Response, SegmentError> {
        let mut line = String::new();
        let n = self.stdout.read_line(&mut line).map_err(|e| protocol(format!("reading backend output: {e}")))?;
        if n == 0 {
            return Err(protocol("backend closed its output mid-session"));
        }
        log::trace!("backend: {}", line.trim_end());
        match serde_json::from_str(&line) {
            Ok(Response::Error { message }) => Err(protocol(format!("backend error: {message}"))),
            Ok(r) => Ok(r),
            Err(e) => Err(protocol(format!("malformed backend line {:?}: {e}", line.trim_end()))),
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Backend that delegates to a `tao-seg/1` process started with `sh -c`.
///
/// The process starts on the first request and serves the whole clip. After
/// a protocol error the session is dropped, and the next request starts a
/// fresh process.
pub struct ExternalBackend {
    command: String,
    frames_dir: Option<PathBuf>,
    session: Option<(ClipMeta, Session)>,
}

impl ExternalBackend {
    pub fn new(command: impl Into<String>, frames_dir: Option<PathBuf>) -> Self {
        ExternalBackend { command: command.into(), frames_dir, session: None }
    }

    fn start(&self, clip: ClipMeta) -> Result<Session, SegmentError> {
        log::debug!("starting segmentation backend: {}", self.command);
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| SegmentError::Unavailable(format!("{}: {e}", self.command)))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut s = Session { child, stdin, stdout };
        s.send(&Request::Init {
            version: VERSION.into(),
            width: clip.width,
            height: clip.height,
            frame_count: clip.frame_count,
            frames_dir: self.frames_dir.as_ref().map(|p| p.display().to_string()),
        })
        .map_err(|e| SegmentError::Unavailable(format!("{}: {e}", self.command)))?;
        match s.recv()? {
            Response::Ack { version } if version == VERSION => Ok(s),
            Response::Ack { version } => Err(protocol(format!("backend speaks {version}, expected {VERSION}"))),
            other => Err(protocol(format!("expected ACK, got {other:?}"))),
        }
    }

    fn exchange(&mut self, req: &SegmentationRequest) -> Result<SegmentationResult, SegmentError> {
        if self.session.as_ref().is_none_or(|(c, _)| *c != req.clip) {
            self.session = None;
            self.session = Some((req.clip, self.start(req.clip)?));
        }
        let (clip, s) = self.session.as_mut().expect("session started");
        let clip = *clip;
        s.send(&Request::Segment { prompts: req.prompts.iter().map(WirePrompt::from).collect() })?;
        let mut out = SegmentationResult::new(clip);
        let mut seen = std::collections::BTreeSet::new();
        loop {
            match s.recv()? {
                Response::End {} => return Ok(out),
                Response::Result { frame, label, rle } => {
                    if frame >= clip.frame_count {
                        return Err(protocol(format!("RESULT for frame {frame} outside clip of {} frames", clip.frame_count)));
                    }
                    if !seen.insert((frame, label)) {
                        return Err(protocol(format!("duplicate RESULT for frame {frame} label {label}")));
                    }
                    let m = rle.decode().map_err(|e| protocol(format!("RESULT frame {frame} label {label}: {e}")))?;
                    // frame-isolated requests only own their own frames
                    if req.frames.contains(&frame) {
                        out.insert(frame, label, m)?;
                    }
                }
                other => return Err(protocol(format!("expected RESULT or END, got {other:?}"))),
            }
        }
    }
}

impl SegmentBackend for ExternalBackend {
    fn segment(&mut self, req: &SegmentationRequest) -> Result<SegmentationResult, SegmentError> {
        req.validate()?;
        let r = self.exchange(req);
        if r.is_err() {
            self.session = None;
        }
        r
    }
}

/// Behaviour of the built-in loopback server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StubMode {
    /// Propagates each prompt's box rectangle forward until the label is
    /// prompted again.
    Echo,
    /// Acknowledges INIT, then answers SEGMENT with a line that is not JSON.
    Malformed,
    /// Answers SEGMENT with an ERROR message.
    Error,
}

/// Serves `tao-seg/1` on the given streams until the input closes.
pub fn serve_stub<R: BufRead, W: Write>(mode: StubMode, input: R, mut output: W) -> std::io::Result<()> {
    let mut clip = None;
    let send = |output: &mut W, r: &Response| -> std::io::Result<()> {
        serde_json::to_writer(&mut *output, r)?;
        output.write_all(b"\n")?;
        output.flush()
    };
    for line in input.lines() {
        let line = line?;
        let req = match serde_json::from_str::<Request>(&line) {
            Ok(r) => r,
            Err(e) => {
                send(&mut output, &Response::Error { message: format!("bad request: {e}") })?;
                continue;
            }
        };
        match req {
            Request::Init { version, width, height, frame_count, .. } => {
                if version != VERSION {
                    send(&mut output, &Response::Error { message: format!("unsupported version {version}") })?;
                    continue;
                }
                clip = Some(ClipMeta { frame_count, width, height });
                send(&mut output, &Response::Ack { version })?;
            }
            Request::Segment { prompts } => {
                let Some(clip) = clip else {
                    send(&mut output, &Response::Error { message: "SEGMENT before INIT".into() })?;
                    continue;
                };
                match mode {
                    StubMode::Malformed => {
                        output.write_all(b"this is not a protocol message\n")?;
                        output.flush()?;
                    }
                    StubMode::Error => send(&mut output, &Response::Error { message: "stub refuses".into() })?,
                    StubMode::Echo => {
                        for (frame, label, m) in echo_masks(clip, &prompts) {
                            send(&mut output, &Response::Result { frame, label, rle: RleMask::encode(&m) })?;
                        }
                        send(&mut output, &Response::End {})?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Box rectangles carried forward from each label's latest prompt.
fn echo_masks(clip: ClipMeta, prompts: &[WirePrompt]) -> Vec<(usize, u32, MaskPlane)> {
    let mut sorted: Vec<&WirePrompt> = prompts.iter().filter(|p| p.frame < clip.frame_count).collect();
    sorted.sort_by_key(|p| (p.frame, p.label));
    let mut current = std::collections::BTreeMap::new();
    let mut out = Vec::new();
    let mut next = 0;
    for f in 0..clip.frame_count {
        while next < sorted.len() && sorted[next].frame == f {
            current.insert(sorted[next].label, rasterize_box(&sorted[next].bbox, clip.width, clip.height));
            next += 1;
        }
        for (label, m) in &current {
            if !m.is_empty() {
                out.push((f, *label, m.clone()));
            }
        }
    }
    out
}
