//! Run manifests, written before a command does any work.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tao_core::experiment::BackendSpec;
use tao_core::{PipelineParams, TrackMode};

use crate::error::TaoError;

pub const MANIFEST: &str = "tao-manifest/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub params: Option<PipelineParams>,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub track: Option<TrackMode>,
    pub filter: Option<bool>,
    pub backend: Option<String>,
    /// Seconds since the Unix epoch when the command started.
    pub started_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            format: MANIFEST.into(),
            command: command.into(),
            params: None,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            track: None,
            filter: None,
            backend: None,
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }

    pub fn describe_backend(spec: &BackendSpec) -> String {
        serde_json::to_string(spec).expect("backend specs serialize")
    }

    /// Writes the manifest to `path` and returns its file name, which
    /// outputs record in their header.
    pub fn write(&self, path: &Path) -> Result<String, TaoError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| TaoError::io(dir, e))?;
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| TaoError::io(path, e))?;
        Ok(path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
    }
}

/// `out.jsonl` -> `out.manifest.json`, beside the output.
pub fn manifest_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    output.with_file_name(format!("{stem}.manifest.json"))
}
