//! `tao-cfg/1` pipeline documents and command-line value parsers.
//!
//! ```json
//! {
//!   "format": "tao-cfg/1",
//!   "source": {"preset": {"name": "fig3", "seed": 7}},
//!   "params": {"tau": 1.5, "k": 5, "m": 3, "h": 0.2, "l": 5},
//!   "track": "video",
//!   "filter": true,
//!   "backend": {"kind": "oracle", "match_iou": 0.3},
//!   "eval": {"alpha": 0.1, "coverage": 0.1, "fpr_limit": 0.3, "mode": "point", "merge_h": 0.2}
//! }
//! ```
//!
//! `source` is one of `{"preset": {"name", "seed"}}`, `{"scenario": {...}}`
//! (a full synthetic scenario) or `{"dataset": {"masks_dir", "detections"}}`.
//! Relative dataset paths resolve against the document's directory. `eval`
//! may be omitted; every other key is required.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tao_core::experiment::{BackendSpec, FIG3_DRIFT};
use tao_core::metrics::EvalSettings;
use tao_core::synth::ScenarioConfig;
use tao_core::{DriftParams, PipelineParams, TrackMode};

use crate::error::TaoError;
use crate::formats::CONFIG;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    Preset { name: String, seed: u64 },
    Scenario(ScenarioConfig),
    Dataset { masks_dir: PathBuf, detections: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BackendConfig {
    Oracle { match_iou: f64 },
    Drift(DriftParams),
    External { command: String, frames_dir: Option<PathBuf> },
}

impl BackendConfig {
    /// Built-in backend, or `None` for an external process.
    pub fn builtin(&self) -> Option<BackendSpec> {
        match self {
            BackendConfig::Oracle { match_iou } => Some(BackendSpec::Oracle { match_iou: *match_iou }),
            BackendConfig::Drift(p) => Some(BackendSpec::Drift(*p)),
            BackendConfig::External { .. } => None,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            BackendConfig::Drift(p) => BackendConfig::Drift(DriftParams { seed, ..p }),
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub format: String,
    pub source: Source,
    pub params: PipelineParams,
    pub track: TrackMode,
    pub filter: bool,
    pub backend: BackendConfig,
    #[serde(default)]
    pub eval: EvalSettings,
}

impl PipelineConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, TaoError> {
        let mut cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| TaoError::Validation(format!("invalid config: {e}")))?;
        if cfg.format != CONFIG {
            return Err(TaoError::Validation(format!("config format must be {CONFIG}, found {}", cfg.format)));
        }
        cfg.params.validate()?;
        if let Source::Dataset { masks_dir, detections } = &mut cfg.source {
            *masks_dir = base_dir.join(&*masks_dir);
            *detections = base_dir.join(&*detections);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, TaoError> {
        let text = std::fs::read_to_string(path).map_err(|e| TaoError::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("."))).map_err(|e| e.at(path))
    }
}

/// `oracle`, `drift` or `external:<shell command>`.
pub fn parse_backend(s: &str) -> Result<BackendConfig, String> {
    match s {
        "oracle" => Ok(BackendConfig::Oracle { match_iou: DriftParams::default().match_iou }),
        "drift" => Ok(BackendConfig::Drift(FIG3_DRIFT)),
        _ => match s.strip_prefix("external:") {
            Some(cmd) if !cmd.trim().is_empty() => Ok(BackendConfig::External { command: cmd.into(), frames_dir: None }),
            _ => Err(format!("unknown backend {s:?}; expected oracle, drift or external:<cmd>")),
        },
    }
}

/// `ped2` or `shtech`.
pub fn profile(name: &str) -> Result<PipelineParams, String> {
    match name {
        "ped2" => Ok(PipelineParams::PED2),
        "shtech" => Ok(PipelineParams::SHTECH),
        _ => Err(format!("unknown profile {name:?}; expected ped2 or shtech")),
    }
}

/// Applies `key=value,...` overrides (keys `tau`, `k`, `m`, `h`, `l`).
pub fn apply_params(base: PipelineParams, spec: &str) -> Result<PipelineParams, TaoError> {
    let mut p = base;
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| TaoError::Validation(format!("--params entry {item:?} is not key=value")))?;
        match k.trim() {
            "tau" => p.tau = number(k, v)?,
            "h" => p.h = number(k, v)?,
            "k" => p.k = number(k, v)?,
            "m" => p.m = number(k, v)?,
            "l" => p.l = number(k, v)?,
            other => return Err(TaoError::Validation(format!("--params: unknown key {other:?}"))),
        }
    }
    p.validate()?;
    Ok(p)
}

fn number<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, TaoError> {
    v.trim().parse().map_err(|_| TaoError::Validation(format!("--params {key}: cannot parse {v:?}")))
}

/// Seed range written `a..b` or a single seed.
pub fn parse_seeds(s: &str) -> Result<std::ops::Range<u64>, String> {
    let bad = || format!("invalid seed range {s:?}; expected N or A..B");
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (a.parse::<u64>().map_err(|_| bad())?, b.parse::<u64>().map_err(|_| bad())?);
            if a < b {
                Ok(a..b)
            } else {
                Err(bad())
            }
        }
        None => s.parse::<u64>().map(|a| a..a + 1).map_err(|_| bad()),
    }
}
