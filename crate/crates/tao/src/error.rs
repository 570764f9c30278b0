use tao_core::experiment::ExperimentError;
use tao_core::metrics::MetricError;
use tao_core::synth::SynthError;
use tao_core::{ModelError, PipelineError, SegmentError};

use crate::formats::FormatError;
use crate::pgm::PgmError;

/// Command failure, grouped by process exit code.
#[derive(Debug, thiserror::Error)]
pub enum TaoError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Backend(String),
    #[error("{0}")]
    Undefined(String),
}

impl TaoError {
    pub fn exit_code(&self) -> i32 {
        match self {
            TaoError::Validation(_) => 2,
            TaoError::Io(_) => 3,
            TaoError::Backend(_) => 4,
            TaoError::Undefined(_) => 5,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        TaoError::Io(format!("{}: {e}", path.display()))
    }

    /// Prefixes the message with the file it concerns.
    pub fn at(self, path: &std::path::Path) -> Self {
        let p = path.display();
        match self {
            TaoError::Validation(m) => TaoError::Validation(format!("{p}: {m}")),
            TaoError::Io(m) => TaoError::Io(format!("{p}: {m}")),
            TaoError::Backend(m) => TaoError::Backend(format!("{p}: {m}")),
            TaoError::Undefined(m) => TaoError::Undefined(format!("{p}: {m}")),
        }
    }
}

impl From<FormatError> for TaoError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io(e) => TaoError::Io(e.to_string()),
            e => TaoError::Validation(e.to_string()),
        }
    }
}

impl From<PgmError> for TaoError {
    fn from(e: PgmError) -> Self {
        match e {
            PgmError::Io { .. } => TaoError::Io(e.to_string()),
            e => TaoError::Validation(e.to_string()),
        }
    }
}

impl From<SegmentError> for TaoError {
    fn from(e: SegmentError) -> Self {
        match e {
            SegmentError::Unavailable(_) | SegmentError::Protocol(_) => TaoError::Backend(e.to_string()),
            e => TaoError::Validation(e.to_string()),
        }
    }
}

impl From<MetricError> for TaoError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Undefined(_) => TaoError::Undefined(e.to_string()),
            e => TaoError::Validation(e.to_string()),
        }
    }
}

impl From<ExperimentError> for TaoError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Segment(e) => e.into(),
            ExperimentError::Metric(e) => e.into(),
            e => TaoError::Validation(e.to_string()),
        }
    }
}

impl From<ModelError> for TaoError {
    fn from(e: ModelError) -> Self {
        TaoError::Validation(e.to_string())
    }
}

impl From<PipelineError> for TaoError {
    fn from(e: PipelineError) -> Self {
        TaoError::Validation(e.to_string())
    }
}

impl From<SynthError> for TaoError {
    fn from(e: SynthError) -> Self {
        TaoError::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for TaoError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            TaoError::Io(e.to_string())
        } else {
            TaoError::Validation(e.to_string())
        }
    }
}
