//! Dual-level benchmark: pixel metrics (AUROC, AP, AUPRO, F1) and the
//! region/track-based detection criteria.

mod object;
mod pixel;
mod report;

pub use object::{
    detected_regions, rbdc, tbdc, CriterionMode, CriterionOutcome, CurvePoint, DetectedRegion, ObjectEvalInput,
};
pub use pixel::{binarize, frame_f1, pixel_ap, pixel_aupro, pixel_auroc, pixel_f1, PixelEvalInput};
pub use report::{evaluate, EvalSettings, MetricsReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimensions(&'static str),
    #[error("invalid metric parameter: {0}")]
    InvalidParam(&'static str),
}
