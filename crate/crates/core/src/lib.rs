//! Track-any-anomalous-object engine.
//!
//! Turns scored per-frame detections into stable anomaly tracks, aggregates
//! them into segmentation prompts, drives a prompt-based segmenter and scores
//! the result with pixel-level and object-level criteria.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, dataset
//! ingestion, external segmenter processes and the command line live in the
//! companion `tao` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod experiment;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rle;
pub mod segment;
pub mod synth;

pub use geometry::{center, connected_components, iou, mask_to_bbox, merge_overlapping, Region};
pub use model::{
    BBox, ClipMeta, Detection, GroundTruth, GtFrame, GtRegion, MaskPlane, ModelError,
    PipelineParams, Point, Prompt, ScoreMap, TrackedBox,
};
pub use pipeline::{
    aggregate_prompts, robustness_filter, threshold_filter, unfiltered_tracks, FilterTrace,
    FrameDetections, FrameTrace, LabeledBox, PipelineError,
};
pub use rle::{RleError, RleMask};
pub use segment::{
    segment, DriftBackend, DriftParams, OracleBackend, SegmentBackend, SegmentError,
    SegmentationRequest, SegmentationResult, TrackMode,
};
