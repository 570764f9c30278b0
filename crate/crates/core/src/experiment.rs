//! End-to-end clip runs and the tracking × filtering ablation grid.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::metrics::{evaluate, frame_f1, EvalSettings, MetricError, MetricsReport};
use crate::model::{Detection, GroundTruth, PipelineParams, Prompt, TrackedBox};
use crate::pipeline::{
    aggregate_prompts, group_by_frame, robustness_filter, threshold_filter, unfiltered_tracks, FilterTrace,
    PipelineError,
};
use crate::segment::{
    segment, DriftBackend, DriftParams, OracleBackend, SegmentBackend, SegmentError, SegmentationResult, TrackMode,
};
use crate::synth::{generate, ScenarioConfig, SynthError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BackendSpec {
    Oracle { match_iou: f64 },
    Drift(DriftParams),
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Oracle { match_iou: DriftParams::default().match_iou }
    }
}

/// Drift model used for the forgetting experiments.
pub const FIG3_DRIFT: DriftParams = DriftParams { p_drift: 0.2, drift_step: 2.0, capacity: 8, seed: 0, match_iou: 0.3 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub params: PipelineParams,
    pub track: TrackMode,
    /// Run the robustness filter; otherwise every thresholded box on a save
    /// frame becomes its own prompt.
    pub filter: bool,
    pub backend: BackendSpec,
    pub eval: EvalSettings,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            params: PipelineParams::PED2,
            track: TrackMode::Video,
            filter: true,
            backend: BackendSpec::default(),
            eval: EvalSettings { merge_h: PipelineParams::PED2.h, ..EvalSettings::default() },
        }
    }
}

/// Tracked boxes, per-label scores and (when filtering) the filter trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub tracked: Vec<TrackedBox>,
    pub label_scores: BTreeMap<u32, f64>,
    pub trace: Option<FilterTrace>,
}

pub fn extract(
    detections: &[Detection],
    frame_count: usize,
    params: &PipelineParams,
    filter: bool,
) -> Result<Extraction, ExperimentError> {
    params.validate().map_err(PipelineError::from)?;
    let frames = threshold_filter(&group_by_frame(detections, frame_count)?, params.tau);
    if filter {
        let (tracked, trace) = robustness_filter(&frames, params)?;
        Ok(Extraction { tracked, label_scores: trace.label_scores(), trace: Some(trace) })
    } else {
        let (tracked, label_scores) = unfiltered_tracks(&frames, params.l);
        Ok(Extraction { tracked, label_scores, trace: None })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub extraction: Extraction,
    pub prompts: Vec<Prompt>,
    pub result: SegmentationResult,
    pub report: MetricsReport,
    /// Per-frame F1 of the union mask, `None` where prediction and ground
    /// truth are both empty.
    pub frame_f1: Vec<Option<f64>>,
}

/// Runs one clip with the backend named in `settings`.
pub fn run_clip(
    gt: &GroundTruth,
    detections: &[Detection],
    settings: &RunSettings,
) -> Result<RunOutcome, ExperimentError> {
    match settings.backend {
        BackendSpec::Oracle { match_iou } => {
            run_with_backend(gt, detections, settings, &mut OracleBackend::new(gt, match_iou))
        }
        BackendSpec::Drift(p) => run_with_backend(gt, detections, settings, &mut DriftBackend::new(gt, p)?),
    }
}

pub fn run_with_backend(
    gt: &GroundTruth,
    detections: &[Detection],
    settings: &RunSettings,
    backend: &mut dyn SegmentBackend,
) -> Result<RunOutcome, ExperimentError> {
    let extraction = extract(detections, gt.frame_count(), &settings.params, settings.filter)?;
    let prompts = aggregate_prompts(&extraction.tracked);
    let result = segment(backend, gt.clip(), &prompts, settings.track)?;
    let report = evaluate(gt, &result, &extraction.label_scores, &settings.eval)?;
    let frame_f1 = (0..gt.frame_count()).map(|f| frame_f1(&result.union(f), &gt.frame(f).mask)).collect();
    Ok(RunOutcome { extraction, prompts, result, report, frame_f1 })
}

/// Mean of the defined per-frame values in each quarter of the clip.
pub fn quartile_means(values: &[Option<f64>]) -> [Option<f64>; 4] {
    let n = values.len();
    core::array::from_fn(|q| mean_defined(&values[q * n / 4..(q + 1) * n / 4]))
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let (sum, count) = values.iter().flatten().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub track: TrackMode,
    pub filter: bool,
    pub seeds: usize,
    pub pixel_f1: Option<f64>,
    pub pixel_auroc: Option<f64>,
    pub pixel_ap: Option<f64>,
    pub rbdc: Option<f64>,
    pub tbdc: Option<f64>,
}

/// Grid rows in display order: `(track, filter)`.
pub const ABLATION_GRID: [(TrackMode, bool); 4] = [
    (TrackMode::FrameIsolated, false),
    (TrackMode::FrameIsolated, true),
    (TrackMode::Video, false),
    (TrackMode::Video, true),
];

/// Runs the 2×2 tracking × filtering grid over `seeds`. Each seed drives
/// the scenario and, for the drift backend, the segmenter, so rows differ
/// only by their toggles. Values are averaged over seeds where defined.
pub fn ablate(
    scenario: &ScenarioConfig,
    seeds: Range<u64>,
    base: &RunSettings,
) -> Result<Vec<AblationRow>, ExperimentError> {
    let mut reports: Vec<Vec<MetricsReport>> = alloc::vec![Vec::new(); ABLATION_GRID.len()];
    for seed in seeds.clone() {
        let sc = generate(&scenario.clone().with_seed(seed))?;
        for (row, (track, filter)) in ABLATION_GRID.iter().enumerate() {
            let settings = RunSettings { track: *track, filter: *filter, backend: seeded(base.backend, seed), ..*base };
            reports[row].push(run_clip(&sc.gt, &sc.detections, &settings)?.report);
        }
    }
    Ok(ABLATION_GRID
        .iter()
        .zip(&reports)
        .map(|((track, filter), reps)| {
            let avg = |f: fn(&MetricsReport) -> Option<f64>| mean_defined(&reps.iter().map(f).collect::<Vec<_>>());
            AblationRow {
                track: *track,
                filter: *filter,
                seeds: reps.len(),
                pixel_f1: avg(|r| r.pixel_f1),
                pixel_auroc: avg(|r| r.pixel_auroc),
                pixel_ap: avg(|r| r.pixel_ap),
                rbdc: avg(|r| r.rbdc),
                tbdc: avg(|r| r.tbdc),
            }
        })
        .collect())
}

/// The backend spec with its RNG seed replaced by `seed`.
pub fn seeded(spec: BackendSpec, seed: u64) -> BackendSpec {
    match spec {
        BackendSpec::Drift(p) => BackendSpec::Drift(DriftParams { seed, ..p }),
        other => other,
    }
}
