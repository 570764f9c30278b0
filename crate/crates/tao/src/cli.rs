//! The `tao` command line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use tao_core::experiment::{ablate, extract, run_with_backend, AblationRow, RunOutcome, RunSettings};
use tao_core::metrics::{evaluate, CriterionMode, EvalSettings, MetricsReport};
use tao_core::synth::{generate, ScenarioConfig};
use tao_core::{
    aggregate_prompts, segment, ClipMeta, Detection, DriftBackend, FilterTrace, GroundTruth, OracleBackend,
    PipelineParams, Prompt, SegmentBackend, SegmentationResult, TrackMode,
};

use crate::config::{apply_params, parse_backend, parse_seeds, profile, BackendConfig, PipelineConfig, Source};
use crate::error::TaoError;
use crate::external::{serve_stub, ExternalBackend, StubMode};
use crate::formats::{self, Header, DETECTIONS, PROMPTS, TRACKS};
use crate::manifest::{manifest_path, RunManifest};
use crate::pgm::{ingest_dataset_masks, write_mask_dir};

#[derive(Debug, Parser)]
#[command(name = "tao", version, about = "Track and segment anomalous objects in video")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scenario: detections and ground truth.
    Synth(SynthArgs),
    /// Threshold and robustness-filter detections into tracked boxes.
    Filter(FilterArgs),
    /// Turn tracked boxes into prompts and segment them.
    Segment(SegmentArgs),
    /// Score a segmentation against ground truth.
    Eval(EvalArgs),
    /// Run synthesis or ingestion, filtering, segmentation and evaluation.
    Pipeline(PipelineArgs),
    /// Run the tracking x filtering grid over many seeds.
    Ablate(AblateArgs),
    /// Serve the segmentation protocol on stdin/stdout with a built-in stub.
    #[command(hide = true)]
    ServeStub {
        #[arg(long, value_enum, default_value = "echo")]
        mode: StubMode,
    },
}

#[derive(Debug, Args)]
pub struct ParamArgs {
    /// Dataset profile preloading the filter hyper-parameters: ped2 or shtech.
    #[arg(long, default_value = "ped2", value_parser = profile)]
    pub profile: PipelineParams,
    /// Overrides, e.g. `k=5,m=3,h=0.2,l=5,tau=1.5`.
    #[arg(long)]
    pub params: Option<String>,
}

impl ParamArgs {
    pub fn resolve(&self) -> Result<PipelineParams, TaoError> {
        apply_params(self.profile, self.params.as_deref().unwrap_or(""))
    }
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    /// Detection criteria over a score sweep (curve) or at one operating point.
    #[arg(long, value_enum, default_value = "point")]
    pub mode: ModeArg,
    /// Region IoU needed for an RBDC/TBDC match.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Fraction of a track's regions that must be detected for TBDC.
    #[arg(long, default_value_t = 0.1)]
    pub coverage: f64,
    /// False-positive-rate limit of the AUPRO integral.
    #[arg(long, default_value_t = 0.3)]
    pub fpr_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    Curve,
    Point,
}

impl MetricArgs {
    fn settings(&self, merge_h: f64) -> EvalSettings {
        let mode = match self.mode {
            ModeArg::Curve => CriterionMode::Curve,
            ModeArg::Point => CriterionMode::Point,
        };
        EvalSettings { alpha: self.alpha, coverage: self.coverage, fpr_limit: self.fpr_limit, mode, merge_h }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Built-in scenario: default, fig3, overlap or noiseless.
    #[arg(long, default_value = "default", conflicts_with = "scenario")]
    pub preset: String,
    /// Scenario document (JSON) instead of a preset.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write ground-truth masks as a graymap directory.
    #[arg(long)]
    pub pgm: bool,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub detections: PathBuf,
    /// Tracked boxes output.
    #[arg(long)]
    pub out: PathBuf,
    /// Filter trace and per-label scores output.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Clip length; defaults to one past the last detection frame.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Keep every thresholded box on save frames, each under a fresh label.
    #[arg(long)]
    pub no_filter: bool,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Tracked boxes to prompt with.
    #[arg(long, required_unless_present = "prompts", conflicts_with = "prompts")]
    pub tracks: Option<PathBuf>,
    /// Prompts to segment with.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Ground truth (masks file or graymap directory); built-in backends need it.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Clip size `WIDTHxHEIGHTxFRAMES` when no ground truth is given.
    #[arg(long, value_parser = parse_clip)]
    pub clip: Option<ClipMeta>,
    /// oracle, drift or external:<command>.
    #[arg(long, default_value = "oracle", value_parser = parse_backend)]
    pub backend: BackendConfig,
    /// Frame image directory passed to external backends.
    #[arg(long)]
    pub frames_dir: Option<PathBuf>,
    /// Seed of the drift backend.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Segment every prompted frame on its own, without propagation.
    #[arg(long)]
    pub no_track: bool,
    /// Masks output.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the prompts that were sent.
    #[arg(long)]
    pub prompts_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub masks: PathBuf,
    /// Ground truth (masks file or graymap directory).
    #[arg(long)]
    pub gt: PathBuf,
    /// Filter trace supplying per-label scores; labels score 1 otherwise.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// IoU above which boxes of one label merge into one region.
    #[arg(long, default_value_t = 0.2)]
    pub merge_h: f64,
    #[command(flatten)]
    pub metrics: MetricArgs,
    /// Full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Detection-criterion curves as CSV.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Exit 0 even when a metric is undefined.
    #[arg(long)]
    pub allow_undefined: bool,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Pipeline document (tao-cfg/1).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the document's backend.
    #[arg(long, value_parser = parse_backend)]
    pub backend: Option<BackendConfig>,
    /// Overrides the scenario seed and the drift seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_track: bool,
    #[arg(long)]
    pub no_filter: bool,
    #[arg(long)]
    pub allow_undefined: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long, default_value = "fig3")]
    pub preset: String,
    /// Seed range `A..B` (or one seed).
    #[arg(long, default_value = "0..100", value_parser = parse_seeds)]
    pub seeds: std::ops::Range<u64>,
    /// oracle or drift.
    #[arg(long, default_value = "drift", value_parser = parse_backend)]
    pub backend: BackendConfig,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub metrics: MetricArgs,
    /// Table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// `WIDTHxHEIGHTxFRAMES`.
pub fn parse_clip(s: &str) -> Result<ClipMeta, String> {
    let parts: Vec<&str> = s.split('x').collect();
    let bad = || format!("invalid clip {s:?}; expected WIDTHxHEIGHTxFRAMES");
    match parts.as_slice() {
        [w, h, n] => Ok(ClipMeta {
            width: w.parse().map_err(|_| bad())?,
            height: h.parse().map_err(|_| bad())?,
            frame_count: n.parse().map_err(|_| bad())?,
        }),
        _ => Err(bad()),
    }
}

/// Filter trace dump: per-label scores plus, when filtering, the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceDump {
    pub label_scores: BTreeMap<u32, f64>,
    pub trace: Option<FilterTrace>,
}

fn open(path: &Path) -> Result<BufReader<File>, TaoError> {
    File::open(path).map(BufReader::new).map_err(|e| TaoError::io(path, e))
}

/// Writes through `f` into `path`, creating parent directories.
fn create(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), TaoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| TaoError::io(dir, e))?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(|e| TaoError::io(path, e))?);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| TaoError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), TaoError> {
    create(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

fn read_detections(path: &Path, frames: Option<usize>) -> Result<Vec<Detection>, TaoError> {
    formats::read_detections(open(path)?, frames).map_err(|e| TaoError::from(e).at(path))
}

/// Ground truth from a masks file or a graymap directory.
pub fn load_gt(path: &Path) -> Result<GroundTruth, TaoError> {
    if path.is_dir() {
        Ok(ingest_dataset_masks(path)?)
    } else {
        formats::read_ground_truth(open(path)?).map_err(|e| TaoError::from(e).at(path))
    }
}

fn write_detections(path: &Path, manifest: Option<String>, dets: &[Detection]) -> Result<(), TaoError> {
    create(path, |w| formats::write_detections(w, &Header::new(DETECTIONS).with_manifest(manifest), dets))
}

fn write_masks(path: &Path, manifest: Option<String>, res: &SegmentationResult) -> Result<(), TaoError> {
    create(path, |w| formats::write_masks(w, manifest, res))
}

fn write_curves(path: &Path, report: &MetricsReport) -> Result<(), TaoError> {
    let mut s = String::from("metric,threshold,x,y\n");
    for (name, curve) in [("rbdc", &report.rbdc_curve), ("tbdc", &report.tbdc_curve)] {
        for p in curve {
            writeln!(s, "{name},{},{},{}", p.threshold, p.fp_per_frame, p.detection_rate).expect("string write");
        }
    }
    create(path, |w| w.write_all(s.as_bytes()))
}

fn check_defined(report: &MetricsReport, allow: bool) -> Result<(), TaoError> {
    let missing: Vec<&str> = report.entries().iter().filter(|(_, v)| v.is_none()).map(|(k, _)| *k).collect();
    if missing.is_empty() || allow {
        Ok(())
    } else {
        Err(TaoError::Undefined(format!("undefined metrics: {}", missing.join(", "))))
    }
}

fn segment_with(
    backend: &BackendConfig,
    gt: Option<&GroundTruth>,
    frames_dir: Option<PathBuf>,
    clip: ClipMeta,
    prompts: &[Prompt],
    mode: TrackMode,
) -> Result<SegmentationResult, TaoError> {
    let need_gt = || TaoError::Validation("built-in backends need --gt".into());
    let res = match backend {
        BackendConfig::Oracle { match_iou } => {
            segment(&mut OracleBackend::new(gt.ok_or_else(need_gt)?, *match_iou), clip, prompts, mode)
        }
        BackendConfig::Drift(p) => segment(&mut DriftBackend::new(gt.ok_or_else(need_gt)?, *p)?, clip, prompts, mode),
        BackendConfig::External { command, frames_dir: cfg_dir } => {
            let mut b = ExternalBackend::new(command.clone(), frames_dir.or_else(|| cfg_dir.clone()));
            segment(&mut b, clip, prompts, mode)
        }
    };
    Ok(res?)
}

fn track_mode(no_track: bool) -> TrackMode {
    if no_track {
        TrackMode::FrameIsolated
    } else {
        TrackMode::Video
    }
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), TaoError> {
    let mut cfg = match &a.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| TaoError::io(path, e))?;
            serde_json::from_str::<ScenarioConfig>(&text)
                .map_err(|e| TaoError::Validation(format!("{}: invalid scenario: {e}", path.display())))?
        }
        None => ScenarioConfig::preset(&a.preset).ok_or_else(|| {
            TaoError::Validation(format!("unknown preset {:?}; expected one of {:?}", a.preset, ScenarioConfig::PRESETS))
        })?,
    };
    if let Some(seed) = a.seed {
        cfg = cfg.with_seed(seed);
    }
    let mut m = RunManifest::new("synth");
    m.seeds = vec![cfg.seed];
    m.inputs = a.scenario.iter().cloned().collect();
    m.outputs = vec![a.out.join("detections.jsonl"), a.out.join("gt.jsonl")];
    let manifest = m.write(&a.out.join("synth.manifest.json"))?;
    let sc = generate(&cfg)?;
    write_detections(&a.out.join("detections.jsonl"), Some(manifest), &sc.detections)?;
    let gt_path = a.out.join("gt.jsonl");
    create(&gt_path, |w| formats::write_ground_truth(w, &sc.gt))?;
    if a.pgm {
        write_mask_dir(&a.out.join("masks"), &sc.gt.masks())?;
    }
    log::info!("synth: {} detections over {} frames", sc.detections.len(), sc.gt.frame_count());
    Ok(())
}

pub fn cmd_filter(a: &FilterArgs) -> Result<(), TaoError> {
    let params = a.params.resolve()?;
    let mut m = RunManifest::new("filter");
    m.params = Some(params);
    m.filter = Some(!a.no_filter);
    m.inputs = vec![a.detections.clone()];
    m.outputs = std::iter::once(a.out.clone()).chain(a.trace.clone()).collect();
    let manifest = m.write(&manifest_path(&a.out))?;
    let dets = read_detections(&a.detections, a.frames)?;
    let frames = a.frames.unwrap_or_else(|| dets.iter().map(|d| d.frame + 1).max().unwrap_or(0));
    let ex = extract(&dets, frames, &params, !a.no_filter)?;
    log::info!("filter: {} detections -> {} tracked boxes", dets.len(), ex.tracked.len());
    create(&a.out, |w| formats::write_tracks(w, &Header::new(TRACKS).with_manifest(Some(manifest)), &ex.tracked))?;
    if let Some(path) = &a.trace {
        write_json(path, &TraceDump { label_scores: ex.label_scores, trace: ex.trace })?;
    }
    Ok(())
}

pub fn cmd_segment(a: &SegmentArgs) -> Result<(), TaoError> {
    let backend = a.backend.clone().with_seed(a.seed);
    let mode = track_mode(a.no_track);
    let mut m = RunManifest::new("segment");
    m.seeds = vec![a.seed];
    m.track = Some(mode);
    m.backend = Some(serde_json::to_string(&backend)?);
    m.inputs = a.tracks.iter().chain(&a.prompts).chain(&a.gt).cloned().collect();
    m.outputs = std::iter::once(a.out.clone()).chain(a.prompts_out.clone()).collect();
    let manifest = m.write(&manifest_path(&a.out))?;

    let gt = a.gt.as_deref().map(load_gt).transpose()?;
    let clip = match (&gt, a.clip) {
        (Some(gt), Some(c)) if gt.clip() != c => {
            return Err(TaoError::Validation(format!("--clip {c:?} disagrees with ground truth {:?}", gt.clip())))
        }
        (Some(gt), _) => gt.clip(),
        (None, Some(c)) => c,
        (None, None) => return Err(TaoError::Validation("need --gt or --clip".into())),
    };
    let prompts = match (&a.tracks, &a.prompts) {
        (Some(path), _) => aggregate_prompts(
            &formats::read_tracks(open(path)?, Some(clip.frame_count)).map_err(|e| TaoError::from(e).at(path))?,
        ),
        (None, Some(path)) => {
            formats::read_prompts(open(path)?, Some(clip.frame_count)).map_err(|e| TaoError::from(e).at(path))?
        }
        (None, None) => unreachable!("clap requires tracks or prompts"),
    };
    if let Some(path) = &a.prompts_out {
        create(path, |w| formats::write_prompts(w, &Header::new(PROMPTS).with_manifest(Some(manifest.clone())), &prompts))?;
    }
    let res = segment_with(&backend, gt.as_ref(), a.frames_dir.clone(), clip, &prompts, mode)?;
    log::info!("segment: {} prompts, {} labels", prompts.len(), res.labels().len());
    write_masks(&a.out, Some(manifest), &res)
}

pub fn cmd_eval(a: &EvalArgs, stdout: &mut dyn Write) -> Result<(), TaoError> {
    let gt = load_gt(&a.gt)?;
    let res = formats::read_masks(open(&a.masks)?).map_err(|e| TaoError::from(e).at(&a.masks))?;
    let scores = match &a.trace {
        Some(path) => {
            serde_json::from_reader::<_, TraceDump>(open(path)?)
                .map_err(|e| TaoError::from(e).at(path))?
                .label_scores
        }
        None => BTreeMap::new(),
    };
    let report = evaluate(&gt, &res, &scores, &a.metrics.settings(a.merge_h))?;
    stdout.write_all(report.to_key_value().as_bytes()).map_err(|e| TaoError::Io(e.to_string()))?;
    if let Some(path) = &a.json {
        write_json(path, &report)?;
    }
    if let Some(path) = &a.curves {
        write_curves(path, &report)?;
    }
    check_defined(&report, a.allow_undefined)
}

/// Scenario or dataset named by a pipeline document.
fn pipeline_input(cfg: &PipelineConfig, seed: Option<u64>) -> Result<(GroundTruth, Vec<Detection>, Vec<u64>), TaoError> {
    let scenario = |c: ScenarioConfig| -> Result<_, TaoError> {
        let c = match seed {
            Some(s) => c.with_seed(s),
            None => c,
        };
        let sc = generate(&c)?;
        Ok((sc.gt, sc.detections, vec![c.seed]))
    };
    match &cfg.source {
        Source::Preset { name, seed: s } => scenario(
            ScenarioConfig::preset(name)
                .ok_or_else(|| TaoError::Validation(format!("unknown preset {name:?}")))?
                .with_seed(*s),
        ),
        Source::Scenario(c) => scenario(c.clone()),
        Source::Dataset { masks_dir, detections } => {
            let gt = ingest_dataset_masks(masks_dir)?;
            let dets = read_detections(detections, Some(gt.frame_count()))?;
            Ok((gt, dets, Vec::new()))
        }
    }
}

pub fn cmd_pipeline(a: &PipelineArgs, stdout: &mut dyn Write) -> Result<(), TaoError> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(b) = &a.backend {
        cfg.backend = b.clone();
    }
    if let Some(s) = a.seed {
        cfg.backend = cfg.backend.with_seed(s);
    }
    cfg.track = if a.no_track { TrackMode::FrameIsolated } else { cfg.track };
    cfg.filter = cfg.filter && !a.no_filter;

    let out = |name: &str| a.out.join(name);
    let mut m = RunManifest::new("pipeline");
    m.params = Some(cfg.params);
    m.track = Some(cfg.track);
    m.filter = Some(cfg.filter);
    m.backend = Some(serde_json::to_string(&cfg.backend)?);
    m.inputs = vec![a.config.clone()];
    m.outputs = ["detections.jsonl", "gt.jsonl", "tracks.jsonl", "trace.json", "prompts.jsonl", "masks.jsonl"]
        .iter()
        .chain(&["report.txt", "report.json", "curves.csv"])
        .map(|n| out(n))
        .collect();
    let manifest = m.write(&out("pipeline.manifest.json"))?;

    let (gt, dets, seeds) = pipeline_input(&cfg, a.seed)?;
    if !seeds.is_empty() {
        // the manifest records the resolved scenario seed
        RunManifest { seeds: seeds.clone(), ..m }.write(&out("pipeline.manifest.json"))?;
    }
    let settings = RunSettings {
        params: cfg.params,
        track: cfg.track,
        filter: cfg.filter,
        backend: cfg.backend.builtin().unwrap_or_default(),
        eval: cfg.eval,
    };
    let run: RunOutcome = match &cfg.backend {
        BackendConfig::Oracle { match_iou } => {
            run_with_backend(&gt, &dets, &settings, &mut OracleBackend::new(&gt, *match_iou))?
        }
        BackendConfig::Drift(p) => run_with_backend(&gt, &dets, &settings, &mut DriftBackend::new(&gt, *p)?)?,
        BackendConfig::External { command, frames_dir } => {
            let mut b = ExternalBackend::new(command.clone(), frames_dir.clone());
            run_with_backend(&gt, &dets, &settings, &mut b as &mut dyn SegmentBackend)?
        }
    };

    let tag = Some(manifest);
    write_detections(&out("detections.jsonl"), tag.clone(), &dets)?;
    create(&out("gt.jsonl"), |w| formats::write_ground_truth(w, &gt))?;
    create(&out("tracks.jsonl"), |w| {
        formats::write_tracks(w, &Header::new(TRACKS).with_manifest(tag.clone()), &run.extraction.tracked)
    })?;
    write_json(
        &out("trace.json"),
        &TraceDump { label_scores: run.extraction.label_scores.clone(), trace: run.extraction.trace.clone() },
    )?;
    create(&out("prompts.jsonl"), |w| {
        formats::write_prompts(w, &Header::new(PROMPTS).with_manifest(tag.clone()), &run.prompts)
    })?;
    write_masks(&out("masks.jsonl"), tag, &run.result)?;
    let kv = run.report.to_key_value();
    create(&out("report.txt"), |w| w.write_all(kv.as_bytes()))?;
    write_json(&out("report.json"), &run.report)?;
    write_curves(&out("curves.csv"), &run.report)?;
    stdout.write_all(kv.as_bytes()).map_err(|e| TaoError::Io(e.to_string()))?;
    check_defined(&run.report, a.allow_undefined)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| format!("{:.2}", v * 100.0))
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

fn track_name(t: TrackMode) -> &'static str {
    match t {
        TrackMode::Video => "video",
        TrackMode::FrameIsolated => "frame-isolated",
    }
}

/// Fixed-width comparison table, values x100.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = format!(
        "{:<15} {:<6} {:>5} {:>9} {:>12} {:>9} {:>7} {:>7}\n",
        "track", "filter", "seeds", "pixel_f1", "pixel_auroc", "pixel_ap", "rbdc", "tbdc"
    );
    for r in rows {
        writeln!(
            s,
            "{:<15} {:<6} {:>5} {:>9} {:>12} {:>9} {:>7} {:>7}",
            track_name(r.track),
            on_off(r.filter),
            r.seeds,
            cell(r.pixel_f1),
            cell(r.pixel_auroc),
            cell(r.pixel_ap),
            cell(r.rbdc),
            cell(r.tbdc)
        )
        .expect("string write");
    }
    s
}

pub fn cmd_ablate(a: &AblateArgs, stdout: &mut dyn Write) -> Result<(), TaoError> {
    let params = a.params.resolve()?;
    let scenario = ScenarioConfig::preset(&a.preset).ok_or_else(|| {
        TaoError::Validation(format!("unknown preset {:?}; expected one of {:?}", a.preset, ScenarioConfig::PRESETS))
    })?;
    let backend = a
        .backend
        .builtin()
        .ok_or_else(|| TaoError::Validation("ablation needs the oracle or drift backend".into()))?;
    let base = RunSettings {
        params,
        track: TrackMode::Video,
        filter: true,
        backend,
        eval: a.metrics.settings(params.h),
    };
    let rows = ablate(&scenario, a.seeds.clone(), &base)?;
    stdout.write_all(ablation_table(&rows).as_bytes()).map_err(|e| TaoError::Io(e.to_string()))?;
    if let Some(path) = &a.csv {
        let mut s = String::from("track,filter,seeds,pixel_f1,pixel_auroc,pixel_ap,rbdc,tbdc\n");
        for r in &rows {
            let v = |x: Option<f64>| x.map_or_else(String::new, |x| x.to_string());
            writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                track_name(r.track),
                on_off(r.filter),
                r.seeds,
                v(r.pixel_f1),
                v(r.pixel_auroc),
                v(r.pixel_ap),
                v(r.rbdc),
                v(r.tbdc)
            )
            .expect("string write");
        }
        create(path, |w| w.write_all(s.as_bytes()))?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), TaoError> {
    let mut stdout = std::io::stdout().lock();
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Segment(a) => cmd_segment(a),
        Command::Eval(a) => cmd_eval(a, &mut stdout),
        Command::Pipeline(a) => cmd_pipeline(a, &mut stdout),
        Command::Ablate(a) => cmd_ablate(a, &mut stdout),
        Command::ServeStub { mode } => {
            serve_stub(*mode, std::io::stdin().lock(), stdout).map_err(|e| TaoError::Io(e.to_string()))
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TAO_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("tao: error: {e}");
            e.exit_code()
        }
    }
}
