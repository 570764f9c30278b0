use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use super::object::{detected_regions, rbdc, tbdc, CriterionMode, CriterionOutcome, CurvePoint, ObjectEvalInput};
use super::pixel::{pixel_ap, pixel_aupro, pixel_auroc, pixel_f1, PixelEvalInput};
use super::MetricError;
use crate::model::GroundTruth;
use crate::segment::SegmentationResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub alpha: f64,
    pub coverage: f64,
    pub fpr_limit: f64,
    pub mode: CriterionMode,
    /// IoU above which boxes of one label are merged into a single region.
    pub merge_h: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { alpha: 0.1, coverage: 0.1, fpr_limit: 0.3, mode: CriterionMode::Point, merge_h: 0.2 }
    }
}

/// Metric values in `[0, 1]`; `None` marks a metric that is undefined on
/// the input (for instance no anomalous ground truth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pixel_auroc: Option<f64>,
    pub pixel_ap: Option<f64>,
    pub pixel_aupro: Option<f64>,
    pub pixel_f1: Option<f64>,
    pub rbdc: Option<f64>,
    pub tbdc: Option<f64>,
    pub settings: EvalSettings,
    pub frames: usize,
    pub rbdc_fp_per_frame: Option<f64>,
    pub rbdc_curve: Vec<CurvePoint>,
    pub tbdc_curve: Vec<CurvePoint>,
}

impl MetricsReport {
    pub fn entries(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("pixel_auroc", self.pixel_auroc),
            ("pixel_ap", self.pixel_ap),
            ("pixel_aupro", self.pixel_aupro),
            ("pixel_f1", self.pixel_f1),
            ("rbdc", self.rbdc),
            ("tbdc", self.tbdc),
        ]
    }

    /// `key=value` lines, values ×100 with two decimals.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            match v {
                Some(v) => writeln!(s, "{k}={:.2}", v * 100.0),
                None => writeln!(s, "{k}=undefined"),
            }
            .expect("writing to a String");
        }
        s
    }
}

fn defined(r: Result<f64, MetricError>) -> Result<Option<f64>, MetricError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(MetricError::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn outcome(r: Result<CriterionOutcome, MetricError>) -> Result<Option<CriterionOutcome>, MetricError> {
    match r {
        Ok(o) => Ok(Some(o)),
        Err(MetricError::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Full dual-level evaluation of a segmentation result. Pixel metrics use
/// the union of all labels per frame; detected regions take the score of
/// their label from `label_scores`.
pub fn evaluate(
    gt: &GroundTruth,
    result: &SegmentationResult,
    label_scores: &BTreeMap<u32, f64>,
    settings: &EvalSettings,
) -> Result<MetricsReport, MetricError> {
    if !(settings.fpr_limit > 0.0 && settings.fpr_limit <= 1.0) {
        return Err(MetricError::InvalidParam("fpr_limit must be in (0, 1]"));
    }
    if result.clip() != gt.clip() {
        return Err(MetricError::Dimensions("segmentation result and ground truth clips differ"));
    }
    let pred = result.union_masks();
    let gt_masks = gt.masks();
    let px = PixelEvalInput::from_masks(&pred, &gt_masks)?;
    let obj = ObjectEvalInput::new(gt, detected_regions(result, label_scores, settings.merge_h), settings.alpha)?;
    let rb = outcome(rbdc(&obj, settings.mode))?;
    let tb = outcome(tbdc(&obj, settings.coverage, settings.mode))?;
    Ok(MetricsReport {
        pixel_auroc: defined(pixel_auroc(&px))?,
        pixel_ap: defined(pixel_ap(&px))?,
        pixel_aupro: defined(pixel_aupro(&px, settings.fpr_limit))?,
        pixel_f1: defined(pixel_f1(&pred, &gt_masks))?,
        rbdc: rb.as_ref().map(|o| o.value),
        tbdc: tb.as_ref().map(|o| o.value),
        settings: *settings,
        frames: gt.frame_count(),
        rbdc_fp_per_frame: rb.as_ref().map(|o| o.fp_per_frame),
        rbdc_curve: rb.map(|o| o.curve).unwrap_or_default(),
        tbdc_curve: tb.map(|o| o.curve).unwrap_or_default(),
    })
}
