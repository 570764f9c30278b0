//! Seeded synthetic scenarios: moving objects with ground-truth masks and
//! simulated detector output (jittered boxes, Gaussian anomaly scores and a
//! stream of short-lived false positives).
//!
//! Objects move linearly and bounce off the frame borders. Anomalous objects
//! produce ground-truth regions; normal objects only produce low-scored
//! detections. Unless `allow_overlap` is set, a pixel covered by two
//! anomalous objects belongs to the one listed first.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::geometry::{mask_to_bbox, rasterize_box};
use crate::model::{BBox, Detection, GroundTruth, MaskPlane, ModelError};

/// Scores are clamped to this range.
pub const SCORE_RANGE: (f64, f64) = (0.0, 3.0);
/// Frames of clearance kept around isolated false positives.
pub const ISOLATION_MARGIN: usize = 5;
const PLACEMENT_ATTEMPTS: usize = 32;
const FP_CLASS: &str = "clutter";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
    #[error("invalid scenario config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Rect,
    Ellipse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    /// Top-left corner on `first_frame`.
    pub start: [f64; 2],
    /// Pixels per frame.
    pub velocity: [f64; 2],
    pub size: [f64; 2],
    pub shape: Shape,
    pub anomalous: bool,
    pub score_mean: f64,
    pub score_sigma: f64,
    pub class_label: String,
    pub first_frame: usize,
    /// Last visible frame, inclusive; `None` runs to the end of the clip.
    pub last_frame: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FalsePositiveSpec {
    /// Mean number of new false positives per frame (Poisson).
    pub rate: f64,
    /// Lifetimes are uniform in `1..=max_lifetime` frames.
    pub max_lifetime: usize,
    pub score_mean: f64,
    pub score_sigma: f64,
    /// Side lengths are uniform in `[size_min, size_max]`.
    pub size_min: f64,
    pub size_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Per-coordinate Gaussian box jitter, pixels.
    pub jitter_sigma: f64,
    pub miss_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<ObjectSpec>,
    pub false_positives: FalsePositiveSpec,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub allow_overlap: bool,
    /// Place false positives away from every object and from each other
    /// (within [`ISOLATION_MARGIN`] frames).
    pub isolate_false_positives: bool,
}

/// A placed false positive: visible on `first..first + lifetime`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FalsePositive {
    pub first: usize,
    pub lifetime: usize,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub gt: GroundTruth,
    /// Sorted by frame.
    pub detections: Vec<Detection>,
    /// Tight box of every object on every frame it is visible.
    pub object_boxes: Vec<Vec<Option<BBox>>>,
    /// Ground-truth track id of each anomalous object.
    pub track_ids: Vec<Option<u32>>,
    pub false_positives: Vec<FalsePositive>,
}

fn anomalous(start: [f64; 2], velocity: [f64; 2], size: [f64; 2], score_mean: f64) -> ObjectSpec {
    ObjectSpec {
        start,
        velocity,
        size,
        shape: Shape::Rect,
        anomalous: true,
        score_mean,
        score_sigma: 0.2,
        class_label: "cyclist".to_string(),
        first_frame: 0,
        last_frame: None,
    }
}

fn normal(start: [f64; 2], velocity: [f64; 2]) -> ObjectSpec {
    ObjectSpec {
        start,
        velocity,
        size: [8.0, 18.0],
        shape: Shape::Ellipse,
        anomalous: false,
        score_mean: 0.6,
        score_sigma: 0.2,
        class_label: "pedestrian".to_string(),
        first_frame: 0,
        last_frame: None,
    }
}

impl ScenarioConfig {
    pub const PRESETS: [&'static str; 4] = ["default", "fig3", "overlap", "noiseless"];

    pub fn preset(name: &str) -> Option<ScenarioConfig> {
        let base = ScenarioConfig {
            frames: 200,
            width: 160,
            height: 120,
            objects: Vec::new(),
            false_positives: FalsePositiveSpec {
                rate: 0.5,
                max_lifetime: 2,
                score_mean: 1.9,
                score_sigma: 0.3,
                size_min: 6.0,
                size_max: 16.0,
            },
            noise: NoiseSpec { jitter_sigma: 0.5, miss_prob: 0.02 },
            seed: 0,
            allow_overlap: false,
            isolate_false_positives: false,
        };
        let cfg = match name {
            "default" => ScenarioConfig {
                objects: alloc::vec![
                    anomalous([10.0, 20.0], [0.6, 0.2], [14.0, 20.0], 2.2),
                    anomalous([120.0, 70.0], [-0.4, 0.3], [18.0, 14.0], 2.0),
                    normal([30.0, 80.0], [0.5, -0.1]),
                    normal([80.0, 10.0], [-0.3, 0.4]),
                    normal([140.0, 30.0], [-0.5, 0.0]),
                    normal([60.0, 50.0], [0.2, 0.3]),
                    normal([100.0, 95.0], [0.4, -0.2]),
                ],
                ..base
            },
            "fig3" => ScenarioConfig {
                objects: alloc::vec![
                    anomalous([20.0, 40.0], [0.7, 0.25], [16.0, 22.0], 2.2),
                    normal([30.0, 80.0], [0.5, -0.1]),
                    normal([120.0, 20.0], [-0.3, 0.4]),
                ],
                false_positives: FalsePositiveSpec { rate: 0.15, ..base.false_positives },
                isolate_false_positives: true,
                ..base
            },
            "overlap" => ScenarioConfig {
                objects: alloc::vec![
                    anomalous([10.0, 50.0], [0.7, 0.0], [16.0, 20.0], 2.2),
                    anomalous([134.0, 50.0], [-0.7, 0.0], [16.0, 20.0], 2.1),
                ],
                false_positives: FalsePositiveSpec { rate: 0.0, ..base.false_positives },
                allow_overlap: true,
                ..base
            },
            "noiseless" => ScenarioConfig {
                frames: 60,
                objects: alloc::vec![
                    ObjectSpec { score_sigma: 0.0, ..anomalous([10.0, 20.0], [1.0, 0.5], [14.0, 20.0], 2.2) },
                    ObjectSpec {
                        shape: Shape::Ellipse,
                        score_sigma: 0.0,
                        ..anomalous([110.0, 70.0], [-0.5, 0.25], [18.0, 14.0], 2.0)
                    },
                    ObjectSpec { score_sigma: 0.0, ..normal([40.0, 90.0], [0.5, -0.2]) },
                ],
                false_positives: FalsePositiveSpec { rate: 0.0, ..base.false_positives },
                noise: NoiseSpec { jitter_sigma: 0.0, miss_prob: 0.0 },
                ..base
            },
            _ => return None,
        };
        Some(cfg)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |s: String| Err(SynthError::Invalid(s));
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be positive".into());
        }
        let (w, h) = (self.width as f64, self.height as f64);
        for (i, o) in self.objects.iter().enumerate() {
            let finite = o.start.iter().chain(&o.velocity).chain(&o.size).all(|v| v.is_finite());
            if !finite || o.size[0] <= 0.0 || o.size[1] <= 0.0 {
                return bad(alloc::format!("object {i}: positions, velocities and sizes must be finite, sizes positive"));
            }
            if o.size[0] > w || o.size[1] > h {
                return Err(SynthError::Infeasible(alloc::format!(
                    "object {i} ({}x{}) is larger than the {}x{} frame",
                    o.size[0],
                    o.size[1],
                    self.width,
                    self.height
                )));
            }
            if !(o.score_mean.is_finite() && o.score_sigma.is_finite() && o.score_sigma >= 0.0) {
                return bad(alloc::format!("object {i}: score mean must be finite and sigma >= 0"));
            }
            if o.last_frame.is_some_and(|l| l < o.first_frame) {
                return bad(alloc::format!("object {i}: last_frame before first_frame"));
            }
        }
        let min_anomalous = self.objects.iter().filter(|o| o.anomalous).map(|o| o.score_mean).fold(f64::INFINITY, f64::min);
        let max_normal = self.objects.iter().filter(|o| !o.anomalous).map(|o| o.score_mean).fold(f64::NEG_INFINITY, f64::max);
        if min_anomalous <= max_normal {
            return bad("every anomalous score mean must exceed every normal score mean".into());
        }
        let fp = &self.false_positives;
        if !(fp.rate.is_finite() && fp.rate >= 0.0) {
            return bad("false_positives.rate must be finite and >= 0".into());
        }
        if fp.rate > 0.0 {
            if fp.max_lifetime == 0 {
                return bad("false_positives.max_lifetime must be >= 1".into());
            }
            if !(fp.size_min > 0.0 && fp.size_min <= fp.size_max && fp.size_max.is_finite()) {
                return bad("false_positives sizes need 0 < size_min <= size_max".into());
            }
            if fp.size_max > w || fp.size_max > h {
                return Err(SynthError::Infeasible("false-positive size exceeds the frame".into()));
            }
            if !(fp.score_mean.is_finite() && fp.score_sigma.is_finite() && fp.score_sigma >= 0.0) {
                return bad("false_positives score mean must be finite and sigma >= 0".into());
            }
        }
        let n = &self.noise;
        if !(n.jitter_sigma.is_finite() && n.jitter_sigma >= 0.0) {
            return bad("noise.jitter_sigma must be finite and >= 0".into());
        }
        if !(0.0..=1.0).contains(&n.miss_prob) {
            return bad("noise.miss_prob must be in [0, 1]".into());
        }
        Ok(())
    }
}

/// Position in `[0, span]` after bouncing between the walls.
fn reflect(p: f64, span: f64) -> f64 {
    if span <= 0.0 {
        return 0.0;
    }
    let period = 2.0 * span;
    let q = p - period * libm::floor(p / period);
    if q > span {
        period - q
    } else {
        q
    }
}

fn object_mask(o: &ObjectSpec, t: usize, width: u32, height: u32) -> MaskPlane {
    let dt = (t - o.first_frame) as f64;
    let x = reflect(o.start[0] + o.velocity[0] * dt, width as f64 - o.size[0]);
    let y = reflect(o.start[1] + o.velocity[1] * dt, height as f64 - o.size[1]);
    let b = BBox::new(x, y, x + o.size[0], y + o.size[1]).expect("positive size inside the frame");
    match o.shape {
        Shape::Rect => rasterize_box(&b, width, height),
        Shape::Ellipse => {
            let mut m = MaskPlane::new(width, height);
            let c = b.center();
            let (a, bb) = (o.size[0] / 2.0, o.size[1] / 2.0);
            for py in 0..height {
                let dy = (py as f64 + 0.5 - c.y) / bb;
                if dy.abs() > 1.0 {
                    continue;
                }
                for px in 0..width {
                    let dx = (px as f64 + 0.5 - c.x) / a;
                    if dx * dx + dy * dy <= 1.0 {
                        m.set(px, py, true);
                    }
                }
            }
            m
        }
    }
}

fn visible(o: &ObjectSpec, t: usize) -> bool {
    t >= o.first_frame && o.last_frame.is_none_or(|l| t <= l)
}

fn draw_score(rng: &mut ChaCha8Rng, mean: f64, sigma: f64) -> f64 {
    let s = if sigma > 0.0 { Normal::new(mean, sigma).expect("valid sigma").sample(rng) } else { mean };
    s.clamp(SCORE_RANGE.0, SCORE_RANGE.1)
}

fn jitter(rng: &mut ChaCha8Rng, b: BBox, sigma: f64, width: u32, height: u32) -> BBox {
    if sigma == 0.0 {
        return b;
    }
    let n = Normal::new(0.0, sigma).expect("valid sigma");
    let a = b.to_array();
    let (w, h) = (width as f64, height as f64);
    let j = [
        (a[0] + n.sample(rng)).clamp(0.0, w),
        (a[1] + n.sample(rng)).clamp(0.0, h),
        (a[2] + n.sample(rng)).clamp(0.0, w),
        (a[3] + n.sample(rng)).clamp(0.0, h),
    ];
    BBox::new(j[0], j[1], j[2], j[3]).unwrap_or(b)
}

fn intersects(a: &BBox, b: &BBox) -> bool {
    a.x1() < b.x2() && b.x1() < a.x2() && a.y1() < b.y2() && b.y1() < a.y2()
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario, SynthError> {
    cfg.validate()?;
    let (w, h, n) = (cfg.width, cfg.height, cfg.frames);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut next_id = 0u32;
    let track_ids: Vec<Option<u32>> = cfg
        .objects
        .iter()
        .map(|o| {
            o.anomalous.then(|| {
                next_id += 1;
                next_id - 1
            })
        })
        .collect();

    let mut object_boxes: Vec<Vec<Option<BBox>>> = alloc::vec![alloc::vec![None; n]; cfg.objects.len()];
    let mut gt_frames: Vec<Vec<(u32, Vec<u32>)>> = Vec::with_capacity(n);
    let mut per_frame: Vec<Vec<Detection>> = alloc::vec![Vec::new(); n];

    for t in 0..n {
        let mut claimed = MaskPlane::new(w, h);
        let mut regions = Vec::new();
        for (oi, o) in cfg.objects.iter().enumerate() {
            if !visible(o, t) {
                continue;
            }
            let mask = object_mask(o, t, w, h);
            let Some(tight) = mask_to_bbox(&mask) else { continue };
            object_boxes[oi][t] = Some(tight);
            if let Some(id) = track_ids[oi] {
                let pixels: Vec<u32> =
                    mask.iter_set().filter(|&p| cfg.allow_overlap || !claimed.get_index(p)).map(|p| p as u32).collect();
                claimed.union_with(&mask);
                regions.push((id, pixels));
            }
            let missed = rng.random::<f64>() < cfg.noise.miss_prob;
            let bbox = jitter(&mut rng, tight, cfg.noise.jitter_sigma, w, h);
            let score = draw_score(&mut rng, o.score_mean, o.score_sigma);
            if !missed {
                per_frame[t].push(Detection { frame: t, bbox, class_label: o.class_label.clone(), score });
            }
        }
        gt_frames.push(regions);
    }

    let mut fp_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    fp_rng.set_stream(1);
    let fps = place_false_positives(cfg, &object_boxes, &mut fp_rng);
    for fp in &fps {
        let end = (fp.first + fp.lifetime).min(n);
        for (t, dets) in per_frame.iter_mut().enumerate().take(end).skip(fp.first) {
            let score = draw_score(&mut fp_rng, cfg.false_positives.score_mean, cfg.false_positives.score_sigma);
            dets.push(Detection { frame: t, bbox: fp.bbox, class_label: FP_CLASS.to_string(), score });
        }
    }

    Ok(Scenario {
        gt: GroundTruth::from_regions(w, h, gt_frames)?,
        detections: per_frame.into_iter().flatten().collect(),
        object_boxes,
        track_ids,
        false_positives: fps,
    })
}

fn place_false_positives(
    cfg: &ScenarioConfig,
    object_boxes: &[Vec<Option<BBox>>],
    rng: &mut ChaCha8Rng,
) -> Vec<FalsePositive> {
    let spec = &cfg.false_positives;
    let n = cfg.frames;
    let mut out: Vec<FalsePositive> = Vec::new();
    if spec.rate == 0.0 {
        return out;
    }
    let poisson = Poisson::new(spec.rate).expect("positive rate");
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    for t in 0..n {
        let count = poisson.sample(rng) as usize;
        for _ in 0..count {
            let lifetime = rng.random_range(1..=spec.max_lifetime).min(n - t);
            for _ in 0..PLACEMENT_ATTEMPTS {
                let bw = rng.random_range(spec.size_min..=spec.size_max);
                let bh = rng.random_range(spec.size_min..=spec.size_max);
                let x = rng.random_range(0.0..=w - bw);
                let y = rng.random_range(0.0..=h - bh);
                let bbox = BBox::new(x, y, x + bw, y + bh).expect("positive size");
                let cand = FalsePositive { first: t, lifetime, bbox };
                if !cfg.isolate_false_positives || isolated(&cand, object_boxes, &out, n) {
                    out.push(cand);
                    break;
                }
            }
        }
    }
    out
}

fn isolated(c: &FalsePositive, object_boxes: &[Vec<Option<BBox>>], placed: &[FalsePositive], n: usize) -> bool {
    let lo = c.first.saturating_sub(ISOLATION_MARGIN);
    let hi = (c.first + c.lifetime + ISOLATION_MARGIN).min(n);
    let clear_of_objects =
        object_boxes.iter().all(|boxes| boxes[lo..hi].iter().flatten().all(|b| !intersects(b, &c.bbox)));
    let clear_of_fps = placed.iter().all(|p| {
        let near = p.first < hi && lo < p.first + p.lifetime;
        !near || !intersects(&p.bbox, &c.bbox)
    });
    clear_of_objects && clear_of_fps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::connected_components;

    fn empty_config() -> ScenarioConfig {
        ScenarioConfig {
            objects: Vec::new(),
            false_positives: FalsePositiveSpec { rate: 0.0, ..ScenarioConfig::preset("default").unwrap().false_positives },
            ..ScenarioConfig::preset("noiseless").unwrap()
        }
    }

    #[test]
    fn zero_objects_give_empty_scenario() {
        let s = generate(&empty_config()).unwrap();
        assert_eq!(s.gt.region_count(), 0);
        assert_eq!(s.gt.frame_count(), 60);
        assert!(s.detections.is_empty());
    }

    #[test]
    fn static_noiseless_rectangle_matches_ground_truth() {
        let mut cfg = empty_config();
        cfg.objects.push(ObjectSpec {
            velocity: [0.0, 0.0],
            score_sigma: 0.0,
            ..anomalous([10.0, 12.0], [0.0, 0.0], [6.0, 4.0], 2.2)
        });
        let s = generate(&cfg).unwrap();
        assert_eq!(s.detections.len(), 60);
        for d in &s.detections {
            assert_eq!(d.bbox, BBox::new(10.0, 12.0, 16.0, 16.0).unwrap());
            assert_eq!(d.bbox, s.gt.frame(d.frame).regions[0].bbox);
            assert_eq!(d.score, 2.2);
        }
    }

    #[test]
    fn presets_are_valid_and_deterministic() {
        for name in ScenarioConfig::PRESETS {
            let cfg = ScenarioConfig::preset(name).unwrap().with_seed(7);
            let a = generate(&cfg).unwrap();
            let b = generate(&cfg).unwrap();
            assert_eq!(a, b, "{name}");
        }
        assert!(ScenarioConfig::preset("nope").is_none());
    }

    #[test]
    fn seeds_change_the_draws() {
        let cfg = ScenarioConfig::preset("default").unwrap();
        let a = generate(&cfg.clone().with_seed(1)).unwrap();
        let b = generate(&cfg.with_seed(2)).unwrap();
        assert_ne!(a.detections, b.detections);
    }

    #[test]
    fn oversized_object_is_infeasible() {
        let mut cfg = empty_config();
        cfg.objects.push(anomalous([0.0, 0.0], [0.0, 0.0], [200.0, 10.0], 2.0));
        assert!(matches!(generate(&cfg), Err(SynthError::Infeasible(_))));
    }

    #[test]
    fn score_separation_is_enforced() {
        let mut cfg = empty_config();
        cfg.objects.push(anomalous([0.0, 0.0], [0.0, 0.0], [5.0, 5.0], 0.5));
        cfg.objects.push(normal([20.0, 20.0], [0.0, 0.0]));
        assert!(matches!(generate(&cfg), Err(SynthError::Invalid(_))));
    }

    #[test]
    fn objects_bounce_inside_the_frame() {
        assert_eq!(reflect(5.0, 10.0), 5.0);
        assert_eq!(reflect(12.0, 10.0), 8.0);
        assert_eq!(reflect(-3.0, 10.0), 3.0);
        let s = generate(&ScenarioConfig::preset("default").unwrap()).unwrap();
        for boxes in &s.object_boxes {
            for b in boxes.iter().flatten() {
                assert!(b.x2() <= 160.0 && b.y2() <= 120.0);
            }
        }
    }

    #[test]
    fn ground_truth_pixels_have_one_owner() {
        let s = generate(&ScenarioConfig::preset("default").unwrap().with_seed(3)).unwrap();
        for f in s.gt.frames() {
            let total: usize = f.regions.iter().map(|r| r.pixels.len()).sum();
            assert_eq!(total, f.mask.count());
        }
        let s = generate(&ScenarioConfig::preset("overlap").unwrap()).unwrap();
        let crossing = s.gt.frames().iter().any(|f| {
            let total: usize = f.regions.iter().map(|r| r.pixels.len()).sum();
            total > f.mask.count()
        });
        assert!(crossing);
        assert_eq!(s.gt.track_ids().len(), 2);
    }

    #[test]
    fn isolated_false_positives_stay_clear() {
        let s = generate(&ScenarioConfig::preset("fig3").unwrap().with_seed(11)).unwrap();
        assert!(!s.false_positives.is_empty());
        for fp in &s.false_positives {
            assert!(fp.lifetime <= 2);
            for t in fp.first..fp.first + fp.lifetime {
                for r in &s.gt.frame(t).regions {
                    assert!(!intersects(&r.bbox, &fp.bbox));
                }
            }
        }
    }

    #[test]
    fn regions_are_connected_shapes() {
        let s = generate(&ScenarioConfig::preset("noiseless").unwrap()).unwrap();
        for f in s.gt.frames() {
            assert_eq!(connected_components(&f.mask).len(), f.regions.len());
        }
    }
}
