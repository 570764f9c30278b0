use proptest::prelude::*;
use tao_core::geometry::connected_components;
use tao_core::metrics::*;
use tao_core::{BBox, MaskPlane, ScoreMap};

#[derive(Debug, Clone)]
struct Instance {
    w: u32,
    h: u32,
    scores: Vec<Vec<f64>>,
    gt: Vec<Vec<bool>>,
}

impl Instance {
    fn maps(&self) -> Vec<ScoreMap> {
        self.scores.iter().map(|s| ScoreMap::new(self.w, self.h, s.clone()).unwrap()).collect()
    }
    fn masks(&self) -> Vec<MaskPlane> {
        self.gt.iter().map(|g| MaskPlane::from_bits(self.w, self.h, g).unwrap()).collect()
    }
    fn input(&self) -> PixelEvalInput {
        PixelEvalInput::from_scores(&self.maps(), &self.masks()).unwrap()
    }
    fn pooled(&self) -> Vec<(f64, bool)> {
        self.scores.iter().flatten().copied().zip(self.gt.iter().flatten().copied()).collect()
    }
}

fn instance(max_side: u32, max_frames: usize, levels: u32) -> impl Strategy<Value = Instance> {
    (1..=max_side, 1..=max_side, 1..=max_frames, 0.05f64..0.6).prop_flat_map(move |(w, h, f, density)| {
        let n = (w * h) as usize;
        let frame = (
            proptest::collection::vec(0..levels, n),
            proptest::collection::vec(proptest::bool::weighted(density), n),
        );
        proptest::collection::vec(frame, f).prop_map(move |frames| Instance {
            w,
            h,
            scores: frames.iter().map(|(s, _)| s.iter().map(|v| *v as f64 / levels as f64).collect()).collect(),
            gt: frames.into_iter().map(|(_, g)| g).collect(),
        })
    })
}

fn auroc_pairs(px: &[(f64, bool)]) -> Option<f64> {
    let pos: Vec<f64> = px.iter().filter(|p| p.1).map(|p| p.0).collect();
    let neg: Vec<f64> = px.iter().filter(|p| !p.1).map(|p| p.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut twice = 0u64;
    for p in &pos {
        for n in &neg {
            twice += if p > n { 2 } else if p == n { 1 } else { 0 };
        }
    }
    Some(twice as f64 / (2 * pos.len() * neg.len()) as f64)
}

fn distinct_desc(px: &[(f64, bool)]) -> Vec<f64> {
    let mut t: Vec<f64> = px.iter().map(|p| p.0).collect();
    t.sort_by(|a, b| b.total_cmp(a));
    t.dedup();
    t
}

fn ap_sweep(px: &[(f64, bool)]) -> Option<f64> {
    let total = px.iter().filter(|p| p.1).count();
    if total == 0 {
        return None;
    }
    let mut prev = 0.0;
    let mut ap = 0.0;
    for t in distinct_desc(px) {
        let tp = px.iter().filter(|p| p.0 >= t && p.1).count();
        let fp = px.iter().filter(|p| p.0 >= t && !p.1).count();
        let recall = tp as f64 / total as f64;
        ap += (recall - prev) * tp as f64 / (tp + fp) as f64;
        prev = recall;
    }
    Some(ap)
}

fn aupro_sweep(inst: &Instance, limit: f64) -> Option<f64> {
    let masks = inst.masks();
    let comps: Vec<(usize, Vec<u32>)> = masks
        .iter()
        .enumerate()
        .flat_map(|(f, m)| connected_components(m).into_iter().map(move |r| (f, r.pixels)))
        .collect();
    if comps.is_empty() {
        return None;
    }
    let negatives = inst.gt.iter().flatten().filter(|g| !**g).count();
    let mut curve = vec![(0.0, 0.0)];
    for t in distinct_desc(&inst.pooled()) {
        let fp = inst.pooled().iter().filter(|p| p.0 >= t && !p.1).count();
        let pro: f64 = comps
            .iter()
            .map(|(f, px)| px.iter().filter(|p| inst.scores[*f][**p as usize] >= t).count() as f64 / px.len() as f64)
            .sum::<f64>()
            / comps.len() as f64;
        let fpr = if negatives == 0 { 0.0 } else { fp as f64 / negatives as f64 };
        curve.push((fpr, pro));
    }
    // dense resampling of the piecewise-linear curve over [0, limit]
    let at = |x: f64| -> f64 {
        let mut y = curve.last().unwrap().1;
        for w in curve.windows(2) {
            if x >= w[0].0 && x <= w[1].0 {
                y = if w[1].0 == w[0].0 { w[1].1 } else { w[0].1 + (w[1].1 - w[0].1) * (x - w[0].0) / (w[1].0 - w[0].0) };
                break;
            }
        }
        y
    };
    let mut knots: Vec<f64> = curve.iter().map(|c| c.0).filter(|x| *x < limit).collect();
    knots.push(limit);
    knots.dedup();
    let mut area = 0.0;
    for w in knots.windows(2) {
        // vertical jumps share an x: integrate just right of the left knot
        let y0 = curve.iter().filter(|c| c.0 == w[0]).map(|c| c.1).fold(f64::NEG_INFINITY, f64::max).max(at(w[0]));
        area += (w[1] - w[0]) * (y0 + at(w[1])) / 2.0;
    }
    Some(area / limit)
}

fn f1_count(pred: &[Vec<bool>], gt: &[Vec<bool>]) -> Option<f64> {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in pred.iter().flatten().zip(gt.iter().flatten()) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    (tp + fp + fn_ > 0).then(|| 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn auroc_equals_pairwise_count(inst in instance(12, 3, 6)) {
        prop_assert_eq!(pixel_auroc(&inst.input()).ok(), auroc_pairs(&inst.pooled()));
    }

    #[test]
    fn ap_matches_threshold_sweep(inst in instance(12, 3, 9)) {
        match (pixel_ap(&inst.input()).ok(), ap_sweep(&inst.pooled())) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn aupro_matches_threshold_sweep(inst in instance(10, 3, 7), limit in prop::sample::select(vec![0.05, 0.3, 1.0])) {
        match (pixel_aupro(&inst.input(), limit).ok(), aupro_sweep(&inst, limit)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn f1_matches_direct_count(
        pred in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 64), 1..4),
        seed in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 64), 4),
    ) {
        let gt: Vec<Vec<bool>> = seed[..pred.len()].to_vec();
        let pm: Vec<MaskPlane> = pred.iter().map(|b| MaskPlane::from_bits(8, 8, b).unwrap()).collect();
        let gm: Vec<MaskPlane> = gt.iter().map(|b| MaskPlane::from_bits(8, 8, b).unwrap()).collect();
        prop_assert_eq!(pixel_f1(&pm, &gm).ok(), f1_count(&pred, &gt));
    }

    #[test]
    fn auroc_ignores_monotone_transforms(inst in instance(10, 2, 8)) {
        let base = pixel_auroc(&inst.input()).ok();
        let mut t = inst.clone();
        for s in t.scores.iter_mut().flatten() {
            *s = (3.0 * *s).exp() - 7.0;
        }
        prop_assert_eq!(base, pixel_auroc(&t.input()).ok());
    }

    #[test]
    fn auroc_complement_symmetry(inst in instance(10, 2, 8)) {
        let mut flipped = inst.clone();
        for g in flipped.gt.iter_mut().flatten() {
            *g = !*g;
        }
        if let (Some(a), Some(b)) = (pixel_auroc(&inst.input()).ok(), pixel_auroc(&flipped.input()).ok()) {
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_scores_give_prevalence_ap(inst in instance(10, 2, 1)) {
        let px = inst.pooled();
        let q = px.iter().filter(|p| p.1).count() as f64 / px.len() as f64;
        if let Ok(ap) = pixel_ap(&inst.input()) {
            prop_assert!((ap - q).abs() < 1e-12);
        }
    }

    #[test]
    fn single_region_aupro_is_roc_area(w in 3u32..12, h in 3u32..12, x in 0u32..3, y in 0u32..3,
                                       levels in proptest::collection::vec(0u32..6, 144)) {
        let n = (w * h) as usize;
        let mut gt = vec![false; n];
        for yy in y..(y + 2).min(h) {
            for xx in x..(x + 2).min(w) {
                gt[(yy * w + xx) as usize] = true;
            }
        }
        let inst = Instance { w, h, scores: vec![levels[..n].iter().map(|v| *v as f64).collect()], gt: vec![gt] };
        let aupro = pixel_aupro(&inst.input(), 1.0).unwrap();
        let auroc = pixel_auroc(&inst.input()).unwrap();
        prop_assert!((aupro - auroc).abs() < 1e-9, "{} vs {}", aupro, auroc);
    }

    #[test]
    fn binarize_is_strict_per_pixel(vals in proptest::collection::vec(0.0f64..1.0, 48), t in 0.0f64..1.0) {
        let m = binarize(&ScoreMap::new(8, 6, vals.clone()).unwrap(), t);
        for (i, v) in vals.iter().enumerate() {
            prop_assert_eq!(m.get_index(i), *v > t);
        }
    }

    #[test]
    fn point_criteria_monotone_in_alpha(
        boxes in proptest::collection::vec((0.0f64..40.0, 0.0f64..40.0, 2.0f64..12.0, 2.0f64..12.0), 1..6),
        shifts in proptest::collection::vec((-6.0f64..6.0, -6.0f64..6.0), 6),
        a in 0.05f64..0.9,
        b in 0.05f64..0.9,
    ) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let gt: Vec<Vec<(u32, BBox)>> = vec![boxes
            .iter()
            .enumerate()
            .map(|(i, (x, y, w, h))| (i as u32, BBox::new(*x, *y, x + w, y + h).unwrap()))
            .collect()];
        let det: Vec<Vec<DetectedRegion>> = vec![boxes
            .iter()
            .zip(&shifts)
            .map(|((x, y, w, h), (dx, dy))| {
                let (x, y) = ((x + dx).max(0.0), (y + dy).max(0.0));
                DetectedRegion { bbox: BBox::new(x, y, x + w, y + h).unwrap(), score: 1.0 }
            })
            .collect()];
        let at = |alpha| ObjectEvalInput::from_parts(gt.clone(), det.clone(), alpha).unwrap();
        let (r_lo, r_hi) = (rbdc(&at(lo), CriterionMode::Point).unwrap().value, rbdc(&at(hi), CriterionMode::Point).unwrap().value);
        prop_assert!(r_hi <= r_lo);
        let (t_lo, t_hi) = (
            tbdc(&at(lo), 0.5, CriterionMode::Point).unwrap().value,
            tbdc(&at(hi), 0.5, CriterionMode::Point).unwrap().value,
        );
        prop_assert!(t_hi <= t_lo);
    }
}
