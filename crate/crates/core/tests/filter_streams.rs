use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use tao_core::pipeline::group_by_frame;
use tao_core::synth::{generate, FalsePositiveSpec, NoiseSpec, ObjectSpec, Scenario, ScenarioConfig, Shape};
use tao_core::*;

/// Persistent tracks in separate horizontal bands plus isolated sporadic
/// false positives that never last more than `m - 1` frames.
fn band_config(tracks: usize, frames: usize, fp_rate: f64, seed: u64) -> ScenarioConfig {
    let objects = (0..tracks)
        .map(|i| ObjectSpec {
            start: [10.0 + 30.0 * i as f64, 5.0 + 40.0 * i as f64],
            velocity: [0.6 + 0.2 * i as f64, 0.0],
            size: [14.0, 24.0],
            shape: Shape::Rect,
            anomalous: true,
            score_mean: 2.3,
            score_sigma: 0.15,
            class_label: "cart".into(),
            first_frame: 3 * i,
            last_frame: None,
        })
        .collect();
    ScenarioConfig {
        frames,
        width: 200,
        height: 40 * tracks as u32 + 40,
        objects,
        false_positives: FalsePositiveSpec {
            rate: fp_rate,
            max_lifetime: 2,
            score_mean: 2.0,
            score_sigma: 0.2,
            size_min: 6.0,
            size_max: 14.0,
        },
        noise: NoiseSpec { jitter_sigma: 0.4, miss_prob: 0.0 },
        seed,
        allow_overlap: false,
        isolate_false_positives: true,
    }
}

/// Object index of every detection box, `None` for false positives.
fn owners(sc: &Scenario) -> BTreeMap<(usize, [u64; 4]), Option<usize>> {
    let key = |f: usize, b: &BBox| (f, b.to_array().map(f64::to_bits));
    let mut fp_boxes = BTreeSet::new();
    for fp in &sc.false_positives {
        for f in fp.first..fp.first + fp.lifetime {
            fp_boxes.insert(key(f, &fp.bbox));
        }
    }
    let mut out = BTreeMap::new();
    for d in &sc.detections {
        let k = key(d.frame, &d.bbox);
        let owner = if fp_boxes.contains(&k) {
            None
        } else {
            sc.object_boxes.iter().position(|boxes| boxes[d.frame].is_some_and(|b| iou(&b, &d.bbox) > 0.5))
        };
        out.insert(k, owner);
    }
    out
}

fn forward_support(frames: &[FrameDetections], i: usize, b: &BBox, k: usize, h: f64) -> usize {
    (i + 1..=(i + k).min(frames.len() - 1)).filter(|&q| frames[q].detections.iter().any(|d| iou(b, &d.bbox) > h)).count()
}

fn check_stream(sc: &Scenario, params: &PipelineParams) -> Result<(), TestCaseError> {
    let n = sc.gt.frame_count();
    let frames = threshold_filter(&group_by_frame(&sc.detections, n).unwrap(), params.tau);
    let own = owners(sc);

    // the generator keeps every false positive below the confirmation bar
    for (i, f) in frames.iter().enumerate() {
        for d in &f.detections {
            if own[&(i, d.bbox.to_array().map(f64::to_bits))].is_none() {
                prop_assert!(forward_support(&frames, i, &d.bbox, params.k, params.h) < params.m);
            }
        }
    }

    let (tracked, trace) = robustness_filter(&frames, params).unwrap();
    let mut labels_of: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
    for t in &tracked {
        match own[&(t.frame, t.bbox.to_array().map(f64::to_bits))] {
            Some(o) => {
                labels_of.entry(o).or_default().insert(t.label);
            }
            None => prop_assert!(false, "sporadic box saved at frame {}", t.frame),
        }
    }
    prop_assert_eq!(labels_of.len(), sc.object_boxes.len(), "every persistent track retained");
    let mut all = BTreeSet::new();
    for (o, labels) in &labels_of {
        prop_assert_eq!(labels.len(), 1, "object {} labels {:?}", o, labels);
        prop_assert!(all.insert(*labels.iter().next().unwrap()));
    }

    for (ft, f) in trace.frames.iter().zip(&frames) {
        prop_assert_eq!(ft.inherited.len() + ft.assigned.len() + ft.discarded.len(), f.detections.len());
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn persistent_tracks_survive_and_sporadic_boxes_do_not(
        seed in any::<u64>(),
        tracks in 1usize..4,
        rate in 0.05f64..0.6,
    ) {
        let sc = generate(&band_config(tracks, 90, rate, seed)).unwrap();
        check_stream(&sc, &PipelineParams::PED2)?;
        check_stream(&sc, &PipelineParams::SHTECH)?;
    }

    #[test]
    fn dropping_a_sporadic_box_keeps_every_track(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let sc = generate(&band_config(2, 60, 0.4, seed)).unwrap();
        let own = owners(&sc);
        let sporadic: Vec<usize> = sc
            .detections
            .iter()
            .enumerate()
            .filter(|(_, d)| own[&(d.frame, d.bbox.to_array().map(f64::to_bits))].is_none())
            .map(|(i, _)| i)
            .collect();
        prop_assume!(!sporadic.is_empty());
        let mut reduced = sc.detections.clone();
        reduced.remove(sporadic[pick.index(sporadic.len())]);
        let run = |dets: &[Detection]| {
            let frames = threshold_filter(&group_by_frame(dets, 60).unwrap(), 1.5);
            let (tracked, _) = robustness_filter(&frames, &PipelineParams::PED2).unwrap();
            tracked
                .iter()
                .filter_map(|t| own[&(t.frame, t.bbox.to_array().map(f64::to_bits))])
                .collect::<BTreeSet<usize>>()
        };
        prop_assert!(run(&sc.detections).is_subset(&run(&reduced)));
    }
}

#[test]
fn filter_is_deterministic() {
    let sc = generate(&band_config(3, 120, 0.5, 99)).unwrap();
    let frames = threshold_filter(&group_by_frame(&sc.detections, 120).unwrap(), 1.5);
    let a = robustness_filter(&frames, &PipelineParams::PED2).unwrap();
    let b = robustness_filter(&frames, &PipelineParams::PED2).unwrap();
    assert_eq!(a, b);
}
