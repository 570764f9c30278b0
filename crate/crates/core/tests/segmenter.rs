use tao_core::experiment::{extract, run_clip, BackendSpec, RunSettings};
use tao_core::metrics::pixel_f1;
use tao_core::segment::{bind_prompt, Binding};
use tao_core::synth::{generate, ScenarioConfig};
use tao_core::*;

fn prompts_for(sc: &synth::Scenario, filter: bool) -> Vec<Prompt> {
    let ex = extract(&sc.detections, sc.gt.frame_count(), &PipelineParams::PED2, filter).unwrap();
    aggregate_prompts(&ex.tracked)
}

#[test]
fn drift_without_drift_matches_oracle_on_scenarios() {
    for seed in 0..6 {
        let sc = generate(&ScenarioConfig::preset("default").unwrap().with_seed(seed)).unwrap();
        for filter in [true, false] {
            let prompts = prompts_for(&sc, filter);
            let labels = prompts.iter().map(|p| p.label).collect::<std::collections::BTreeSet<_>>().len();
            let params = DriftParams { p_drift: 0.0, capacity: labels.max(1), seed, ..DriftParams::default() };
            let mut oracle = OracleBackend::new(&sc.gt, params.match_iou);
            let mut drift = DriftBackend::new(&sc.gt, params).unwrap();
            for mode in [TrackMode::Video, TrackMode::FrameIsolated] {
                let a = segment(&mut oracle, sc.gt.clip(), &prompts, mode).unwrap();
                let b = segment(&mut drift, sc.gt.clip(), &prompts, mode).unwrap();
                assert_eq!(a, b, "seed {seed} filter {filter} {mode:?}");
            }
        }
    }
}

#[test]
fn every_backend_covers_the_clip() {
    let sc = generate(&ScenarioConfig::preset("fig3").unwrap().with_seed(4)).unwrap();
    let prompts = prompts_for(&sc, false);
    let mut oracle = OracleBackend::new(&sc.gt, 0.3);
    let mut drift = DriftBackend::new(&sc.gt, DriftParams::default()).unwrap();
    for backend in [&mut oracle as &mut dyn SegmentBackend, &mut drift] {
        for mode in [TrackMode::Video, TrackMode::FrameIsolated] {
            let res = segment(backend, sc.gt.clip(), &prompts, mode).unwrap();
            assert_eq!(res.frame_count(), sc.gt.frame_count());
            assert_eq!(res.union_masks().len(), sc.gt.frame_count());
        }
    }
}

#[test]
fn perfect_prompts_give_perfect_f1() {
    let sc = generate(&ScenarioConfig::preset("default").unwrap().with_seed(1)).unwrap();
    let prompts: Vec<Prompt> = sc
        .gt
        .track_ids()
        .into_iter()
        .filter_map(|id| {
            let f = (0..sc.gt.frame_count()).find(|f| sc.gt.region(*f, id).is_some())?;
            let b = sc.gt.region(f, id)?.bbox;
            Some(Prompt { frame: f, label: id, bbox: b, center: b.center() })
        })
        .collect();
    let mut oracle = OracleBackend::new(&sc.gt, 0.3);
    let res = segment(&mut oracle, sc.gt.clip(), &prompts, TrackMode::Video).unwrap();
    assert_eq!(pixel_f1(&res.union_masks(), &sc.gt.masks()).unwrap(), 1.0);
}

#[test]
fn redundant_prompts_on_one_track_share_the_binding() {
    let sc = generate(&ScenarioConfig::preset("noiseless").unwrap()).unwrap();
    // unfiltered prompts re-label the same object on every save frame
    let prompts = prompts_for(&sc, false);
    let oracle = OracleBackend::new(&sc.gt, 0.3);
    let table = oracle.binding_table(&prompts);
    assert_eq!(table.len(), prompts.len());
    let mut per_track = std::collections::BTreeMap::<u32, usize>::new();
    for (_, _, b) in &table {
        match b {
            Binding::Track(id) => *per_track.entry(*id).or_default() += 1,
            Binding::Unbound(_) => panic!("noiseless prompt left unbound"),
        }
    }
    assert_eq!(per_track.len(), 2);
    assert!(per_track.values().all(|c| *c == 12));
    for p in &prompts {
        assert!(matches!(bind_prompt(&sc.gt, p, 0.3), Binding::Track(_)));
    }
}

#[test]
fn overlapping_tracks_stay_distinct() {
    let sc = generate(&ScenarioConfig::preset("overlap").unwrap()).unwrap();
    let out = run_clip(&sc.gt, &sc.detections, &RunSettings::default()).unwrap();
    assert_eq!(sc.gt.track_ids().len(), 2);
    assert_eq!(out.report.tbdc, Some(1.0));
    let drift = RunSettings { backend: BackendSpec::Drift(DriftParams::default()), ..RunSettings::default() };
    let a = run_clip(&sc.gt, &sc.detections, &drift).unwrap();
    let b = run_clip(&sc.gt, &sc.detections, &drift).unwrap();
    assert_eq!(a, b);
}
