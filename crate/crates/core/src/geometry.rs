//! Box and mask geometry.
//!
//! Pixel-cell convention: mask pixel `(x, y)` covers the unit square
//! `[x, x+1) x [y, y+1)`, so the tight box of a pixel set is
//! `[x_min, y_min, x_max + 1, y_max + 1]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::model::{BBox, GroundTruth, MaskPlane, ModelError, Point};

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.x2().min(b.x2()) - a.x1().max(b.x1());
    let ih = a.y2().min(b.y2()) - a.y1().max(b.y1());
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / (a.area() + b.area() - inter)
}

pub fn center(b: &BBox) -> Point {
    b.center()
}

/// Tight box over the set pixels, or `None` for an empty mask.
pub fn mask_to_bbox(m: &MaskPlane) -> Option<BBox> {
    pixels_bbox(m.iter_set(), m.width())
}

pub(crate) fn pixels_bbox(pixels: impl Iterator<Item = usize>, width: u32) -> Option<BBox> {
    let w = width as usize;
    let mut ext: Option<(usize, usize, usize, usize)> = None;
    for p in pixels {
        let (x, y) = (p % w, p / w);
        ext = Some(match ext {
            None => (x, y, x, y),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        });
    }
    ext.map(|(x0, y0, x1, y1)| {
        BBox::new(x0 as f64, y0 as f64, (x1 + 1) as f64, (y1 + 1) as f64)
            .expect("cell boxes are never degenerate")
    })
}

/// An 8-connected component of a mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    /// Row-major pixel indices, ascending.
    pub pixels: Vec<u32>,
    pub bbox: BBox,
}

impl Region {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        let p = parent[i as usize];
        parent[i as usize] = parent[p as usize];
        i = p;
    }
    i
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// 8-connected components, ordered by (min y, min x, first raster pixel).
pub fn connected_components(m: &MaskPlane) -> Vec<Region> {
    let w = m.width() as usize;
    if m.is_empty() {
        return Vec::new();
    }
    const NONE: u32 = u32::MAX;
    let mut label = vec![NONE; m.len()];
    let mut parent: Vec<u32> = Vec::new();

    // two-pass labelling with union-find over provisional labels
    for i in m.iter_set() {
        let (x, y) = (i % w, i / w);
        let mut neighbours = [NONE; 4];
        if x > 0 {
            neighbours[0] = label[i - 1];
        }
        if y > 0 {
            let up = i - w;
            neighbours[1] = label[up];
            if x > 0 {
                neighbours[2] = label[up - 1];
            }
            if x + 1 < w {
                neighbours[3] = label[up + 1];
            }
        }
        let mut cur = NONE;
        for &n in neighbours.iter().filter(|n| **n != NONE) {
            if cur == NONE {
                cur = n;
            } else {
                union(&mut parent, cur, n);
            }
        }
        if cur == NONE {
            cur = parent.len() as u32;
            parent.push(cur);
        }
        label[i] = cur;
    }

    let mut root_slot = vec![NONE; parent.len()];
    let mut regions: Vec<(Vec<u32>, usize, usize)> = Vec::new();
    for i in m.iter_set() {
        let r = find(&mut parent, label[i]) as usize;
        if root_slot[r] == NONE {
            root_slot[r] = regions.len() as u32;
            regions.push((Vec::new(), usize::MAX, usize::MAX));
        }
        let slot = &mut regions[root_slot[r] as usize];
        slot.0.push(i as u32);
        slot.1 = slot.1.min(i / w);
        slot.2 = slot.2.min(i % w);
    }
    regions.sort_by_key(|(px, min_y, min_x)| (*min_y, *min_x, px[0]));
    regions
        .into_iter()
        .map(|(pixels, _, _)| {
            let bbox = pixels_bbox(pixels.iter().map(|p| *p as usize), m.width()).unwrap();
            Region { pixels, bbox }
        })
        .collect()
}

/// Groups boxes connected by pairwise `iou > h` (transitively) and replaces
/// each group by its enclosing box. Repeats until no two output boxes
/// overlap above `h`, which makes the operation idempotent. Output keeps the
/// order of each group's first member.
pub fn merge_overlapping(boxes: &[BBox], h: f64) -> Vec<BBox> {
    let mut current: Vec<BBox> = boxes.to_vec();
    loop {
        let n = current.len();
        let mut parent: Vec<u32> = (0..n as u32).collect();
        let mut merged_any = false;
        for i in 0..n {
            for j in i + 1..n {
                if iou(&current[i], &current[j]) > h {
                    union(&mut parent, i as u32, j as u32);
                    merged_any = true;
                }
            }
        }
        if !merged_any {
            return current;
        }
        let mut slot = vec![u32::MAX; n];
        let mut next: Vec<BBox> = Vec::new();
        for (i, b) in current.iter().enumerate() {
            let r = find(&mut parent, i as u32) as usize;
            if slot[r] == u32::MAX {
                slot[r] = next.len() as u32;
                next.push(*b);
            } else {
                let s = slot[r] as usize;
                next[s] = next[s].enclose(b);
            }
        }
        current = next;
    }
}

/// Mask of pixels whose cell centre lies inside `b` (clipped to the frame).
pub fn rasterize_box(b: &BBox, width: u32, height: u32) -> MaskPlane {
    let mut m = MaskPlane::new(width, height);
    let (x0, x1) = cell_span(b.x1(), b.x2(), width);
    let (y0, y1) = cell_span(b.y1(), b.y2(), height);
    for y in y0..y1 {
        for x in x0..x1 {
            m.set(x, y, true);
        }
    }
    m
}

/// Cells `c` with `lo <= c + 0.5 < hi`, clipped to `[0, limit)`.
pub(crate) fn cell_span(lo: f64, hi: f64, limit: u32) -> (u32, u32) {
    let start = libm::ceil(lo - 0.5).max(0.0);
    let end = libm::ceil(hi - 0.5).max(0.0);
    let start = (start as u64).min(limit as u64) as u32;
    let end = (end as u64).min(limit as u64) as u32;
    (start, end.max(start))
}

/// Builds ground truth from plain anomaly masks: each frame's 8-connected
/// components become regions, linked to the previous frame's tracks by
/// greedy best box IoU `>= link_iou`; unmatched components open new tracks.
pub fn link_ground_truth(masks: &[MaskPlane], link_iou: f64) -> Result<GroundTruth, ModelError> {
    let (w, h) = match masks.first() {
        Some(m) => (m.width(), m.height()),
        None => return Ok(GroundTruth::empty(0, 0, 0)),
    };
    let mut next_id = 0u32;
    let mut prev: Vec<(u32, BBox)> = Vec::new();
    let mut frames = Vec::with_capacity(masks.len());
    for m in masks {
        if m.width() != w || m.height() != h {
            return Err(ModelError::Dimensions {
                expected_w: w,
                expected_h: h,
                got_w: m.width(),
                got_h: m.height(),
            });
        }
        let comps = connected_components(m);
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ci, c) in comps.iter().enumerate() {
            for (pi, (_, pb)) in prev.iter().enumerate() {
                let v = iou(&c.bbox, pb);
                if v >= link_iou {
                    pairs.push((v, ci, pi));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut comp_id: Vec<Option<u32>> = vec![None; comps.len()];
        let mut prev_used = vec![false; prev.len()];
        for (_, ci, pi) in pairs {
            if comp_id[ci].is_none() && !prev_used[pi] {
                comp_id[ci] = Some(prev[pi].0);
                prev_used[pi] = true;
            }
        }
        let mut regions = Vec::with_capacity(comps.len());
        prev.clear();
        for (c, id) in comps.into_iter().zip(comp_id) {
            let id = id.unwrap_or_else(|| {
                next_id += 1;
                next_id - 1
            });
            prev.push((id, c.bbox));
            regions.push((id, c.pixels));
        }
        frames.push(regions);
    }
    GroundTruth::from_regions(w, h, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn iou_basic_cases() {
        let a = b(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&b(0.0, 0.0, 1.0, 1.0), &b(5.0, 5.0, 6.0, 6.0)), 0.0);
        // touching edges share no area
        assert_eq!(iou(&b(0.0, 0.0, 1.0, 1.0), &b(1.0, 0.0, 2.0, 1.0)), 0.0);
        assert!((iou(&a, &b(1.0, 1.0, 3.0, 3.0)) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn center_values() {
        assert_eq!(center(&b(0.0, 0.0, 2.0, 2.0)), Point { x: 1.0, y: 1.0 });
        assert_eq!(center(&b(10.0, 20.0, 30.0, 60.0)), Point { x: 20.0, y: 40.0 });
    }

    #[test]
    fn mask_to_bbox_cases() {
        assert_eq!(mask_to_bbox(&MaskPlane::new(8, 8)), None);
        let mut m = MaskPlane::new(10, 10);
        m.set(3, 7, true);
        assert_eq!(mask_to_bbox(&m).unwrap().to_array(), [3.0, 7.0, 4.0, 8.0]);
    }

    #[test]
    fn diagonal_pixels_form_one_component() {
        let mut m = MaskPlane::new(4, 4);
        m.set(1, 1, true);
        m.set(2, 2, true);
        let cc = connected_components(&m);
        assert_eq!(cc.len(), 1);
        assert_eq!(cc[0].area(), 2);
        assert!(connected_components(&MaskPlane::new(4, 4)).is_empty());
    }

    #[test]
    fn component_order_is_by_min_y_then_min_x() {
        // a "U" whose arms start on row 0 at x=4 and x=6, plus a dot at (0,1)
        let mut m = MaskPlane::new(8, 4);
        for (x, y) in [(4, 0), (4, 1), (5, 2), (6, 1), (6, 0), (0, 1), (1, 3)] {
            m.set(x, y, true);
        }
        let cc = connected_components(&m);
        assert_eq!(cc.len(), 3);
        assert_eq!(cc[0].bbox.to_array(), [4.0, 0.0, 7.0, 3.0]);
        assert_eq!(cc[1].bbox.to_array(), [0.0, 1.0, 1.0, 2.0]);
        assert_eq!(cc[2].bbox.to_array(), [1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn merge_cases() {
        let disjoint = [b(0.0, 0.0, 1.0, 1.0), b(5.0, 5.0, 6.0, 6.0)];
        assert_eq!(merge_overlapping(&disjoint, 0.2), disjoint.to_vec());
        let same = [b(0.0, 0.0, 2.0, 2.0), b(0.0, 0.0, 2.0, 2.0)];
        assert_eq!(merge_overlapping(&same, 0.2), vec![same[0]]);
    }

    #[test]
    fn merge_chain_matches_union_find_oracle() {
        // A~B and B~C above 0.2, A and C disjoint
        let a = b(0.0, 0.0, 4.0, 4.0);
        let bb = b(2.0, 0.0, 6.0, 4.0);
        let c = b(4.5, 0.0, 8.5, 4.0);
        assert!(iou(&a, &bb) > 0.2 && iou(&bb, &c) > 0.2 && iou(&a, &c) == 0.0);
        let out = merge_overlapping(&[a, bb, c], 0.2);
        assert_eq!(out, vec![b(0.0, 0.0, 8.5, 4.0)]);
    }

    #[test]
    fn link_ground_truth_single_moving_rectangle() {
        let masks: Vec<MaskPlane> = (0..12)
            .map(|t| rasterize_box(&b(2.0 + t as f64, 3.0, 8.0 + t as f64, 9.0), 24, 12))
            .collect();
        let gt = link_ground_truth(&masks, 0.3).unwrap();
        assert_eq!(gt.track_ids().into_iter().collect::<Vec<_>>(), vec![0]);
        assert_eq!(gt.region_count(), 12);
        let blank = vec![MaskPlane::new(5, 5); 3];
        assert_eq!(link_ground_truth(&blank, 0.3).unwrap().region_count(), 0);
    }

    #[test]
    fn rasterize_uses_cell_centres() {
        let m = rasterize_box(&b(0.4, 0.6, 2.5, 2.49), 4, 4);
        // x cells 0,1 (centres .5,1.5 ; 2.5 excluded), y cells 1 (centre 1.5)
        let set: Vec<usize> = m.iter_set().collect();
        assert_eq!(set, vec![4, 5]);
    }

    // naive flood fill, independent of the union-find labelling
    fn flood_fill_oracle(m: &MaskPlane) -> Vec<Vec<u32>> {
        let (w, h) = (m.width() as i64, m.height() as i64);
        let mut seen = vec![false; m.len()];
        let mut out = Vec::new();
        for start in 0..m.len() {
            if !m.get_index(start) || seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut q = VecDeque::from([start]);
            seen[start] = true;
            while let Some(p) = q.pop_front() {
                comp.push(p as u32);
                let (x, y) = (p as i64 % w, p as i64 / w);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let ni = (ny * w + nx) as usize;
                        if m.get_index(ni) && !seen[ni] {
                            seen[ni] = true;
                            q.push_back(ni);
                        }
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    proptest! {
        #[test]
        fn components_match_flood_fill(bits in proptest::collection::vec(proptest::bool::weighted(0.35), 32 * 32)) {
            let m = MaskPlane::from_bits(32, 32, &bits).unwrap();
            let got = connected_components(&m);
            let mut got_sets: Vec<Vec<u32>> = got.iter().map(|r| r.pixels.clone()).collect();
            let mut want = flood_fill_oracle(&m);
            // disjoint cover of the set pixels
            let total: usize = got.iter().map(|r| r.area()).sum();
            prop_assert_eq!(total, m.count());
            for r in &got {
                prop_assert_eq!(Some(r.bbox), pixels_bbox(r.pixels.iter().map(|p| *p as usize), 32));
            }
            got_sets.sort();
            want.sort();
            prop_assert_eq!(got_sets, want);
        }

        #[test]
        fn mask_to_bbox_matches_scan(pixels in proptest::collection::vec((0u32..40, 0u32..30), 0..25)) {
            let mut m = MaskPlane::new(40, 30);
            for &(x, y) in &pixels {
                m.set(x, y, true);
            }
            let got = mask_to_bbox(&m);
            if pixels.is_empty() {
                prop_assert!(got.is_none());
            } else {
                let x0 = pixels.iter().map(|p| p.0).min().unwrap() as f64;
                let x1 = pixels.iter().map(|p| p.0).max().unwrap() as f64 + 1.0;
                let y0 = pixels.iter().map(|p| p.1).min().unwrap() as f64;
                let y1 = pixels.iter().map(|p| p.1).max().unwrap() as f64 + 1.0;
                let bb = got.unwrap();
                prop_assert_eq!(bb.to_array(), [x0, y0, x1, y1]);
                for &(x, y) in &pixels {
                    prop_assert!(bb.x1() <= x as f64 && (x + 1) as f64 <= bb.x2());
                    prop_assert!(bb.y1() <= y as f64 && (y + 1) as f64 <= bb.y2());
                }
            }
        }

        #[test]
        fn merge_is_idempotent(raw in proptest::collection::vec((0.0f64..50.0, 0.0f64..50.0, 1.0f64..15.0, 1.0f64..15.0), 0..12), h in 0.05f64..0.9) {
            let boxes: Vec<BBox> = raw.iter().map(|&(x, y, w, hh)| b(x, y, x + w, y + hh)).collect();
            let once = merge_overlapping(&boxes, h);
            let twice = merge_overlapping(&once, h);
            prop_assert_eq!(&once, &twice);
            for bx in &boxes {
                prop_assert!(once.iter().any(|o| o.x1() <= bx.x1() && o.y1() <= bx.y1() && o.x2() >= bx.x2() && o.y2() >= bx.y2()));
            }
        }

        #[test]
        fn iou_symmetric_and_identity(a in (0.0f64..20.0, 0.0f64..20.0, 0.1f64..10.0, 0.1f64..10.0), c in (0.0f64..20.0, 0.0f64..20.0, 0.1f64..10.0, 0.1f64..10.0)) {
            let a = b(a.0, a.1, a.0 + a.2, a.1 + a.3);
            let c = b(c.0, c.1, c.0 + c.2, c.1 + c.3);
            prop_assert_eq!(iou(&a, &c), iou(&c, &a));
            prop_assert_eq!(iou(&a, &a), 1.0);
            let v = iou(&a, &c);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v == 1.0, a == c);
        }
    }
}
