//! Coarse/fine correspondence, groundtruth labels and zoom-in gain targets.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geom::{iou, Detection, GroundTruthObject};
use crate::sim::{run_detector, CostLedger, DetectorModel, Scene};

/// IoU above which a coarse and a fine detection are the same proposal.
pub const MATCH_IOU: f64 = 0.5;
/// IoU at or above which a detection counts as a true object.
pub const LABEL_IOU: f64 = 0.5;

/// Training unit for the gain regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub coarse: Detection,
    pub fine: Option<Detection>,
    pub label_g: u8,
    pub gain_target: f64,
}

impl Correspondence {
    pub fn fine_score(&self) -> f64 {
        self.fine.as_ref().map_or(0.0, |d| d.score)
    }
}

/// Greedy one-to-one matching: candidate pairs with IoU > 0.5 are taken in
/// descending IoU order (ties by coarse index, then fine index) whenever both
/// sides are still free. Returns `(coarse index, fine index)` pairs.
pub fn match_detections(coarse: &[Detection], fine: &[Detection]) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, c) in coarse.iter().enumerate() {
        for (j, f) in fine.iter().enumerate() {
            let v = iou(&c.bbox, &f.bbox);
            if v > MATCH_IOU {
                candidates.push((v, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut coarse_used = vec![false; coarse.len()];
    let mut fine_used = vec![false; fine.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !coarse_used[i] && !fine_used[j] {
            coarse_used[i] = true;
            fine_used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

/// 1 when the detection overlaps some groundtruth box with IoU >= 0.5.
pub fn assign_label(det: &Detection, groundtruth: &[GroundTruthObject]) -> u8 {
    let best = groundtruth.iter().map(|g| iou(&det.bbox, &g.bbox)).fold(0.0, f64::max);
    u8::from(best >= LABEL_IOU)
}

/// `|g − p_l| − |g − p_h|`: positive when the fine score is closer to the label.
pub fn gain_target(g: u8, p_l: f64, p_h: f64) -> f64 {
    let g = g as f64;
    (g - p_l).abs() - (g - p_h).abs()
}

/// Binary entropy of the coarse score in nats, with `0·ln 0 = 0`.
pub fn entropy_gain(p_l: f64) -> f64 {
    let term = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.ln() };
    term(p_l) + term(1.0 - p_l)
}

/// Pairs one scene's coarse and fine detections into correspondences.
/// Unmatched coarse detections are kept with a fine score of 0.
pub fn correspondences(
    coarse: &[Detection],
    fine: &[Detection],
    groundtruth: &[GroundTruthObject],
) -> Vec<Correspondence> {
    let mut fine_of = vec![None; coarse.len()];
    for (i, j) in match_detections(coarse, fine) {
        fine_of[i] = Some(j);
    }
    coarse
        .iter()
        .zip(fine_of)
        .map(|(c, j)| {
            let g = assign_label(c, groundtruth);
            let fine = j.map(|j| fine[j].clone());
            let p_h = fine.as_ref().map_or(0.0, |d| d.score);
            Correspondence { coarse: c.clone(), fine, label_g: g, gain_target: gain_target(g, c.score, p_h) }
        })
        .collect()
}

/// Runs both oracles over every full frame (coarse at `coarse_scale`, fine at
/// full resolution) and collects the correspondences.
pub fn build_training_set(
    scenes: &[Scene],
    coarse_model: &DetectorModel,
    fine_model: &DetectorModel,
    coarse_scale: f64,
) -> Result<Vec<Correspondence>> {
    let mut out = Vec::new();
    for scene in scenes {
        let mut ledger = CostLedger::new();
        let coarse = run_detector(coarse_model, scene, &scene.frame(), coarse_scale, &mut ledger)?;
        let fine = run_detector(fine_model, scene, &scene.frame(), 1.0, &mut ledger)?;
        out.extend(correspondences(&coarse, &fine, &scene.objects));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{BBox, Source};
    use proptest::prelude::*;

    fn det(x: f64, y: f64, w: f64, h: f64, score: f64, source: Source) -> Detection {
        Detection { bbox: BBox::new(x, y, w, h).unwrap(), score, feature: vec![0.0; 4], source }
    }

    fn gt(x: f64, y: f64, w: f64, h: f64) -> GroundTruthObject {
        GroundTruthObject { bbox: BBox::new(x, y, w, h).unwrap(), object_class: "pedestrian".into() }
    }

    #[test]
    fn threshold_matching() {
        // IoU 0.6: overlap 75 of width 100 -> 75/125.
        let c = [det(0.0, 0.0, 100.0, 10.0, 0.5, Source::Coarse)];
        let f = [det(25.0, 0.0, 100.0, 10.0, 0.5, Source::Fine)];
        assert!((iou(&c[0].bbox, &f[0].bbox) - 0.6).abs() < 1e-12);
        assert_eq!(match_detections(&c, &f), vec![(0, 0)]);
        // IoU 0.4: shift by 300/7 leaves an overlap of 400/7 over a union of 1000/7.
        let shift = 100.0 * 3.0 / 7.0;
        let f = [det(shift, 0.0, 100.0, 10.0, 0.5, Source::Fine)];
        assert!((iou(&c[0].bbox, &f[0].bbox) - 0.4).abs() < 1e-9);
        assert!(match_detections(&c, &f).is_empty());
        assert!(match_detections(&[], &f).is_empty());
    }

    /// Enumerates every partial one-to-one assignment over IoU>0.5 edges and
    /// keeps the one a greedy-by-IoU pass produces: the lexicographically
    /// largest sorted IoU sequence.
    fn brute_force(coarse: &[Detection], fine: &[Detection]) -> Vec<(usize, usize)> {
        fn rec(i: usize, c: &[Detection], f: &[Detection], used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, all: &mut Vec<Vec<(usize, usize)>>) {
            if i == c.len() {
                all.push(cur.clone());
                return;
            }
            rec(i + 1, c, f, used, cur, all);
            for j in 0..f.len() {
                if !used[j] && iou(&c[i].bbox, &f[j].bbox) > MATCH_IOU {
                    used[j] = true;
                    cur.push((i, j));
                    rec(i + 1, c, f, used, cur, all);
                    cur.pop();
                    used[j] = false;
                }
            }
        }
        let mut all = Vec::new();
        rec(0, coarse, fine, &mut vec![false; fine.len()], &mut Vec::new(), &mut all);
        let key = |m: &Vec<(usize, usize)>| {
            let mut v: Vec<f64> = m.iter().map(|&(i, j)| iou(&coarse[i].bbox, &fine[j].bbox)).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        };
        let best = all
            .into_iter()
            .max_by(|a, b| {
                let (ka, kb) = (key(a), key(b));
                for (x, y) in ka.iter().zip(&kb) {
                    if x != y {
                        return x.total_cmp(y);
                    }
                }
                ka.len().cmp(&kb.len())
            })
            .unwrap();
        let mut best = best;
        best.sort();
        best
    }

    #[test]
    fn competing_coarse_detections() {
        // A overlaps F with IoU 0.8, B with IoU 0.6.
        let f = det(0.0, 0.0, 100.0, 10.0, 0.9, Source::Fine);
        let a = det(100.0 / 9.0, 0.0, 100.0, 10.0, 0.5, Source::Coarse);
        let b = det(25.0, 0.0, 100.0, 10.0, 0.5, Source::Coarse);
        assert!((iou(&a.bbox, &f.bbox) - 0.8).abs() < 1e-9);
        assert!((iou(&b.bbox, &f.bbox) - 0.6).abs() < 1e-9);
        let coarse = [a, b];
        let fine = [f];
        let got = match_detections(&coarse, &fine);
        assert_eq!(got, vec![(0, 0)]);
        assert_eq!(brute_force(&coarse, &fine), got);
    }

    #[test]
    fn labels() {
        let truth = [gt(0.0, 0.0, 10.0, 20.0)];
        assert_eq!(assign_label(&det(0.0, 0.0, 10.0, 20.0, 0.5, Source::Coarse), &truth), 1);
        assert_eq!(assign_label(&det(50.0, 50.0, 10.0, 20.0, 0.5, Source::Coarse), &truth), 0);
        // Half-width box inside the groundtruth: IoU exactly 100/200.
        let half = det(0.0, 0.0, 5.0, 20.0, 0.5, Source::Coarse);
        assert_eq!(iou(&half.bbox, &truth[0].bbox), 0.5);
        assert_eq!(assign_label(&half, &truth), 1);
    }

    #[test]
    fn gain_target_examples() {
        assert!((gain_target(1, 0.3, 0.9) - 0.6).abs() < 1e-12);
        assert_eq!(gain_target(1, 0.42, 0.42), 0.0);
        assert!((gain_target(0, 0.2, 0.6) + 0.4).abs() < 1e-12);
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy_gain(0.5) - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(entropy_gain(1.0), 0.0);
        assert_eq!(entropy_gain(0.0), 0.0);
    }

    #[test]
    fn correspondence_examples() {
        let truth = [gt(0.0, 0.0, 10.0, 20.0)];
        let coarse = [det(0.0, 0.0, 10.0, 20.0, 0.4, Source::Coarse), det(200.0, 0.0, 10.0, 20.0, 0.7, Source::Coarse)];
        let fine = [det(0.5, 0.0, 10.0, 20.0, 0.8, Source::Fine)];
        let set = correspondences(&coarse, &fine, &truth);
        assert_eq!(set.len(), 2);
        assert_eq!(set[0].label_g, 1);
        assert!((set[0].gain_target - 0.4).abs() < 1e-12);
        assert_eq!(set[1].label_g, 0);
        assert!(set[1].fine.is_none());
        assert!((set[1].gain_target - 0.7).abs() < 1e-12);
        assert!(correspondences(&[], &[], &truth).is_empty());
    }

    #[test]
    fn empty_scenes_give_empty_training_set() {
        let scene = Scene { width: 640, height: 480, objects: vec![], seed: 0 };
        let quiet = |m: DetectorModel| DetectorModel { false_positive_rate: 0.0, ..m };
        let set = build_training_set(&[scene], &quiet(DetectorModel::coarse_default()), &quiet(DetectorModel::fine_default()), 0.5)
            .unwrap();
        assert!(set.is_empty());
    }

    fn arb_det(source: Source) -> impl Strategy<Value = Detection> {
        (0.0..60.0f64, 0.0..60.0f64, 5.0..30.0f64, 5.0..30.0f64)
            .prop_map(move |(x, y, w, h)| det(x, y, w, h, 0.5, source))
    }

    proptest! {
        #[test]
        fn gain_target_bounded_and_antisymmetric(g in 0u8..2, pl in 0.0..=1.0f64, ph in 0.0..=1.0f64) {
            let t = gain_target(g, pl, ph);
            prop_assert!((-1.0..=1.0).contains(&t));
            prop_assert!((t + gain_target(g, ph, pl)).abs() < 1e-12);
        }

        #[test]
        fn entropy_symmetric_nonnegative_max_at_half(p in 0.0..=1.0f64) {
            let e = entropy_gain(p);
            prop_assert!(e >= 0.0);
            prop_assert!((e - entropy_gain(1.0 - p)).abs() < 1e-12);
            prop_assert!(e <= entropy_gain(0.5) + 1e-15);
        }

        #[test]
        fn matching_is_one_to_one_and_greedy(
            coarse in prop::collection::vec(arb_det(Source::Coarse), 0..5),
            fine in prop::collection::vec(arb_det(Source::Fine), 0..5),
        ) {
            let m = match_detections(&coarse, &fine);
            let mut ci: Vec<_> = m.iter().map(|p| p.0).collect();
            let mut fj: Vec<_> = m.iter().map(|p| p.1).collect();
            ci.sort(); ci.dedup();
            fj.sort(); fj.dedup();
            prop_assert_eq!(ci.len(), m.len());
            prop_assert_eq!(fj.len(), m.len());
            for &(i, j) in &m {
                prop_assert!(iou(&coarse[i].bbox, &fine[j].bbox) > MATCH_IOU);
            }
            let mut sorted = m.clone();
            sorted.sort();
            prop_assert_eq!(sorted, brute_force(&coarse, &fine));
        }
    }
}
