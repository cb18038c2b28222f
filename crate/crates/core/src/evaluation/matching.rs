//! Greedy score-ordered matching of detections to ground truth.

use serde::Serialize;

use crate::datamodel::{Detection, GroundTruthInstance};
use crate::geometry::{self, BoundingBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    /// Matched a crowd region: counts as neither TP nor FP.
    Ignored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionMatch {
    /// Index into the detection slice that was matched.
    pub detection: usize,
    pub score: f64,
    pub ground_truth: Option<usize>,
    pub outcome: Outcome,
}

/// Detection indices sorted by descending score, ties kept in input order.
pub(crate) fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// IoU table `ious[d][g]` for detections (already in score order) against
/// ground truth.
pub(crate) fn iou_table(dets: &[&BoundingBox], gts: &[&BoundingBox]) -> Vec<Vec<f64>> {
    dets.iter()
        .map(|d| gts.iter().map(|g| geometry::iou(d, g)).collect())
        .collect()
}

/// Greedy matching at one threshold. `ious` rows follow `order`.
///
/// Each detection takes the unmatched non-crowd ground truth with the
/// highest IoU `>= threshold` (lowest index on ties). Failing that, it may
/// take any crowd region with IoU `>= threshold`, which marks it ignored.
pub(crate) fn greedy_match(
    order: &[usize],
    scores: &[f64],
    ious: &[Vec<f64>],
    crowd: &[bool],
    threshold: f64,
) -> Vec<DetectionMatch> {
    let mut taken = vec![false; crowd.len()];
    order
        .iter()
        .zip(ious)
        .map(|(&d, row)| {
            let mut best: Option<(usize, f64)> = None;
            for (g, &v) in row.iter().enumerate() {
                if crowd[g] || taken[g] || v < threshold {
                    continue;
                }
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
                return DetectionMatch {
                    detection: d,
                    score: scores[d],
                    ground_truth: Some(g),
                    outcome: Outcome::TruePositive,
                };
            }
            let mut best_crowd: Option<(usize, f64)> = None;
            for (g, &v) in row.iter().enumerate() {
                if crowd[g] && v >= threshold && best_crowd.is_none_or(|(_, b)| v > b) {
                    best_crowd = Some((g, v));
                }
            }
            match best_crowd {
                Some((g, _)) => DetectionMatch {
                    detection: d,
                    score: scores[d],
                    ground_truth: Some(g),
                    outcome: Outcome::Ignored,
                },
                None => DetectionMatch {
                    detection: d,
                    score: scores[d],
                    ground_truth: None,
                    outcome: Outcome::FalsePositive,
                },
            }
        })
        .collect()
}

/// Matches detections of one image and one category against its ground
/// truth. The result is in descending score order.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruthInstance],
    threshold: f64,
) -> Vec<DetectionMatch> {
    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    let order = score_order(&scores);
    let det_boxes: Vec<&BoundingBox> = order.iter().map(|&i| &dets[i].bbox).collect();
    let gt_boxes: Vec<&BoundingBox> = gts.iter().map(|g| &g.bbox).collect();
    let crowd: Vec<bool> = gts.iter().map(|g| g.iscrowd).collect();
    let ious = iou_table(&det_boxes, &gt_boxes);
    greedy_match(&order, &scores, &ious, &crowd, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn det(c: [f64; 4], score: f64) -> Detection {
        Detection {
            image_id: 1,
            category_id: 1,
            bbox: BoundingBox::new(c[0], c[1], c[2], c[3]).unwrap(),
            score,
            prompt: None,
        }
    }

    fn gt(c: [f64; 4]) -> GroundTruthInstance {
        GroundTruthInstance {
            id: 1,
            image_id: 1,
            category_id: 1,
            bbox: BoundingBox::new(c[0], c[1], c[2], c[3]).unwrap(),
            attributes: BTreeMap::new(),
            iscrowd: false,
        }
    }

    #[test]
    fn exact_hit_is_true_positive() {
        let m = match_detections(
            &[det([0.0, 0.0, 10.0, 10.0], 0.9)],
            &[gt([0.0, 0.0, 10.0, 10.0])],
            0.5,
        );
        assert_eq!(m[0].outcome, Outcome::TruePositive);
    }

    #[test]
    fn higher_score_claims_the_ground_truth() {
        // IoU 0.9 for the 0.9-score detection, 0.95 for the 0.8-score one.
        let g = gt([0.0, 0.0, 100.0, 10.0]);
        let d1 = det([0.0, 0.0, 90.0, 10.0], 0.9);
        let d2 = det([0.0, 0.0, 95.0, 10.0], 0.8);
        let m = match_detections(&[d2, d1], &[g], 0.5);
        assert_eq!(m[0].detection, 1);
        assert_eq!(m[0].outcome, Outcome::TruePositive);
        assert_eq!(m[1].outcome, Outcome::FalsePositive);
    }

    #[test]
    fn threshold_is_inclusive() {
        // IoU = 45 / 100 = 0.45.
        let g = gt([0.0, 0.0, 100.0, 1.0]);
        let d = det([0.0, 0.0, 45.0, 1.0], 0.7);
        assert_eq!(
            match_detections(std::slice::from_ref(&d), std::slice::from_ref(&g), 0.5)[0].outcome,
            Outcome::FalsePositive
        );
        assert_eq!(
            match_detections(std::slice::from_ref(&d), std::slice::from_ref(&g), 0.4)[0].outcome,
            Outcome::TruePositive
        );
        assert_eq!(
            match_detections(&[d], &[g], 0.45)[0].outcome,
            Outcome::TruePositive
        );
    }

    #[test]
    fn crowd_regions_absorb_detections() {
        let mut crowd = gt([0.0, 0.0, 100.0, 100.0]);
        crowd.iscrowd = true;
        let dets = [
            det([0.0, 0.0, 100.0, 90.0], 0.9),
            det([0.0, 0.0, 100.0, 95.0], 0.8),
        ];
        let m = match_detections(&dets, &[crowd], 0.5);
        assert!(m.iter().all(|x| x.outcome == Outcome::Ignored));
    }

    #[test]
    fn equal_scores_keep_input_order() {
        let g = gt([0.0, 0.0, 10.0, 10.0]);
        let dets = [
            det([0.0, 0.0, 10.0, 9.0], 0.5),
            det([0.0, 0.0, 10.0, 10.0], 0.5),
        ];
        let m = match_detections(&dets, &[g], 0.5);
        assert_eq!(m[0].detection, 0);
        assert_eq!(m[0].outcome, Outcome::TruePositive);
    }
}
